"""Parameter bookkeeping and analytic MAC counts."""

from __future__ import annotations

import numpy as np

from urwkv.complexity import complexity_report, count_macs, count_params, params_by_group
from urwkv.config import UrwkvConfig
from urwkv.model import RestorationModel


def small_cfg(**overrides):
    cfg = UrwkvConfig(base_channels=8, num_enc_blocks=2, num_dec_blocks=1)
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


def test_groups_partition_the_total():
    model = RestorationModel(small_cfg())
    groups = params_by_group(model)
    assert sum(groups.values()) == count_params(model)
    assert set(groups) == {"stem", "enc_stages", "down", "fusions", "dec_stages", "up", "head"}


def test_params_match_direct_sum():
    model = RestorationModel(small_cfg())
    direct = sum(int(np.prod(p.data.shape)) for _, p in model.named_parameters())
    assert count_params(model) == direct


def test_macs_scale_with_pixel_count():
    cfg = small_cfg()
    quarter = count_macs(cfg, 32, 32)
    full = count_macs(cfg, 64, 64)
    # all dominant terms are per-pixel linear; the LAN modulator adds a tiny
    # constant per block, so the ratio is just under 4
    assert 3.9 < full / quarter <= 4.0


def test_macs_track_the_ablation_switches():
    base = count_macs(small_cfg(), 32, 32)
    assert count_macs(small_cfg(lan_enabled=False), 32, 32) < base
    assert count_macs(small_cfg(ssf_enabled=False), 32, 32) < base
    assert count_macs(small_cfg(token_shift_state="none"), 32, 32) < base
    assert count_macs(small_cfg(num_enc_blocks=3), 32, 32) > base


def test_odd_sizes_count_the_padded_canvas():
    cfg = small_cfg()
    assert count_macs(cfg, 61, 61) == count_macs(cfg, 64, 64)


def test_report_bundles_everything():
    report = complexity_report(small_cfg(), 32, 32)
    assert report["input"] == [3, 32, 32]
    assert report["params"] == count_params(RestorationModel(small_cfg()))
    assert report["macs"] == count_macs(small_cfg(), 32, 32)
