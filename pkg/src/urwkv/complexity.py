"""Analytic parameter and multiply-accumulate counts.

Parameter counts come straight from the live model (sum of parameter tensor
sizes, grouped by name prefix). MAC counts are analytic, mirroring the
forward pass layer by layer with these formulas:

    conv2d        c_out * c_in * kh * kw * h_out * w_out
    linear        tokens * c_in * c_out
    wkv scan      WKV_MACS_PER_ELEM * tokens * channels
                  (two stabilized directional scans plus the combine;
                  exp/max counted as one MAC each)
    layer norm    6 * elements (mean, center, square, mean, scale, shift)
    state blend   2 * elements per absorbed state
    gates/acts    1 * elements

Elementwise activations and the Q-shift copies are negligible next to the
projections but are included where listed so the totals are reproducible.
"""

from __future__ import annotations

from .config import UrwkvConfig
from .model import RestorationModel

__all__ = ["WKV_MACS_PER_ELEM", "count_params", "params_by_group", "count_macs", "complexity_report"]

WKV_MACS_PER_ELEM = 32


def count_params(model: RestorationModel) -> int:
    return model.num_parameters()


def params_by_group(model: RestorationModel) -> dict[str, int]:
    """Parameter totals keyed by top-level module attribute."""
    groups: dict[str, int] = {}
    for name, p in model.named_parameters():
        top = name.split(".", 1)[0]
        groups[top] = groups.get(top, 0) + p.size
    return groups


def _conv_macs(c_in: int, c_out: int, k: int, h_out: int, w_out: int) -> int:
    return c_out * c_in * k * k * h_out * w_out


def _lan_macs(channels: int, state_count: int, lum_width: int, h: int, w: int, modulated: bool) -> int:
    macs = 6 * channels * h * w
    if not modulated:
        return macs
    t = state_count
    macs += t * channels  # luminance pooling reads every element once
    macs += t * t * (1 + 3 + 5) * lum_width  # multi-kernel 1-D convs
    macs += 3 * t * lum_width  # fuse projection
    macs += lum_width * channels + channels * channels  # the two dense layers
    return macs


def _block_macs(channels: int, h: int, w: int, cfg: UrwkvConfig, state_count: int, lum_width: int) -> int:
    tokens = h * w
    hidden = channels * cfg.channel_hidden_ratio
    macs = 2 * _lan_macs(channels, state_count, lum_width, h, w, cfg.lan_enabled)
    if cfg.token_shift_state != "none":
        macs += 2 * 2 * channels * tokens  # state blend per sub-block
    # spatial mixing: four square projections, the scan, the gate
    macs += 4 * tokens * channels * channels
    macs += WKV_MACS_PER_ELEM * tokens * channels
    macs += 2 * tokens * channels
    # channel mixing: gate, expand, contract, out, squared-relu
    macs += tokens * (2 * channels * channels + 2 * channels * hidden)
    macs += 3 * tokens * channels
    return macs


def _gate_macs(n_states: int, branch: int, h: int, w: int) -> int:
    macs = _conv_macs(n_states, branch, 1, h, w)
    macs += _conv_macs(n_states, branch, 3, h, w)
    macs += _conv_macs(n_states, branch, 5, h, w)
    macs += _conv_macs(3 * branch, 1, 1, h, w)
    return macs


def count_macs(config: UrwkvConfig, height: int, width: int) -> int:
    """Forward-pass multiply-accumulates for one image of the given size."""
    config.validate()
    c = config.base_channels
    lum = 4 * c
    h = height + ((-height) % 4)
    w = width + ((-width) % 4)
    widths = (c, 2 * c, 4 * c)
    sizes = ((h, w), (h // 2, w // 2), (h // 4, w // 4))

    macs = _conv_macs(3, c, 3, h, w)  # stem
    for s in range(3):
        sh, sw = sizes[s]
        macs += config.num_enc_blocks * _block_macs(widths[s], sh, sw, config, s + 1, lum)
        if s < 2:
            dh, dw = sizes[s + 1]
            macs += _conv_macs(widths[s], widths[s + 1], 4, dh, dw)
    for d in range(3):
        sh, sw = sizes[2 - d]
        fw = widths[2 - d]
        if config.ssf_enabled:
            macs += _gate_macs(3, 4, sh, sw) + fw * sh * sw
        macs += _conv_macs(2 * fw, fw, 1, sh, sw)  # skip projection
        macs += config.num_dec_blocks * _block_macs(fw, sh, sw, config, 4 + d, lum)
        if d < 2:
            uh, uw = sizes[1 - d]
            macs += _conv_macs(fw, widths[1 - d], 3, uh, uw)
    macs += _conv_macs(c, 3, 3, h, w)  # head
    return macs


def complexity_report(config: UrwkvConfig, height: int, width: int) -> dict:
    model = RestorationModel(config)
    return {
        "params": count_params(model),
        "params_by_group": params_by_group(model),
        "macs": count_macs(config, height, width),
        "input": [3, height, width],
    }
