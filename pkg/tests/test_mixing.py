"""Spatial (WKV) and channel (feed-forward) mixing sub-blocks."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import check_op_gradients
from urwkv.autodiff import Tensor
from urwkv.mixing import ChannelMixing, SpatialMixing


def _rng():
    return np.random.default_rng(0)


class TestSpatialMixing:
    def test_preserves_shape(self):
        mix = SpatialMixing(_rng(), 8)
        x = Tensor(np.random.default_rng(1).normal(size=(8, 5, 3)))
        assert mix(x).data.shape == (8, 5, 3)

    def test_closed_receptance_gate_silences_output(self):
        mix = SpatialMixing(_rng(), 4)
        mix.receptance.weight.data[:] = -50.0
        x = Tensor(np.abs(np.random.default_rng(2).normal(size=(4, 3, 3))) + 0.5)
        out = mix(x).data
        assert np.max(np.abs(out)) < 1e-12

    def test_identity_projections_single_token(self):
        # one pixel -> one token; bi_wkv degenerates to v, so the whole
        # sub-block reduces to sigmoid(x) * x under identity projections
        mix = SpatialMixing(_rng(), 4)
        for lin in (mix.receptance, mix.key, mix.value, mix.output):
            lin.weight.data[:] = np.eye(4)
        x = np.array([-1.5, -0.2, 0.4, 2.0]).reshape(4, 1, 1)
        out = mix(Tensor(x)).data
        want = x / (1.0 + np.exp(-x)) * 1.0
        assert np.allclose(out, want, atol=1e-15)

    def test_negative_decay_is_clamped_not_fatal(self):
        mix = SpatialMixing(_rng(), 4)
        mix.decay.data[:] = [-0.5, -0.1, 0.2, 0.9]
        x = Tensor(np.random.default_rng(3).normal(size=(4, 2, 2)))
        assert np.all(np.isfinite(mix(x).data))

    def test_gradients(self):
        rng = np.random.default_rng(4)
        mix = SpatialMixing(rng, 4)
        tensors = {name: t for name, t in mix.named_parameters()}
        tensors["x"] = Tensor(rng.normal(size=(4, 3, 2)), requires_grad=True)
        weight = Tensor(rng.normal(size=(4, 3, 2)))
        check_op_gradients(lambda: (mix(tensors["x"]) * weight).sum(), tensors)


class TestChannelMixing:
    def test_preserves_shape(self):
        mix = ChannelMixing(_rng(), 8)
        x = Tensor(np.random.default_rng(5).normal(size=(8, 4, 3)))
        assert mix(x).data.shape == (8, 4, 3)

    def test_hidden_expansion_ratio(self):
        mix = ChannelMixing(_rng(), 4, hidden_ratio=4)
        assert mix.key.weight.data.shape == (4, 16)
        assert mix.value.weight.data.shape == (16, 4)

    def test_nonpositive_keys_zero_the_output(self):
        # squared ReLU removes everything when the key projection is <= 0
        mix = ChannelMixing(_rng(), 4)
        mix.key.weight.data[:] = -1.0
        x = Tensor(np.abs(np.random.default_rng(6).normal(size=(4, 3, 3))) + 0.1)
        assert np.array_equal(mix(x).data, np.zeros((4, 3, 3)))

    def test_squared_relu_values(self):
        z = Tensor(np.array([-3.0, 2.0]))
        sq = z.relu() * z.relu()
        assert np.array_equal(sq.data, [0.0, 4.0])

    def test_gradients(self):
        rng = np.random.default_rng(7)
        mix = ChannelMixing(rng, 4, hidden_ratio=2)
        tensors = {name: t for name, t in mix.named_parameters()}
        tensors["x"] = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
        weight = Tensor(rng.normal(size=(4, 2, 3)))
        check_op_gradients(lambda: (mix(tensors["x"]) * weight).sum(), tensors)


@pytest.mark.parametrize("cls", [SpatialMixing, ChannelMixing])
def test_parameter_names_are_stable(cls):
    names = [n for n, _ in cls(_rng(), 4).named_parameters()]
    assert names[0] == "receptance.weight"
    assert len(names) == len(set(names))
