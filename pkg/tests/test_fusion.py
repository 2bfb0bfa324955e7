"""Encoder-state alignment, gate prediction, and skip fusion."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import check_op_gradients
from urwkv.autodiff import Tensor
from urwkv.fusion import FusionGate, SkipFusion, align_state_planes


def _states(rng, spatial=8):
    # mirrors the widths/resolutions of a 3-stage encoder
    return [
        Tensor(rng.normal(size=(4, spatial, spatial)), requires_grad=True),
        Tensor(rng.normal(size=(8, spatial // 2, spatial // 2)), requires_grad=True),
        Tensor(rng.normal(size=(16, spatial // 4, spatial // 4)), requires_grad=True),
    ]


class TestAlignStatePlanes:
    def test_constant_states_survive_any_resampling(self):
        states = [
            Tensor(np.full((4, 8, 8), 3.0)),
            Tensor(np.full((8, 4, 4), -1.0)),
            Tensor(np.full((16, 2, 2), 0.25)),
        ]
        for target in (8, 4, 2):
            aligned = align_state_planes(states, target, target).data
            assert aligned.shape == (3, target, target)
            for i, c in enumerate((3.0, -1.0, 0.25)):
                assert np.allclose(aligned[i], c)

    def test_downscale_averages_quadrants(self):
        plane = np.zeros((1, 4, 4))
        plane[0, :2, :2] = 1.0
        plane[0, :2, 2:] = 2.0
        plane[0, 2:, :2] = 3.0
        plane[0, 2:, 2:] = 4.0
        aligned = align_state_planes([Tensor(plane)], 2, 2).data
        assert np.array_equal(aligned[0], [[1.0, 2.0], [3.0, 4.0]])

    def test_identity_target_is_channel_mean_only(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(6, 5, 7))
        aligned = align_state_planes([Tensor(x)], 5, 7).data
        assert np.allclose(aligned[0], x.mean(axis=0))

    def test_non_integer_ratio_rejected(self):
        with pytest.raises(ValueError, match="pool"):
            align_state_planes([Tensor(np.zeros((2, 6, 6)))], 4, 4)
        with pytest.raises(ValueError, match="upscale"):
            align_state_planes([Tensor(np.zeros((2, 3, 3)))], 7, 7)


class TestFusionGate:
    def test_zero_weights_give_half_open_gate(self):
        gate = FusionGate(np.random.default_rng(1), 3)
        for _, p in gate.named_parameters():
            p.data[:] = 0.0
        out = gate(Tensor(np.random.default_rng(2).normal(size=(3, 4, 4)))).data
        assert np.allclose(out, 0.5)

    def test_gate_bounds(self):
        rng = np.random.default_rng(3)
        gate = FusionGate(rng, 3)
        out = gate(Tensor(rng.normal(0.0, 5.0, (3, 6, 6)))).data
        assert out.shape == (1, 6, 6)
        assert np.all(out > 0.0) and np.all(out < 1.0)

    def test_large_bias_opens_gate(self):
        gate = FusionGate(np.random.default_rng(4), 3)
        gate.project.bias.data[:] = 30.0
        out = gate(Tensor(np.zeros((3, 4, 4)))).data
        assert np.allclose(out, 1.0, atol=1e-12)


class TestSkipFusion:
    def test_gated_magnitude_never_exceeds_skip(self):
        rng = np.random.default_rng(5)
        states = _states(rng)
        fusion = SkipFusion(rng, 16, 3, gated=True)
        gate = fusion.gate(align_state_planes(states, 2, 2)).data
        skip = rng.normal(size=(16, 2, 2))
        assert np.all(np.abs(skip * gate) <= np.abs(skip))

    def test_closed_gate_annihilates_encoder_contribution(self):
        rng = np.random.default_rng(6)
        states = _states(rng)
        fusion = SkipFusion(rng, 16, 3, gated=True)
        fusion.gate.project.bias.data[:] = -50.0  # sigmoid -> 0
        dec = Tensor(rng.normal(size=(16, 2, 2)))
        skip_a = Tensor(rng.normal(size=(16, 2, 2)))
        skip_b = Tensor(rng.normal(size=(16, 2, 2)))
        out_a = fusion(dec, skip_a, states).data
        out_b = fusion(dec, skip_b, states).data
        assert np.allclose(out_a, out_b, atol=1e-18)

    def test_open_gate_is_plain_concat_projection(self):
        rng = np.random.default_rng(7)
        states = _states(rng)
        gated = SkipFusion(rng, 16, 3, gated=True)
        gated.gate.project.bias.data[:] = 50.0  # sigmoid -> 1
        plain = SkipFusion(rng, 16, 3, gated=False)
        plain.project.weight.data[:] = gated.project.weight.data
        plain.project.bias.data[:] = gated.project.bias.data
        dec = Tensor(rng.normal(size=(16, 2, 2)))
        skip = Tensor(rng.normal(size=(16, 2, 2)))
        assert np.allclose(gated(dec, skip, states).data, plain(dec, skip, states).data)

    def test_gradient_reaches_all_encoder_states(self):
        rng = np.random.default_rng(8)
        states = _states(rng)
        fusion = SkipFusion(rng, 16, 3, gated=True)
        dec = Tensor(rng.normal(size=(16, 2, 2)), requires_grad=True)
        skip = Tensor(rng.normal(size=(16, 2, 2)), requires_grad=True)
        fusion(dec, skip, states).sum().backward()
        for s in states:
            assert s.grad is not None and np.any(s.grad != 0.0)
        assert np.any(dec.grad != 0.0) and np.any(skip.grad != 0.0)

    def test_ungated_ignores_encoder_states_entirely(self):
        rng = np.random.default_rng(9)
        states = _states(rng)
        fusion = SkipFusion(rng, 16, 3, gated=False)
        dec = Tensor(rng.normal(size=(16, 2, 2)))
        skip = Tensor(rng.normal(size=(16, 2, 2)))
        fusion(dec, skip, states).sum().backward()
        for s in states:
            assert s.grad is None

    def test_trace_counts_gate_evaluations(self):
        rng = np.random.default_rng(10)
        states = _states(rng)
        fusion = SkipFusion(rng, 16, 3, gated=True)
        dec = Tensor(rng.normal(size=(16, 2, 2)))
        trace = {}
        fusion(dec, dec, states, trace=trace)
        fusion(dec, dec, states, trace=trace)
        assert trace == {"gate_evals": 2}

    def test_gradients(self):
        rng = np.random.default_rng(11)
        states = [
            Tensor(rng.normal(size=(2, 4, 4)), requires_grad=True),
            Tensor(rng.normal(size=(4, 2, 2)), requires_grad=True),
            Tensor(rng.normal(size=(8, 1, 1)), requires_grad=True),
        ]
        fusion = SkipFusion(rng, 8, 3, gated=True)
        tensors = {name: p for name, p in fusion.named_parameters()}
        tensors["dec"] = Tensor(rng.normal(size=(8, 2, 2)), requires_grad=True)
        tensors["skip"] = Tensor(rng.normal(size=(8, 2, 2)), requires_grad=True)
        for i, s in enumerate(states):
            tensors[f"enc{i}"] = s
        weight = Tensor(rng.normal(size=(8, 2, 2)))

        def build():
            out = fusion(tensors["dec"], tensors["skip"], states)
            return (out * weight).sum()

        check_op_gradients(build, tensors)
