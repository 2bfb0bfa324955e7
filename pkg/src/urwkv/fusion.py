"""Encoder-to-decoder skip fusion gated by all encoder stage states.

Each encoder state is reduced to a single luminance plane (channel mean),
resampled to the decoder stage's resolution (mean pooling down, bilinear
up), and the three aligned planes are fused through multi-scale convolutions
into one sigmoid gate. The gate reweights the matching skip feature before
it is concatenated with the decoder feature and projected back down, so the
decoder sees the skip through a mask informed by the whole encoding
trajectory, not just the one stage it mirrors.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, avg_pool2d, concat, upsample_bilinear
from .nn import Conv2d, Module

__all__ = ["align_state_planes", "FusionGate", "SkipFusion"]


def _resample_plane(plane: Tensor, h: int, w: int) -> Tensor:
    ph, pw = plane.data.shape[1], plane.data.shape[2]
    if (ph, pw) == (h, w):
        return plane
    if ph > h:
        if ph % h or pw % w or ph // h != pw // w:
            raise ValueError(f"cannot pool {ph}x{pw} to {h}x{w}")
        return avg_pool2d(plane, ph // h)
    if h % ph or w % pw or h // ph != w // pw:
        raise ValueError(f"cannot upscale {ph}x{pw} to {h}x{w}")
    return upsample_bilinear(plane, h // ph)


def align_state_planes(states: list[Tensor], h: int, w: int) -> Tensor:
    """Channel-mean each state and resample to h x w; stack to (len, h, w)."""
    planes = [_resample_plane(s.mean(axis=0, keepdims=True), h, w) for s in states]
    return concat(planes, axis=0)


class FusionGate(Module):
    """Multi-scale conv stack mapping aligned planes to a sigmoid gate."""

    def __init__(self, rng: np.random.Generator, n_states: int, branch_width: int = 4):
        self.conv_k1 = Conv2d(rng, n_states, branch_width, 1)
        self.conv_k3 = Conv2d(rng, n_states, branch_width, 3, padding=1)
        self.conv_k5 = Conv2d(rng, n_states, branch_width, 5, padding=2)
        self.project = Conv2d(rng, 3 * branch_width, 1, 1)

    def __call__(self, planes: Tensor) -> Tensor:
        multi = concat([self.conv_k1(planes), self.conv_k3(planes), self.conv_k5(planes)], axis=0)
        return self.project(multi).sigmoid()


class SkipFusion(Module):
    """Fuse one decoder input with its mirrored encoder state.

    With gating disabled the skip is concatenated as-is (the plain U-Net
    baseline); either way a 1x1 projection folds 2F channels back to F.
    """

    def __init__(self, rng: np.random.Generator, channels: int, n_encoder_states: int, gated: bool):
        self.gated = gated
        if gated:
            self.gate = FusionGate(rng, n_encoder_states)
        self.project = Conv2d(rng, 2 * channels, channels, 1)

    def __call__(
        self,
        decoder_feat: Tensor,
        skip_feat: Tensor,
        encoder_states: list[Tensor],
        trace: dict | None = None,
    ) -> Tensor:
        if self.gated:
            h, w = decoder_feat.data.shape[1], decoder_feat.data.shape[2]
            gate = self.gate(align_state_planes(encoder_states, h, w))
            skip_feat = skip_feat * gate  # (1,H,W) broadcasts over channels
            if trace is not None:
                trace["gate_evals"] = trace.get("gate_evals", 0) + 1
        return self.project(concat([skip_feat, decoder_feat], axis=0))
