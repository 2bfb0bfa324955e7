"""Luminance-adaptive normalization.

Channel-axis layer norm whose scale is steered by the brightness of the
current feature map and of every earlier inter-stage state. Each state is
summarized by global average pooling into a per-channel luminance vector,
zero-padded to a shared width, and the stack of vectors (chronological,
current last) is fused by multi-scale 1-D convolutions into a single scale
offset in (-1, 1). Dark inputs therefore get a different effective gain than
bright ones, instead of the one fixed affine of plain layer norm.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, concat
from .nn import Conv2d, Linear, Module, normal_param, ones_param, zeros_param

__all__ = ["luminance_vector", "LuminanceNorm"]

_EPS = 1e-5


def luminance_vector(x: Tensor, width: int) -> Tensor:
    """Global average pool to (1, width), zero-padded past the channel count."""
    c = x.data.shape[0]
    if c > width:
        raise ValueError(f"channel count {c} exceeds luminance width {width}")
    vec = x.mean(axis=(1, 2)).reshape(1, c)
    if c == width:
        return vec
    return concat([vec, Tensor(np.zeros((1, width - c)))], axis=1)


class LuminanceNorm(Module):
    """Layer norm over the channel axis with an optional luminance modulator.

    ``state_count`` fixes how many luminance vectors the modulator consumes
    (previous inter-stage states plus the current map), which in turn fixes
    the 1-D conv weight shapes; it is a property of the stage position.
    With ``modulated=False`` this is a plain layer norm with learned affine.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        state_count: int,
        lum_width: int,
        modulated: bool = True,
    ):
        self.channels = channels
        self.state_count = state_count
        self.lum_width = lum_width
        self.modulated = modulated
        self.gamma = ones_param((channels,))
        self.beta = zeros_param((channels,))
        if modulated:
            t = state_count
            self.conv_k1 = Conv2d(rng, t, t, (1, 1), padding=(0, 0))
            self.conv_k3 = Conv2d(rng, t, t, (1, 3), padding=(0, 1))
            self.conv_k5 = Conv2d(rng, t, t, (1, 5), padding=(0, 2))
            self.fuse = Conv2d(rng, 3 * t, 1, (1, 1))
            self.mlp_in = Linear(rng, lum_width, channels)
            self.mlp_out = Linear(rng, channels, channels)

    def _scale_offset(self, x: Tensor, registry: list[Tensor]) -> Tensor:
        rows = [luminance_vector(m, self.lum_width) for m in registry]
        rows.append(luminance_vector(x, self.lum_width))
        stack = concat(rows, axis=0).reshape(self.state_count, 1, self.lum_width)
        multi = concat([self.conv_k1(stack), self.conv_k3(stack), self.conv_k5(stack)], axis=0)
        fused = self.fuse(multi).reshape(1, self.lum_width)
        hidden = self.mlp_in(fused).relu()
        return self.mlp_out(hidden).tanh().reshape(self.channels)

    def __call__(self, x: Tensor, registry: list[Tensor], trace: dict | None = None) -> Tensor:
        c = x.data.shape[0]
        if c != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {c}")
        mu = x.mean(axis=0, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=0, keepdims=True)
        normed = centered / (var + _EPS).sqrt()
        if self.modulated:
            if len(registry) + 1 != self.state_count:
                raise ValueError(
                    f"modulator built for {self.state_count} states, got {len(registry)} previous"
                )
            gain = self.gamma + self._scale_offset(x, registry)
            if trace is not None:
                trace["lan_modulated"] = trace.get("lan_modulated", 0) + 1
        else:
            gain = self.gamma
            if trace is not None:
                trace["lan_plain"] = trace.get("lan_plain", 0) + 1
        return normed * gain.reshape(c, 1, 1) + self.beta.reshape(c, 1, 1)
