"""Encoder-decoder restoration network.

Three encoder stages (widths C, 2C, 4C; downsampling between them) feed
three mirrored decoder stages through gated skip fusion; the deepest encoder
output is the first decoder input directly, there is no extra bottleneck.
Every stage output is appended to a cross-stage state registry that the
luminance modulators read, so later normalizations see the brightness
trajectory of everything computed so far. The network predicts a residual
on top of the input and clamps to [0, 1].

Inputs of arbitrary size >= 4 are reflect-padded to multiples of 4 on the
bottom/right and cropped back after decoding.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, crop_tl, pad_reflect_br, upsample_nearest2
from .config import UrwkvConfig
from .fusion import SkipFusion
from .luminance_norm import LuminanceNorm
from .mixing import ChannelMixing, IntraStateEma, SpatialMixing, token_shift
from .nn import Conv2d, Module

__all__ = ["RestorationBlock", "Stage", "RestorationModel"]

_N_ENC_STAGES = 3
_N_DEC_STAGES = 3


class RestorationBlock(Module):
    """Pre-norm residual pair: global spatial mixing, then channel mixing."""

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        state_count: int,
        lum_width: int,
        cfg: UrwkvConfig,
    ):
        self.norm_spatial = LuminanceNorm(rng, channels, state_count, lum_width, cfg.lan_enabled)
        self.spatial = SpatialMixing(rng, channels)
        self.norm_channel = LuminanceNorm(rng, channels, state_count, lum_width, cfg.lan_enabled)
        self.channel = ChannelMixing(rng, channels, cfg.channel_hidden_ratio)
        self.use_qshift = cfg.token_shift_qshift

    def forward(
        self,
        x: Tensor,
        registry: list[Tensor],
        ema_spatial: IntraStateEma,
        ema_channel: IntraStateEma,
        trace: dict | None,
    ) -> Tensor:
        shifted = token_shift(self.norm_spatial(x, registry, trace), ema_spatial, self.use_qshift, trace)
        x = x + self.spatial(shifted)
        shifted = token_shift(self.norm_channel(x, registry, trace), ema_channel, self.use_qshift, trace)
        return x + self.channel(shifted)


class Stage(Module):
    """A run of blocks sharing fresh per-stage state aggregates."""

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        n_blocks: int,
        state_count: int,
        lum_width: int,
        cfg: UrwkvConfig,
    ):
        self.blocks = [
            RestorationBlock(rng, channels, state_count, lum_width, cfg) for _ in range(n_blocks)
        ]
        self.alpha = cfg.alpha
        self.state_mode = cfg.token_shift_state

    def forward(self, x: Tensor, registry: list[Tensor], trace: dict | None) -> Tensor:
        # intra-stage memories start empty at every stage boundary
        ema_spatial = IntraStateEma(self.alpha, self.state_mode)
        ema_channel = IntraStateEma(self.alpha, self.state_mode)
        for block in self.blocks:
            x = block.forward(x, registry, ema_spatial, ema_channel, trace)
        return x


class _UpsampleConv(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int):
        self.conv = Conv2d(rng, c_in, c_out, 3, padding=1)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv(upsample_nearest2(x))


class RestorationModel(Module):
    def __init__(self, config: UrwkvConfig):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config.base_channels
        lum_width = 4 * c  # widest stage; luminance vectors pad up to this
        widths = (c, 2 * c, 4 * c)

        self.stem = Conv2d(rng, 3, c, 3, padding=1)
        self.enc_stages = [
            Stage(rng, widths[s], config.num_enc_blocks, s + 1, lum_width, config)
            for s in range(_N_ENC_STAGES)
        ]
        self.down = [
            Conv2d(rng, widths[0], widths[1], 4, stride=2, padding=1),
            Conv2d(rng, widths[1], widths[2], 4, stride=2, padding=1),
        ]
        self.fusions = [
            SkipFusion(rng, widths[2 - d], _N_ENC_STAGES, config.ssf_enabled)
            for d in range(_N_DEC_STAGES)
        ]
        self.dec_stages = [
            Stage(rng, widths[2 - d], config.num_dec_blocks, _N_ENC_STAGES + d + 1, lum_width, config)
            for d in range(_N_DEC_STAGES)
        ]
        self.up = [
            _UpsampleConv(rng, widths[2], widths[1]),
            _UpsampleConv(rng, widths[1], widths[0]),
        ]
        # near-identity start: keep the predicted residual small at init so
        # the output clamp does not saturate on dark inputs
        self.head = Conv2d(rng, c, 3, 3, padding=1, weight_scale=0.1)

    # ------------------------------------------------------------------

    @staticmethod
    def _pad_input(image: Tensor) -> tuple[Tensor, int, int]:
        c, h, w = image.data.shape
        if c != 3:
            raise ValueError(f"expected a 3-channel image, got {c}")
        if h < 4 or w < 4:
            raise ValueError(f"image extent must be at least 4, got {h}x{w}")
        ph = (-h) % 4
        pw = (-w) % 4
        padded = pad_reflect_br(image, ph, pw) if (ph or pw) else image
        return padded, h, w

    def encode(self, image: Tensor, trace: dict | None = None):
        """Run the encoder half; returns (stage outputs, state registry)."""
        padded, _, _ = self._pad_input(image)
        return self._encode_padded(padded, trace)

    def _encode_padded(self, padded: Tensor, trace: dict | None):
        registry: list[Tensor] = []
        feats: list[Tensor] = []
        x = self.stem(padded)
        for s, stage in enumerate(self.enc_stages):
            x = stage.forward(x, registry, trace)
            feats.append(x)
            registry.append(x)
            if s < _N_ENC_STAGES - 1:
                x = self.down[s](x)
        return feats, registry

    def _decode_padded(self, padded: Tensor, feats: list[Tensor], registry: list[Tensor], trace: dict | None) -> Tensor:
        x = feats[-1]
        for d, stage in enumerate(self.dec_stages):
            x = self.fusions[d](x, feats[_N_ENC_STAGES - 1 - d], feats, trace)
            x = stage.forward(x, registry, trace)
            registry.append(x)
            if d < _N_DEC_STAGES - 1:
                x = self.up[d](x)
        return (padded + self.head(x)).clamp(0.0, 1.0)

    def forward(self, image: Tensor, trace: dict | None = None) -> Tensor:
        """Restore one CHW image in [0, 1]; output matches the input size."""
        padded, h, w = self._pad_input(image)
        feats, registry = self._encode_padded(padded, trace)
        out = self._decode_padded(padded, feats, registry, trace)
        if trace is not None:
            trace["registry"] = registry
            trace["registry_len"] = len(registry)
        if out.data.shape[1:] != (h, w):
            out = crop_tl(out, h, w)
        return out

    __call__ = forward
