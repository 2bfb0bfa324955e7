"""Token shifting, intra-stage state aggregation, and the two mixing blocks.

Q-shift splits channels into four quarters and substitutes each quarter with
a one-pixel neighbor (left, right, up, down); pixels shifted in from outside
the image are zero. Before shifting, the current feature map is blended with
an exponential moving aggregate of the previous sub-block states from the
same stage, so tokens mix with a memory of the whole stage rather than only
the immediately preceding state.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, accumulate_grad, from_tokens, make_op, to_tokens
from .nn import Linear, Module
from .wkv import bi_wkv

__all__ = ["q_shift", "IntraStateEma", "token_shift", "SpatialMixing", "ChannelMixing"]


def q_shift(x: Tensor) -> Tensor:
    """Quarter-wise neighbor substitution on a CHW map. C must divide by 4."""
    c, h, w = x.data.shape
    if c % 4:
        raise ValueError(f"q_shift needs channels divisible by 4, got {c}")
    qc = c // 4
    out = np.zeros_like(x.data)
    out[0 * qc : 1 * qc, :, 1:] = x.data[0 * qc : 1 * qc, :, :-1]  # from left
    out[1 * qc : 2 * qc, :, :-1] = x.data[1 * qc : 2 * qc, :, 1:]  # from right
    out[2 * qc : 3 * qc, 1:, :] = x.data[2 * qc : 3 * qc, :-1, :]  # from above
    out[3 * qc : 4 * qc, :-1, :] = x.data[3 * qc : 4 * qc, 1:, :]  # from below

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[0 * qc : 1 * qc, :, :-1] = g[0 * qc : 1 * qc, :, 1:]
        gx[1 * qc : 2 * qc, :, 1:] = g[1 * qc : 2 * qc, :, :-1]
        gx[2 * qc : 3 * qc, :-1, :] = g[2 * qc : 3 * qc, 1:, :]
        gx[3 * qc : 4 * qc, 1:, :] = g[3 * qc : 4 * qc, :-1, :]
        accumulate_grad(x, gx)

    return make_op(out, (x,), backward)


class IntraStateEma:
    """Running aggregate of sub-block states within one stage.

    mode "multi": exponential moving average over every absorbed state with
    blend factor alpha (the stored state is the running aggregate).
    mode "single": blend with the raw previous state only.
    mode "none": pass-through, no state kept.

    The aggregate participates in the autodiff graph, so gradient flows back
    into earlier sub-blocks through the stored states.
    """

    def __init__(self, alpha: float, mode: str = "multi"):
        if mode not in ("none", "single", "multi"):
            raise ValueError(f"unknown state mode {mode!r}")
        self.alpha = alpha
        self.mode = mode
        self.aggregate: Tensor | None = None
        self.count = 0

    def absorb(self, x: Tensor) -> Tensor:
        self.count += 1
        if self.mode == "none":
            return x
        prev = self.aggregate
        if prev is None or self.alpha == 1.0:
            blended = x
        else:
            blended = x * self.alpha + prev * (1.0 - self.alpha)
        self.aggregate = x if self.mode == "single" else blended
        return blended


def token_shift(x: Tensor, ema: IntraStateEma, use_qshift: bool, trace: dict | None = None) -> Tensor:
    """State absorption followed by (optional) Q-shift: the block's shift step."""
    blended = ema.absorb(x)
    if trace is not None:
        trace[f"absorb_{ema.mode}"] = trace.get(f"absorb_{ema.mode}", 0) + 1
    if not use_qshift:
        return blended
    if trace is not None:
        trace["qshift_calls"] = trace.get("qshift_calls", 0) + 1
    return q_shift(blended)


class SpatialMixing(Module):
    """Global token mixing: gated bidirectional WKV over flattened pixels."""

    def __init__(self, rng: np.random.Generator, channels: int):
        self.receptance = Linear(rng, channels, channels, bias=False)
        self.key = Linear(rng, channels, channels, bias=False)
        self.value = Linear(rng, channels, channels, bias=False)
        self.output = Linear(rng, channels, channels, bias=False)
        # per-channel decay (clamped nonnegative in forward) and self-bonus;
        # deterministic ramps so no two channels start identical
        self.decay = Tensor(np.linspace(0.3, 1.3, channels), requires_grad=True)
        self.bonus = Tensor(np.linspace(-0.3, 0.3, channels), requires_grad=True)

    def __call__(self, x_shifted: Tensor) -> Tensor:
        c, h, w = x_shifted.data.shape
        tok = to_tokens(x_shifted)
        r = self.receptance(tok)
        k = self.key(tok)
        v = self.value(tok)
        attn = bi_wkv(k, v, self.decay.abs(), self.bonus)
        out = self.output(r.sigmoid() * attn)
        return from_tokens(out, h, w)


class ChannelMixing(Module):
    """Per-token feed-forward with squared-ReLU and a receptance gate."""

    def __init__(self, rng: np.random.Generator, channels: int, hidden_ratio: int = 4):
        hidden = channels * hidden_ratio
        self.receptance = Linear(rng, channels, channels, bias=False)
        self.key = Linear(rng, channels, hidden, bias=False)
        self.value = Linear(rng, hidden, channels, bias=False)
        self.output = Linear(rng, channels, channels, bias=False)

    def __call__(self, x_shifted: Tensor) -> Tensor:
        c, h, w = x_shifted.data.shape
        tok = to_tokens(x_shifted)
        r = self.receptance(tok)
        k = self.key(tok).relu()
        inner = self.value(k * k)
        out = self.output(r.sigmoid() * inner)
        return from_tokens(out, h, w)
