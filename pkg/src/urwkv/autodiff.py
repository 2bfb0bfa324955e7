"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray plus an optional backward closure and parent
links. Operations record themselves onto the implicit graph as they execute,
so creation order is a valid topological order; ``backward()`` replays the
graph once in reverse. Gradients accumulate into ``.grad`` until explicitly
cleared, which is what lets one loss share subexpressions with another.

Only the operations the restoration network needs are implemented. All
compute is float64; shapes follow the CHW convention for images and (tokens,
channels) for sequence data.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "make_op",
    "concat",
    "matmul",
    "conv2d",
    "avg_pool2d",
    "upsample_nearest2",
    "upsample_bilinear",
    "pad_reflect_br",
    "crop_tl",
    "to_tokens",
    "from_tokens",
]

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, metrics)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Tensor:
    """float64 array with reverse-mode gradient support."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # ------------------------------------------------------------------
    # bookkeeping

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``.grad``.

        Only defined for scalar outputs. Repeated calls keep accumulating;
        call ``zero_grad`` on the parameters between steps.
        """
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen = {id(self)}
        stack: list[tuple[Tensor, Iterable[Tensor]]] = [(self, iter(self._parents))]
        while stack:
            node, parents = stack[-1]
            advanced = False
            for p in parents:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(p._parents)))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += 1.0
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # operator sugar

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # elementwise conveniences
    def abs(self):
        return absolute(self)

    def exp(self):
        return exp(self)

    def sqrt(self):
        return sqrt(self)

    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def clamp(self, lo: float, hi: float):
        return clamp(self, lo, hi)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def _coerce(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the source shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def make_op(
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], None],
) -> Tensor:
    """Construct an op result node. Public hook for custom operations.

    ``backward`` receives the output gradient and must route gradients to the
    parents via ``Tensor`` accumulation (see ``accumulate_grad``). The node is
    a plain constant when grad recording is off or no parent needs gradients.
    """
    needs = _GRAD_ENABLED and any(p.requires_grad or p._backward is not None for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad`` (no-op for constants). For custom op authors."""
    _accumulate(t, g)


# ----------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return make_op(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return make_op(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return make_op(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return make_op(out_data, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, -g)

    return make_op(-a.data, (a,), backward)


def absolute(a: Tensor) -> Tensor:
    def backward(g):
        _accumulate(a, g * np.sign(a.data))

    return make_op(np.abs(a.data), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return make_op(out_data, (a,), backward)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        _accumulate(a, g * (0.5 / out_data))

    return make_op(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return make_op(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # piecewise form avoids exp overflow for large |x|
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return make_op(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0))

    return make_op(out_data, (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(a.data, lo, hi)

    def backward(g):
        # boundary values pass gradient; only strictly clipped ones block it
        mask = (a.data >= lo) & (a.data <= hi)
        _accumulate(a, g * mask)

    return make_op(out_data, (a,), backward)


# ----------------------------------------------------------------------
# reductions and reshaping


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
            return
        gg = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            shape = [1 if i in axes else n for i, n in enumerate(a.data.shape)]
            gg = g.reshape(shape)
        _accumulate(a, np.broadcast_to(gg, a.data.shape).copy())

    return make_op(out_data, (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax % a.data.ndim]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return make_op(a.data.reshape(shape), (a,), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = np.argsort(axes)

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return make_op(a.data.transpose(axes), (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return make_op(out_data, tensors, backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        gin = np.zeros_like(a.data)
        gin[idx] = g
        _accumulate(a, gin)

    return make_op(a.data[idx].copy(), (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    out_data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return make_op(out_data, (a, b), backward)


# ----------------------------------------------------------------------
# spatial ops (CHW layout)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding=0) -> Tensor:
    """2-D convolution (cross-correlation) on a CHW image.

    ``w`` has shape (c_out, c_in, kh, kw). ``padding`` is an int or (ph, pw)
    pair of symmetric zero pads. The output extent (H + 2p - k) / s + 1 must
    be integral, otherwise the geometry is rejected.
    """
    x, w = _coerce(x), _coerce(w)
    if isinstance(padding, int):
        ph, pw = padding, padding
    else:
        ph, pw = padding
    c_in, h_in, w_in = x.data.shape
    c_out, c_in_w, kh, kw = w.data.shape
    if c_in != c_in_w:
        raise ValueError(f"conv2d channel mismatch: input {c_in}, weight {c_in_w}")
    hp, wp = h_in + 2 * ph, w_in + 2 * pw
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ValueError(f"conv2d geometry not integral: input {h_in}x{w_in} pad ({ph},{pw}) k ({kh},{kw}) stride {stride}")
    h_out = (hp - kh) // stride + 1
    w_out = (wp - kw) // stride + 1

    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (c_in, h_out, w_out, kh, kw)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * kh * kw, h_out * w_out)
    wmat = w.data.reshape(c_out, c_in * kh * kw)
    out_data = (wmat @ cols).reshape(c_out, h_out, w_out)
    if b is not None:
        out_data = out_data + b.data[:, None, None]

    def backward(g):
        gm = g.reshape(c_out, h_out * w_out)
        _accumulate(w, (gm @ cols.T).reshape(w.data.shape))
        if b is not None:
            _accumulate(b, g.sum(axis=(1, 2)))
        gcols = (wmat.T @ gm).reshape(c_in, kh, kw, h_out, w_out)
        gxp = np.zeros((c_in, hp, wp))
        for i in range(kh):
            for j in range(kw):
                gxp[:, i : i + stride * h_out : stride, j : j + stride * w_out : stride] += gcols[:, i, j]
        gx = gxp[:, ph : ph + h_in, pw : pw + w_in] if (ph or pw) else gxp
        _accumulate(x, gx)

    parents = (x, w) if b is None else (x, w, b)
    return make_op(out_data, parents, backward)


def avg_pool2d(x: Tensor, factor: int) -> Tensor:
    """Non-overlapping mean pooling by an integer factor; extents must divide."""
    c, h, w = x.data.shape
    if h % factor or w % factor:
        raise ValueError(f"avg_pool2d: {h}x{w} not divisible by {factor}")
    ho, wo = h // factor, w // factor
    out_data = x.data.reshape(c, ho, factor, wo, factor).mean(axis=(2, 4))

    def backward(g):
        gx = np.repeat(np.repeat(g, factor, axis=1), factor, axis=2) / (factor * factor)
        _accumulate(x, gx)

    return make_op(out_data, (x,), backward)


def upsample_nearest2(x: Tensor) -> Tensor:
    out_data = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def backward(g):
        c, h2, w2 = g.shape
        _accumulate(x, g.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4)))

    return make_op(out_data, (x,), backward)


def _bilinear_taps(n_out: int, n_in: int, factor: float):
    # half-pixel centers, edges clamped (align_corners=False convention)
    src = (np.arange(n_out) + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    return i0, i1, frac


def upsample_bilinear(x: Tensor, factor: int) -> Tensor:
    """Bilinear upscale by an integer factor with half-pixel alignment."""
    c, h, w = x.data.shape
    ho, wo = h * factor, w * factor
    r0, r1, rf = _bilinear_taps(ho, h, factor)
    c0, c1, cf = _bilinear_taps(wo, w, factor)
    rows = x.data[:, r0, :] * (1.0 - rf)[None, :, None] + x.data[:, r1, :] * rf[None, :, None]
    out_data = rows[:, :, c0] * (1.0 - cf)[None, None, :] + rows[:, :, c1] * cf[None, None, :]

    def backward(g):
        grows = np.zeros((c, ho, w))
        np.add.at(grows, (slice(None), slice(None), c0), g * (1.0 - cf)[None, None, :])
        np.add.at(grows, (slice(None), slice(None), c1), g * cf[None, None, :])
        gx = np.zeros((c, h, w))
        np.add.at(gx, (slice(None), r0, slice(None)), grows * (1.0 - rf)[None, :, None])
        np.add.at(gx, (slice(None), r1, slice(None)), grows * rf[None, :, None])
        _accumulate(x, gx)

    return make_op(out_data, (x,), backward)


def pad_reflect_br(x: Tensor, ph: int, pw: int) -> Tensor:
    """Reflect-pad a CHW image on the bottom/right edges only."""
    c, h, w = x.data.shape
    if ph >= h or pw >= w:
        raise ValueError("reflect pad must be smaller than the image extent")
    out_data = np.pad(x.data, ((0, 0), (0, ph), (0, pw)), mode="reflect")
    map_h = np.concatenate([np.arange(h), h - 2 - np.arange(ph)])
    map_w = np.concatenate([np.arange(w), w - 2 - np.arange(pw)])

    def backward(g):
        gh = np.zeros((c, h, w + pw))
        np.add.at(gh, (slice(None), map_h, slice(None)), g)
        gx = np.zeros((c, h, w))
        np.add.at(gx, (slice(None), slice(None), map_w), gh)
        _accumulate(x, gx)

    return make_op(out_data, (x,), backward)


def crop_tl(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w region of a CHW image."""
    def backward(g):
        gx = np.zeros_like(x.data)
        gx[:, :h, :w] = g
        _accumulate(x, gx)

    return make_op(x.data[:, :h, :w].copy(), (x,), backward)


def to_tokens(x: Tensor) -> Tensor:
    """CHW image -> (H*W, C) token matrix, row-major spatial order."""
    c, h, w = x.data.shape
    return reshape(transpose(x, (1, 2, 0)), (h * w, c))


def from_tokens(tok: Tensor, h: int, w: int) -> Tensor:
    """(H*W, C) token matrix -> CHW image."""
    t, c = tok.data.shape
    if t != h * w:
        raise ValueError(f"token count {t} does not match {h}x{w}")
    return transpose(reshape(tok, (h, w, c)), (2, 0, 1))
