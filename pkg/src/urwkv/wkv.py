"""Bidirectional WKV attention: backend dispatch and autodiff binding.

The compiled kernel (`urwkv._wkv_kernel`, Cython) is used when the extension
built; otherwise the numpy fallback runs the identical algorithm. Set
``URWKV_WKV_BACKEND=python`` or ``compiled`` to force a choice, e.g. for
benchmarking (``benchmarks/bench_wkv.py``).
"""

from __future__ import annotations

import os

import numpy as np

from . import _wkv_numpy
from .autodiff import Tensor, accumulate_grad, make_op

try:
    from . import _wkv_kernel

    HAVE_COMPILED = True
except ImportError:  # extension not built; numpy fallback covers it
    _wkv_kernel = None
    HAVE_COMPILED = False


def _select_backend(name: str | None):
    name = name or os.environ.get("URWKV_WKV_BACKEND") or ("compiled" if HAVE_COMPILED else "python")
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled WKV kernel requested but the extension is not built")
        return _wkv_kernel
    if name == "python":
        return _wkv_numpy
    raise ValueError(f"unknown WKV backend {name!r} (expected 'compiled' or 'python')")


def active_backend() -> str:
    return "compiled" if _select_backend(None) is _wkv_kernel and HAVE_COMPILED else "python"


def wkv_forward(k, v, w, u, backend: str | None = None):
    """Raw scan on ndarrays; returns (y, den, q). See _wkv_numpy for the math."""
    return _select_backend(backend).wkv_forward(k, v, w, u)


def wkv_backward(k, v, w, u, y, den, q, gy, backend: str | None = None):
    return _select_backend(backend).wkv_backward(k, v, w, u, y, den, q, gy)


def bi_wkv(k: Tensor, v: Tensor, w: Tensor, u: Tensor, backend: str | None = None) -> Tensor:
    """Graph op: token-parallel recurrence output, (T, C) -> (T, C).

    ``w`` must already be nonnegative (callers clamp via ``.abs()`` so the
    clamp itself is differentiable). A single token degenerates to y = v
    exactly: both directional sums are empty and the self term cancels.
    """
    if k.data.shape != v.data.shape or k.data.ndim != 2:
        raise ValueError("bi_wkv expects matching (T, C) key/value matrices")
    if w.data.shape != (k.data.shape[1],) or u.data.shape != w.data.shape:
        raise ValueError("bi_wkv decay/bonus must be per-channel vectors")
    if np.any(w.data < 0):
        raise ValueError("bi_wkv decay must be nonnegative; clamp upstream")
    impl = _select_backend(backend)
    y, den, q = impl.wkv_forward(k.data, v.data, w.data, u.data)

    def backward(g):
        gk, gv, gw, gu = impl.wkv_backward(k.data, v.data, w.data, u.data, y, den, q, g)
        accumulate_grad(k, gk)
        accumulate_grad(v, gv)
        accumulate_grad(w, gw)
        accumulate_grad(u, gu)

    return make_op(y, (k, v, w, u), backward)
