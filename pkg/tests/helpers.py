"""Shared test oracles: finite differences and a quadratic-time WKV reference."""

from __future__ import annotations

import numpy as np

from urwkv.autodiff import Tensor


def rel_error(got: np.ndarray, want: np.ndarray, floor: float = 1e-12) -> float:
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    return float(np.linalg.norm(got - want) / max(np.linalg.norm(want), floor))


def finite_diff(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to arr, in place."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def check_op_gradients(build, tensors: dict[str, Tensor], h: float = 1e-5, tol: float = 1e-4) -> dict[str, float]:
    """Compare autodiff and central-difference gradients of a scalar graph.

    ``build`` constructs the scalar loss Tensor from scratch (it must read
    the current ``.data`` of the given tensors). Returns per-tensor relative
    errors and asserts each is under ``tol``.
    """
    for t in tensors.values():
        t.zero_grad()
    loss = build()
    loss.backward()
    errors = {}
    for name, t in tensors.items():
        assert t.grad is not None, f"no gradient reached {name}"
        fd = finite_diff(lambda: float(build().data), t.data, h=h)
        err = rel_error(t.grad, fd)
        errors[name] = err
        assert err < tol, f"gradient mismatch for {name}: rel err {err:.3e}"
    return errors


def naive_wkv(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """O(T^2) reference: per-token stabilized softmax over all positions."""
    t_len, _ = k.shape
    lam = w / t_len
    y = np.empty_like(v)
    for t in range(t_len):
        logits = np.empty_like(k)
        for i in range(t_len):
            logits[i] = (u + k[t]) if i == t else k[i] - (abs(t - i) - 1) * lam
        m = logits.max(axis=0)
        weights = np.exp(logits - m)
        y[t] = (weights * v).sum(axis=0) / weights.sum(axis=0)
    return y


def ssim_oracle(a, b, taps, k1: float, k2: float) -> float:
    """O(n^2 k^2) windowed SSIM reference, no separability tricks."""
    win = np.outer(taps, taps)
    k = taps.size
    c1, c2 = k1 * k1, k2 * k2
    scores = []
    for ch in range(a.shape[0]):
        x, y = a[ch], b[ch]
        vals = []
        for i in range(x.shape[0] - k + 1):
            for j in range(x.shape[1] - k + 1):
                px = x[i : i + k, j : j + k]
                py = y[i : i + k, j : j + k]
                mx = (win * px).sum()
                my = (win * py).sum()
                vx = (win * px * px).sum() - mx * mx
                vy = (win * py * py).sum() - my * my
                cov = (win * px * py).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2))
                )
        scores.append(np.mean(vals))
    return float(np.mean(scores))
