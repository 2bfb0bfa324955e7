"""Pure-numpy bidirectional WKV scans. Fallback for the compiled kernel.

Both backends implement the same algorithm, kept in lockstep:

Forward. For token t and channel c the output is a softmax-style average of
all values, weighted by exp(k_i - (|t - i| - 1) * lam) for i != t and by
exp(u + k_t) for the token itself, with lam = w / T. Two running scans (one
per direction) carry the off-diagonal sums in stabilized form (a, b, p) where
the true pair is (a * e^p, b * e^p) and p is the running max exponent, so no
intermediate ever overflows. The per-token results combine under a shared
max q_t; the denominator mantissa is at least 1 by construction.

Backward. Writing G_t = gy_t / den_t * e^{-q_t} and P_t = G_t * y_t, every
gradient is a combination of decayed cross-sums of G and P over i != t plus
a diagonal term. The cross-sums are computed with the same stabilized-scan
trick in both directions; the distance-weighted variants needed for d/dw
share the running max with the plain ones because adding a zero-weight term
never changes the exponent bound. All final exponents are provably <= 0
(q_t dominates every row exponent), so the assembled gradients are finite.
"""

from __future__ import annotations

import numpy as np


def wkv_forward(k: np.ndarray, v: np.ndarray, w: np.ndarray, u: np.ndarray):
    """Run the bidirectional scan.

    k, v: (T, C) float64. w, u: (C,) float64, w >= 0.
    Returns (y, den, q): outputs, denominator mantissas, combine exponents.
    The latter two are consumed by wkv_backward.
    """
    t_len, c = k.shape
    lam = w / t_len

    a = np.zeros(c)
    b = np.zeros(c)
    p = np.full(c, -np.inf)
    al = np.empty((t_len, c))
    bl = np.empty((t_len, c))
    pl = np.empty((t_len, c))
    for t in range(t_len):
        al[t] = a
        bl[t] = b
        pl[t] = p
        pn = np.maximum(p - lam, k[t])
        e_old = np.exp(p - lam - pn)
        e_new = np.exp(k[t] - pn)
        a = a * e_old + v[t] * e_new
        b = b * e_old + e_new
        p = pn

    a = np.zeros(c)
    b = np.zeros(c)
    p = np.full(c, -np.inf)
    ar = np.empty((t_len, c))
    br = np.empty((t_len, c))
    pr = np.empty((t_len, c))
    for t in range(t_len - 1, -1, -1):
        ar[t] = a
        br[t] = b
        pr[t] = p
        pn = np.maximum(p - lam, k[t])
        e_old = np.exp(p - lam - pn)
        e_new = np.exp(k[t] - pn)
        a = a * e_old + v[t] * e_new
        b = b * e_old + e_new
        p = pn

    diag = u[None, :] + k
    q = np.maximum(np.maximum(pl, pr), diag)
    el = np.exp(pl - q)
    er = np.exp(pr - q)
    ed = np.exp(diag - q)
    num = al * el + ar * er + v * ed
    den = bl * el + br * er + ed
    return num / den, den, q


def wkv_backward(
    k: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    y: np.ndarray,
    den: np.ndarray,
    q: np.ndarray,
    gy: np.ndarray,
):
    """Gradients of the scan. Returns (gk, gv, gw, gu)."""
    t_len, c = k.shape
    lam = w / t_len
    beta = gy / den  # G_t mantissa at exponent -q_t

    # scans over t > j (right) and t < j (left); four accumulators each:
    # plain and distance-weighted sums of G and of P = G * y
    def run(direction: int):
        sg = np.zeros(c)
        sgw = np.zeros(c)
        sp = np.zeros(c)
        spw = np.zeros(c)
        rho = np.full(c, -np.inf)
        out_sg = np.empty((t_len, c))
        out_sgw = np.empty((t_len, c))
        out_sp = np.empty((t_len, c))
        out_spw = np.empty((t_len, c))
        out_rho = np.empty((t_len, c))
        order = range(t_len - 1, -1, -1) if direction < 0 else range(t_len)
        for t in order:
            out_sg[t] = sg
            out_sgw[t] = sgw
            out_sp[t] = sp
            out_spw[t] = spw
            out_rho[t] = rho
            rn = np.maximum(rho - lam, -q[t])
            e_old = np.exp(rho - lam - rn)
            e_new = np.exp(-q[t] - rn)
            # existing terms move one step further out, so their distance
            # weight grows by one plain copy; the new term enters at d = 0
            sgw = (sgw + sg) * e_old
            spw = (spw + sp) * e_old
            sg = sg * e_old + beta[t] * e_new
            sp = sp * e_old + beta[t] * y[t] * e_new
            rho = rn
        return out_sg, out_sgw, out_sp, out_spw, out_rho

    sg_r, sgw_r, sp_r, spw_r, rho_r = run(-1)
    sg_l, sgw_l, sp_l, spw_l, rho_l = run(+1)

    ek_r = np.exp(k + rho_r)  # k_j + rho <= 0 always, see module docstring
    ek_l = np.exp(k + rho_l)
    cross_g = sg_r * ek_r + sg_l * ek_l
    cross_p = sp_r * ek_r + sp_l * ek_l
    cross_gw = sgw_r * ek_r + sgw_l * ek_l
    cross_pw = spw_r * ek_r + spw_l * ek_l
    diag = np.exp(u[None, :] + k - q) * beta

    gv = cross_g + diag
    gk = v * cross_g - cross_p + diag * (v - y)
    gu = (diag * (v - y)).sum(axis=0)
    gw = -(v * cross_gw - cross_pw).sum(axis=0) / t_len
    return gk, gv, gw, gu
