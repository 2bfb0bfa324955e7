# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled bidirectional WKV scans.

Same algorithm as _wkv_numpy (that module's docstring documents the
stabilized-scan math); loops are token-outer, channel-inner over contiguous
rows. Keep the two implementations in lockstep: the test suite cross-checks
them to near machine precision.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fmax, INFINITY

cnp.import_array()


def wkv_forward(cnp.ndarray k_arr, cnp.ndarray v_arr, cnp.ndarray w_arr, cnp.ndarray u_arr):
    cdef double[:, ::1] k = np.ascontiguousarray(k_arr, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(v_arr, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef Py_ssize_t t_len = k.shape[0]
    cdef Py_ssize_t c_len = k.shape[1]

    y_out = np.empty((t_len, c_len), dtype=np.float64)
    den_out = np.empty((t_len, c_len), dtype=np.float64)
    q_out = np.empty((t_len, c_len), dtype=np.float64)
    al_out = np.empty((t_len, c_len), dtype=np.float64)
    bl_out = np.empty((t_len, c_len), dtype=np.float64)
    pl_out = np.empty((t_len, c_len), dtype=np.float64)
    cdef double[:, ::1] y = y_out
    cdef double[:, ::1] den = den_out
    cdef double[:, ::1] q = q_out
    cdef double[:, ::1] al = al_out
    cdef double[:, ::1] bl = bl_out
    cdef double[:, ::1] pl = pl_out

    state_a = np.zeros(c_len, dtype=np.float64)
    state_b = np.zeros(c_len, dtype=np.float64)
    state_p = np.full(c_len, -INFINITY, dtype=np.float64)
    cdef double[::1] a = state_a
    cdef double[::1] b = state_b
    cdef double[::1] p = state_p

    cdef Py_ssize_t t, c
    cdef double lam, pn, e_old, e_new, dg, qv, el, er, ed

    # left-to-right scan: store state before absorbing token t
    for t in range(t_len):
        for c in range(c_len):
            lam = w[c] / t_len
            al[t, c] = a[c]
            bl[t, c] = b[c]
            pl[t, c] = p[c]
            pn = fmax(p[c] - lam, k[t, c])
            e_old = exp(p[c] - lam - pn)
            e_new = exp(k[t, c] - pn)
            a[c] = a[c] * e_old + v[t, c] * e_new
            b[c] = b[c] * e_old + e_new
            p[c] = pn

    # right-to-left scan, combining on the fly (right state is transient)
    for c in range(c_len):
        a[c] = 0.0
        b[c] = 0.0
        p[c] = -INFINITY
    for t in range(t_len - 1, -1, -1):
        for c in range(c_len):
            lam = w[c] / t_len
            dg = u[c] + k[t, c]
            qv = fmax(fmax(pl[t, c], p[c]), dg)
            el = exp(pl[t, c] - qv)
            er = exp(p[c] - qv)
            ed = exp(dg - qv)
            den[t, c] = bl[t, c] * el + b[c] * er + ed
            y[t, c] = (al[t, c] * el + a[c] * er + v[t, c] * ed) / den[t, c]
            q[t, c] = qv
            pn = fmax(p[c] - lam, k[t, c])
            e_old = exp(p[c] - lam - pn)
            e_new = exp(k[t, c] - pn)
            a[c] = a[c] * e_old + v[t, c] * e_new
            b[c] = b[c] * e_old + e_new
            p[c] = pn

    return y_out, den_out, q_out


def wkv_backward(
    cnp.ndarray k_arr,
    cnp.ndarray v_arr,
    cnp.ndarray w_arr,
    cnp.ndarray u_arr,
    cnp.ndarray y_arr,
    cnp.ndarray den_arr,
    cnp.ndarray q_arr,
    cnp.ndarray gy_arr,
):
    cdef double[:, ::1] k = np.ascontiguousarray(k_arr, dtype=np.float64)
    cdef double[:, ::1] v = np.ascontiguousarray(v_arr, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(w_arr, dtype=np.float64)
    cdef double[::1] u = np.ascontiguousarray(u_arr, dtype=np.float64)
    cdef double[:, ::1] y = np.ascontiguousarray(y_arr, dtype=np.float64)
    cdef double[:, ::1] den = np.ascontiguousarray(den_arr, dtype=np.float64)
    cdef double[:, ::1] q = np.ascontiguousarray(q_arr, dtype=np.float64)
    cdef double[:, ::1] gy = np.ascontiguousarray(gy_arr, dtype=np.float64)
    cdef Py_ssize_t t_len = k.shape[0]
    cdef Py_ssize_t c_len = k.shape[1]

    gk_out = np.empty((t_len, c_len), dtype=np.float64)
    gv_out = np.empty((t_len, c_len), dtype=np.float64)
    gw_out = np.zeros(c_len, dtype=np.float64)
    gu_out = np.zeros(c_len, dtype=np.float64)
    cdef double[:, ::1] gk = gk_out
    cdef double[:, ::1] gv = gv_out
    cdef double[::1] gw = gw_out
    cdef double[::1] gu = gu_out

    # right-direction stored scans (sums over t > j)
    sg_r_out = np.empty((t_len, c_len), dtype=np.float64)
    sgw_r_out = np.empty((t_len, c_len), dtype=np.float64)
    sp_r_out = np.empty((t_len, c_len), dtype=np.float64)
    spw_r_out = np.empty((t_len, c_len), dtype=np.float64)
    rho_r_out = np.empty((t_len, c_len), dtype=np.float64)
    cdef double[:, ::1] sg_r = sg_r_out
    cdef double[:, ::1] sgw_r = sgw_r_out
    cdef double[:, ::1] sp_r = sp_r_out
    cdef double[:, ::1] spw_r = spw_r_out
    cdef double[:, ::1] rho_r = rho_r_out

    sg_s = np.zeros(c_len, dtype=np.float64)
    sgw_s = np.zeros(c_len, dtype=np.float64)
    sp_s = np.zeros(c_len, dtype=np.float64)
    spw_s = np.zeros(c_len, dtype=np.float64)
    rho_s = np.full(c_len, -INFINITY, dtype=np.float64)
    cdef double[::1] sg = sg_s
    cdef double[::1] sgw = sgw_s
    cdef double[::1] sp = sp_s
    cdef double[::1] spw = spw_s
    cdef double[::1] rho = rho_s

    cdef Py_ssize_t t, c
    cdef double lam, rn, e_old, e_new, beta, ekr, ekl
    cdef double cg, cp, cgw, cpw, dgv

    for t in range(t_len - 1, -1, -1):
        for c in range(c_len):
            lam = w[c] / t_len
            sg_r[t, c] = sg[c]
            sgw_r[t, c] = sgw[c]
            sp_r[t, c] = sp[c]
            spw_r[t, c] = spw[c]
            rho_r[t, c] = rho[c]
            beta = gy[t, c] / den[t, c]
            rn = fmax(rho[c] - lam, -q[t, c])
            e_old = exp(rho[c] - lam - rn)
            e_new = exp(-q[t, c] - rn)
            sgw[c] = (sgw[c] + sg[c]) * e_old
            spw[c] = (spw[c] + sp[c]) * e_old
            sg[c] = sg[c] * e_old + beta * e_new
            sp[c] = sp[c] * e_old + beta * y[t, c] * e_new
            rho[c] = rn

    # left-direction scan (sums over t < j), assembling gradients on the fly
    for c in range(c_len):
        sg[c] = 0.0
        sgw[c] = 0.0
        sp[c] = 0.0
        spw[c] = 0.0
        rho[c] = -INFINITY
    for t in range(t_len):
        for c in range(c_len):
            lam = w[c] / t_len
            ekr = exp(k[t, c] + rho_r[t, c])
            ekl = exp(k[t, c] + rho[c])
            cg = sg_r[t, c] * ekr + sg[c] * ekl
            cp = sp_r[t, c] * ekr + sp[c] * ekl
            cgw = sgw_r[t, c] * ekr + sgw[c] * ekl
            cpw = spw_r[t, c] * ekr + spw[c] * ekl
            beta = gy[t, c] / den[t, c]
            dgv = exp(u[c] + k[t, c] - q[t, c]) * beta
            gv[t, c] = cg + dgv
            gk[t, c] = v[t, c] * cg - cp + dgv * (v[t, c] - y[t, c])
            gu[c] += dgv * (v[t, c] - y[t, c])
            gw[c] -= (v[t, c] * cgw - cpw) / t_len
            rn = fmax(rho[c] - lam, -q[t, c])
            e_old = exp(rho[c] - lam - rn)
            e_new = exp(-q[t, c] - rn)
            sgw[c] = (sgw[c] + sg[c]) * e_old
            spw[c] = (spw[c] + sp[c]) * e_old
            sg[c] = sg[c] * e_old + beta * e_new
            sp[c] = sp[c] * e_old + beta * y[t, c] * e_new
            rho[c] = rn

    return gk_out, gv_out, gw_out, gu_out
