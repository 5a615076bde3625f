# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: fused gate math in C with BLAS matmuls.

Same contracts as ``pyref``; float32 and float64 supported via fused types.
"""

from libc.math cimport exp, expf, tanh, tanhf
from scipy.linalg.cython_blas cimport dgemm, sgemm

import numpy as np

ctypedef fused real:
    float
    double


cdef inline real _sig(real v) noexcept nogil:
    if real is float:
        return <float>1.0 / (<float>1.0 + expf(-v))
    else:
        return 1.0 / (1.0 + exp(-v))


cdef inline real _th(real v) noexcept nogil:
    if real is float:
        return tanhf(v)
    else:
        return tanh(v)


# Row-major GEMM wrappers on top of the column-major BLAS entry points.
# lda/ldb/ldc are the row strides (in elements) of A, B and C.

cdef char* _CN = b"N"
cdef char* _CT = b"T"


cdef inline void _gemm_nn(real* a, real* b, real* c, int m, int n, int k,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # C[m,n] = alpha * A[m,k] @ B[k,n] + beta * C
    if real is float:
        sgemm(_CN, _CN, &n, &m, &k, &alpha, <float*>b, &ldb, <float*>a, &lda, &beta, <float*>c, &ldc)
    else:
        dgemm(_CN, _CN, &n, &m, &k, &alpha, <double*>b, &ldb, <double*>a, &lda, &beta, <double*>c, &ldc)


cdef inline void _gemm_tn(real* a, real* b, real* c, int m, int n, int k,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # C[m,n] = alpha * A[k,m].T @ B[k,n] + beta * C
    if real is float:
        sgemm(_CN, _CT, &n, &m, &k, &alpha, <float*>b, &ldb, <float*>a, &lda, &beta, <float*>c, &ldc)
    else:
        dgemm(_CN, _CT, &n, &m, &k, &alpha, <double*>b, &ldb, <double*>a, &lda, &beta, <double*>c, &ldc)


cdef inline void _gemm_nt(real* a, real* b, real* c, int m, int n, int k,
                          int lda, int ldb, int ldc, real alpha, real beta) noexcept nogil:
    # C[m,n] = alpha * A[m,k] @ B[n,k].T + beta * C
    if real is float:
        sgemm(_CT, _CN, &n, &m, &k, &alpha, <float*>b, &ldb, <float*>a, &lda, &beta, <float*>c, &ldc)
    else:
        dgemm(_CT, _CN, &n, &m, &k, &alpha, <double*>b, &ldb, <double*>a, &lda, &beta, <double*>c, &ldc)


def conv1d_fwd(real[:, :, ::1] x, real[:, :, ::1] w, real[::1] b, int dilation):
    cdef int B = x.shape[0], T = x.shape[1], Ci = x.shape[2]
    cdef int K = w.shape[0], Co = w.shape[2]
    cdef int j, sh, rows, bi, t, co
    y_arr = np.empty((B, T, Co), dtype=np.float32 if real is float else np.float64)
    cdef real[:, :, ::1] y = y_arr
    with nogil:
        for bi in range(B):
            for t in range(T):
                for co in range(Co):
                    y[bi, t, co] = b[co]
        for j in range(K):
            sh = j * dilation
            if sh >= T:
                break
            rows = T - sh
            for bi in range(B):
                _gemm_nn(&x[bi, 0, 0], &w[j, 0, 0], &y[bi, sh, 0],
                         rows, Co, Ci, Ci, Co, Co, <real>1.0, <real>1.0)
    return y_arr


def conv1d_bwd(real[:, :, ::1] x, real[:, :, ::1] w, real[:, :, ::1] dy, int dilation):
    cdef int B = x.shape[0], T = x.shape[1], Ci = x.shape[2]
    cdef int K = w.shape[0], Co = w.shape[2]
    cdef int j, sh, rows, bi, t, co
    dtype = np.float32 if real is float else np.float64
    dx_arr = np.zeros((B, T, Ci), dtype=dtype)
    dw_arr = np.zeros((K, Ci, Co), dtype=dtype)
    db_arr = np.zeros(Co, dtype=dtype)
    cdef real[:, :, ::1] dx = dx_arr
    cdef real[:, :, ::1] dw = dw_arr
    cdef real[::1] db = db_arr
    with nogil:
        for bi in range(B):
            for t in range(T):
                for co in range(Co):
                    db[co] += dy[bi, t, co]
        for j in range(K):
            sh = j * dilation
            if sh >= T:
                break
            rows = T - sh
            for bi in range(B):
                _gemm_tn(&x[bi, 0, 0], &dy[bi, sh, 0], &dw[j, 0, 0],
                         Ci, Co, rows, Ci, Co, Co, <real>1.0, <real>1.0)
                _gemm_nt(&dy[bi, sh, 0], &w[j, 0, 0], &dx[bi, 0, 0],
                         rows, Ci, Co, Co, Co, Ci, <real>1.0, <real>1.0)
    return dx_arr, dw_arr, db_arr


def gru_fwd(real[:, :, ::1] x, real[:, ::1] wx, real[:, ::1] wh, real[::1] b,
            real[:, ::1] h0):
    cdef int B = x.shape[0], T = x.shape[1], E = x.shape[2]
    cdef int H = wh.shape[0]
    cdef int H3 = 3 * H
    cdef int bi, t, hi
    cdef real z, r, uc, c
    dtype = np.float32 if real is float else np.float64
    hs_arr = np.empty((B, T + 1, H), dtype=dtype)
    cache_arr = np.empty((B, T, 4, H), dtype=dtype)
    ax_arr = np.empty((B, T, H3), dtype=dtype)
    u_arr = np.empty((B, H3), dtype=dtype)
    cdef real[:, :, ::1] hs = hs_arr
    cdef real[:, :, :, ::1] cache = cache_arr
    cdef real[:, :, ::1] ax = ax_arr
    cdef real[:, ::1] u = u_arr
    with nogil:
        _gemm_nn(&x[0, 0, 0], &wx[0, 0], &ax[0, 0, 0], B * T, H3, E, E, H3, H3,
                 <real>1.0, <real>0.0)
        for bi in range(B):
            for hi in range(H):
                hs[bi, 0, hi] = h0[bi, hi]
        for t in range(T):
            _gemm_nn(&hs[0, t, 0], &wh[0, 0], &u[0, 0], B, H3, H,
                     (T + 1) * H, H3, H3, <real>1.0, <real>0.0)
            for bi in range(B):
                for hi in range(H):
                    z = _sig(ax[bi, t, hi] + b[hi] + u[bi, hi])
                    r = _sig(ax[bi, t, H + hi] + b[H + hi] + u[bi, H + hi])
                    uc = u[bi, 2 * H + hi]
                    c = _th(ax[bi, t, 2 * H + hi] + b[2 * H + hi] + r * uc)
                    hs[bi, t + 1, hi] = (<real>1.0 - z) * hs[bi, t, hi] + z * c
                    cache[bi, t, 0, hi] = z
                    cache[bi, t, 1, hi] = r
                    cache[bi, t, 2, hi] = c
                    cache[bi, t, 3, hi] = uc
    return hs_arr, cache_arr


def gru_bwd(real[:, :, ::1] x, real[:, ::1] wx, real[:, ::1] wh,
            real[:, :, ::1] hs, real[:, :, :, ::1] cache, real[:, ::1] dh_last):
    cdef int B = x.shape[0], T = x.shape[1], E = x.shape[2]
    cdef int H = wh.shape[0]
    cdef int H3 = 3 * H
    cdef int bi, t, hi
    cdef real z, r, c, uc, dz, dc, dr, dhv
    dtype = np.float32 if real is float else np.float64
    dax_arr = np.empty((B, T, H3), dtype=dtype)
    dwh_arr = np.zeros((H, H3), dtype=dtype)
    dx_arr = np.empty((B, T, E), dtype=dtype)
    dwx_arr = np.empty((E, H3), dtype=dtype)
    db_arr = np.zeros(H3, dtype=dtype)
    dh_arr = np.array(dh_last, copy=True)
    du_arr = np.empty((B, H3), dtype=dtype)
    cdef real[:, :, ::1] dax = dax_arr
    cdef real[:, ::1] dwh = dwh_arr
    cdef real[:, :, ::1] dx = dx_arr
    cdef real[:, ::1] dwx = dwx_arr
    cdef real[::1] db = db_arr
    cdef real[:, ::1] dh = dh_arr
    cdef real[:, ::1] du = du_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for hi in range(H):
                    z = cache[bi, t, 0, hi]
                    r = cache[bi, t, 1, hi]
                    c = cache[bi, t, 2, hi]
                    uc = cache[bi, t, 3, hi]
                    dhv = dh[bi, hi]
                    dz = dhv * (c - hs[bi, t, hi]) * z * (<real>1.0 - z)
                    dc = dhv * z * (<real>1.0 - c * c)
                    dr = dc * uc * r * (<real>1.0 - r)
                    dax[bi, t, hi] = dz
                    dax[bi, t, H + hi] = dr
                    dax[bi, t, 2 * H + hi] = dc
                    du[bi, hi] = dz
                    du[bi, H + hi] = dr
                    du[bi, 2 * H + hi] = dc * r
                    dh[bi, hi] = dhv * (<real>1.0 - z)
            _gemm_tn(&hs[0, t, 0], &du[0, 0], &dwh[0, 0], H, H3, B,
                     (T + 1) * H, H3, H3, <real>1.0, <real>1.0)
            _gemm_nt(&du[0, 0], &wh[0, 0], &dh[0, 0], B, H, H3,
                     H3, H3, H, <real>1.0, <real>1.0)
        _gemm_nt(&dax[0, 0, 0], &wx[0, 0], &dx[0, 0, 0], B * T, E, H3,
                 H3, H3, E, <real>1.0, <real>0.0)
        _gemm_tn(&x[0, 0, 0], &dax[0, 0, 0], &dwx[0, 0], E, H3, B * T,
                 E, H3, H3, <real>1.0, <real>0.0)
        for bi in range(B):
            for t in range(T):
                for hi in range(H3):
                    db[hi] += dax[bi, t, hi]
    return dx_arr, dwx_arr, dwh_arr, db_arr, dh_arr


def lstm_fwd(real[:, :, ::1] x, real[:, ::1] wx, real[:, ::1] wh, real[::1] b,
             real[:, ::1] h0, real[:, ::1] c0):
    cdef int B = x.shape[0], T = x.shape[1], E = x.shape[2]
    cdef int H = wh.shape[0]
    cdef int H4 = 4 * H
    cdef int bi, t, hi
    cdef real gi, gf, gg, go, cv
    dtype = np.float32 if real is float else np.float64
    hs_arr = np.empty((B, T + 1, H), dtype=dtype)
    cs_arr = np.empty((B, T + 1, H), dtype=dtype)
    cache_arr = np.empty((B, T, 4, H), dtype=dtype)
    ax_arr = np.empty((B, T, H4), dtype=dtype)
    u_arr = np.empty((B, H4), dtype=dtype)
    cdef real[:, :, ::1] hs = hs_arr
    cdef real[:, :, ::1] cs = cs_arr
    cdef real[:, :, :, ::1] cache = cache_arr
    cdef real[:, :, ::1] ax = ax_arr
    cdef real[:, ::1] u = u_arr
    with nogil:
        _gemm_nn(&x[0, 0, 0], &wx[0, 0], &ax[0, 0, 0], B * T, H4, E, E, H4, H4,
                 <real>1.0, <real>0.0)
        for bi in range(B):
            for hi in range(H):
                hs[bi, 0, hi] = h0[bi, hi]
                cs[bi, 0, hi] = c0[bi, hi]
        for t in range(T):
            _gemm_nn(&hs[0, t, 0], &wh[0, 0], &u[0, 0], B, H4, H,
                     (T + 1) * H, H4, H4, <real>1.0, <real>0.0)
            for bi in range(B):
                for hi in range(H):
                    gi = _sig(ax[bi, t, hi] + b[hi] + u[bi, hi])
                    gf = _sig(ax[bi, t, H + hi] + b[H + hi] + u[bi, H + hi])
                    gg = _th(ax[bi, t, 2 * H + hi] + b[2 * H + hi] + u[bi, 2 * H + hi])
                    go = _sig(ax[bi, t, 3 * H + hi] + b[3 * H + hi] + u[bi, 3 * H + hi])
                    cv = gf * cs[bi, t, hi] + gi * gg
                    cs[bi, t + 1, hi] = cv
                    hs[bi, t + 1, hi] = go * _th(cv)
                    cache[bi, t, 0, hi] = gi
                    cache[bi, t, 1, hi] = gf
                    cache[bi, t, 2, hi] = gg
                    cache[bi, t, 3, hi] = go
    return hs_arr, cs_arr, cache_arr


def lstm_bwd(real[:, :, ::1] x, real[:, ::1] wx, real[:, ::1] wh,
             real[:, :, ::1] hs, real[:, :, ::1] cs, real[:, :, :, ::1] cache,
             real[:, ::1] dh_last):
    cdef int B = x.shape[0], T = x.shape[1], E = x.shape[2]
    cdef int H = wh.shape[0]
    cdef int H4 = 4 * H
    cdef int bi, t, hi
    cdef real gi, gf, gg, go, tc, dcv, dhv
    dtype = np.float32 if real is float else np.float64
    dax_arr = np.empty((B, T, H4), dtype=dtype)
    dwh_arr = np.zeros((H, H4), dtype=dtype)
    dx_arr = np.empty((B, T, E), dtype=dtype)
    dwx_arr = np.empty((E, H4), dtype=dtype)
    db_arr = np.zeros(H4, dtype=dtype)
    dh_arr = np.array(dh_last, copy=True)
    dc_arr = np.zeros((B, H), dtype=dtype)
    cdef real[:, :, ::1] dax = dax_arr
    cdef real[:, ::1] dwh = dwh_arr
    cdef real[:, :, ::1] dx = dx_arr
    cdef real[:, ::1] dwx = dwx_arr
    cdef real[::1] db = db_arr
    cdef real[:, ::1] dh = dh_arr
    cdef real[:, ::1] dcell = dc_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for bi in range(B):
                for hi in range(H):
                    gi = cache[bi, t, 0, hi]
                    gf = cache[bi, t, 1, hi]
                    gg = cache[bi, t, 2, hi]
                    go = cache[bi, t, 3, hi]
                    tc = _th(cs[bi, t + 1, hi])
                    dhv = dh[bi, hi]
                    dcv = dcell[bi, hi] + dhv * go * (<real>1.0 - tc * tc)
                    dax[bi, t, hi] = dcv * gg * gi * (<real>1.0 - gi)
                    dax[bi, t, H + hi] = dcv * cs[bi, t, hi] * gf * (<real>1.0 - gf)
                    dax[bi, t, 2 * H + hi] = dcv * gi * (<real>1.0 - gg * gg)
                    dax[bi, t, 3 * H + hi] = dhv * tc * go * (<real>1.0 - go)
                    dcell[bi, hi] = dcv * gf
            _gemm_tn(&hs[0, t, 0], &dax[0, t, 0], &dwh[0, 0], H, H4, B,
                     (T + 1) * H, T * H4, H4, <real>1.0, <real>1.0)
            _gemm_nt(&dax[0, t, 0], &wh[0, 0], &dh[0, 0], B, H, H4,
                     T * H4, H4, H, <real>1.0, <real>0.0)
        _gemm_nt(&dax[0, 0, 0], &wx[0, 0], &dx[0, 0, 0], B * T, E, H4,
                 H4, H4, E, <real>1.0, <real>0.0)
        _gemm_tn(&x[0, 0, 0], &dax[0, 0, 0], &dwx[0, 0], E, H4, B * T,
                 E, H4, H4, <real>1.0, <real>0.0)
        for bi in range(B):
            for t in range(T):
                for hi in range(H4):
                    db[hi] += dax[bi, t, hi]
    return dx_arr, dwx_arr, dwh_arr, db_arr, dh_arr
