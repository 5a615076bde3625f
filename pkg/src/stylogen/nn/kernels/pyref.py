"""Pure numpy fallback kernels for the recurrent and convolutional hot loops.

Shapes follow the layer code: batch-first, time-major second, channels last.
The compiled backend in ``_core.pyx`` implements the same contracts; parity
between the two is covered by tests.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def conv1d_fwd(x, w, b, dilation):
    """Causal dilated convolution.

    y[:, t] = b + sum_j x[:, t - j*dilation] @ w[j], missing past treated as
    zero, so output length equals input length and y[t] never sees t+1.
    """
    B, T, _ = x.shape
    K, _, Co = w.shape
    y = np.empty((B, T, Co), dtype=x.dtype)
    y[:] = b
    for j in range(K):
        sh = j * dilation
        if sh >= T:
            break
        y[:, sh:, :] += x[:, : T - sh, :] @ w[j]
    return y


def conv1d_bwd(x, w, dy, dilation):
    B, T, _ = x.shape
    K = w.shape[0]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = dy.sum(axis=(0, 1))
    for j in range(K):
        sh = j * dilation
        if sh >= T:
            break
        dw[j] = np.tensordot(x[:, : T - sh, :], dy[:, sh:, :], axes=([0, 1], [0, 1]))
        dx[:, : T - sh, :] += dy[:, sh:, :] @ w[j].T
    return dx, dw, db


def gru_fwd(x, wx, wh, b, h0):
    """GRU over a full window; reset gate applies after the recurrent matmul.

    z = sig(ax_z + u_z); r = sig(ax_r + u_r); c = tanh(ax_c + r * u_c)
    h' = (1 - z) * h + z * c,  with ax = x @ wx + b and u = h @ wh.

    Returns the hidden sequence hs[B, T+1, H] (hs[:, 0] = h0) and a cache
    [B, T, 4, H] holding (z, r, c, u_c) per step for the backward pass.
    """
    B, T, E = x.shape
    H = wh.shape[0]
    hs = np.empty((B, T + 1, H), dtype=x.dtype)
    hs[:, 0] = h0
    cache = np.empty((B, T, 4, H), dtype=x.dtype)
    ax = (x.reshape(B * T, E) @ wx).reshape(B, T, 3 * H) + b
    for t in range(T):
        u = hs[:, t] @ wh
        z = _sigmoid(ax[:, t, :H] + u[:, :H])
        r = _sigmoid(ax[:, t, H:2 * H] + u[:, H:2 * H])
        uc = u[:, 2 * H:]
        c = np.tanh(ax[:, t, 2 * H:] + r * uc)
        hs[:, t + 1] = (1.0 - z) * hs[:, t] + z * c
        cache[:, t, 0] = z
        cache[:, t, 1] = r
        cache[:, t, 2] = c
        cache[:, t, 3] = uc
    return hs, cache


def gru_bwd(x, wx, wh, hs, cache, dh_last):
    """Backprop through time for gru_fwd; upstream gradient lands on the final
    hidden state only. Returns (dx, dwx, dwh, db, dh0)."""
    B, T, E = x.shape
    H = wh.shape[0]
    dax = np.empty((B, T, 3 * H), dtype=x.dtype)
    dwh = np.zeros_like(wh)
    dh = np.array(dh_last, dtype=x.dtype, copy=True)
    for t in range(T - 1, -1, -1):
        z = cache[:, t, 0]
        r = cache[:, t, 1]
        c = cache[:, t, 2]
        uc = cache[:, t, 3]
        hprev = hs[:, t]
        dz = dh * (c - hprev) * z * (1.0 - z)
        dc = dh * z * (1.0 - c * c)
        dr = dc * uc * r * (1.0 - r)
        dax[:, t, :H] = dz
        dax[:, t, H:2 * H] = dr
        dax[:, t, 2 * H:] = dc
        du = np.concatenate([dz, dr, dc * r], axis=1)
        dwh += hprev.T @ du
        dh = dh * (1.0 - z) + du @ wh.T
    flat = dax.reshape(B * T, 3 * H)
    dx = (flat @ wx.T).reshape(B, T, E)
    dwx = x.reshape(B * T, E).T @ flat
    db = flat.sum(axis=0)
    return dx, dwx, dwh, db, dh


def lstm_fwd(x, wx, wh, b, h0, c0):
    """LSTM over a full window; gate order in the stacked weights is i, f, g, o.

    Returns hidden states hs[B, T+1, H], cell states cs[B, T+1, H] and a
    cache [B, T, 4, H] of gate activations.
    """
    B, T, E = x.shape
    H = wh.shape[0]
    hs = np.empty((B, T + 1, H), dtype=x.dtype)
    cs = np.empty((B, T + 1, H), dtype=x.dtype)
    hs[:, 0] = h0
    cs[:, 0] = c0
    cache = np.empty((B, T, 4, H), dtype=x.dtype)
    ax = (x.reshape(B * T, E) @ wx).reshape(B, T, 4 * H) + b
    for t in range(T):
        s = ax[:, t] + hs[:, t] @ wh
        i = _sigmoid(s[:, :H])
        f = _sigmoid(s[:, H:2 * H])
        g = np.tanh(s[:, 2 * H:3 * H])
        o = _sigmoid(s[:, 3 * H:])
        cs[:, t + 1] = f * cs[:, t] + i * g
        hs[:, t + 1] = o * np.tanh(cs[:, t + 1])
        cache[:, t, 0] = i
        cache[:, t, 1] = f
        cache[:, t, 2] = g
        cache[:, t, 3] = o
    return hs, cs, cache


def lstm_bwd(x, wx, wh, hs, cs, cache, dh_last):
    """Backprop through time for lstm_fwd; returns (dx, dwx, dwh, db, dh0)."""
    B, T, E = x.shape
    H = wh.shape[0]
    dax = np.empty((B, T, 4 * H), dtype=x.dtype)
    dwh = np.zeros_like(wh)
    dh = np.array(dh_last, dtype=x.dtype, copy=True)
    dcell = np.zeros((B, H), dtype=x.dtype)
    for t in range(T - 1, -1, -1):
        i = cache[:, t, 0]
        f = cache[:, t, 1]
        g = cache[:, t, 2]
        o = cache[:, t, 3]
        tc = np.tanh(cs[:, t + 1])
        dcell = dcell + dh * o * (1.0 - tc * tc)
        dax[:, t, :H] = dcell * g * i * (1.0 - i)
        dax[:, t, H:2 * H] = dcell * cs[:, t] * f * (1.0 - f)
        dax[:, t, 2 * H:3 * H] = dcell * i * (1.0 - g * g)
        dax[:, t, 3 * H:] = dh * tc * o * (1.0 - o)
        dwh += hs[:, t].T @ dax[:, t]
        dh = dax[:, t] @ wh.T
        dcell = dcell * f
    flat = dax.reshape(B * T, 4 * H)
    dx = (flat @ wx.T).reshape(B, T, E)
    dwx = x.reshape(B * T, E).T @ flat
    db = flat.sum(axis=0)
    return dx, dwx, dwh, db, dh
