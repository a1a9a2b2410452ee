"""Masked LSTM sequence kernels: JIT-compiled with a pure-numpy fallback.

The per-timestep LSTM recurrence is the one loop in the package that
cannot be expressed as a single BLAS call, so it gets a numba kernel;
dense/conv layers stay on numpy, where BLAS already wins. Backend
selection via HIERDOC_NUMBA: "1" forces numba (import error if absent),
"0" forces numpy, unset/"auto" picks numba when importable.

Kernel conventions (time-major so per-step slices are contiguous):
  xp      [T, B, 4H]  precomputed x @ Wx + b, gate order [i, f, g, o]
  Wh      [H, 4H]     recurrent weights
  lengths [B] int64   valid prefix length per row, 1 <= len <= T
State freezes at masked steps (t >= length): c and h carry unchanged,
emitted h_out is zero there. That makes padded and unpadded runs agree
bitwise on valid positions.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV = os.environ.get("HIERDOC_NUMBA", "auto").strip().lower()
if _ENV in {"1", "true", "on", "numba"}:
    from numba import njit  # required: fail loudly if missing

    _HAVE_NUMBA = True
elif _ENV in {"0", "false", "off", "numpy"}:
    njit = None
    _HAVE_NUMBA = False
else:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        njit = None
        _HAVE_NUMBA = False

BACKEND = "numba" if _HAVE_NUMBA else "numpy"


def available_backends() -> list[str]:
    return ["numpy", "numba"] if _HAVE_NUMBA else ["numpy"]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Branch on sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward_numpy(xp, Wh, lengths, h_out, I, F, G, O, C, Hin) -> None:
    T, B, H4 = xp.shape
    H = H4 // 4
    h = np.zeros((B, H), dtype=xp.dtype)
    c = np.zeros((B, H), dtype=xp.dtype)
    for t in range(T):
        Hin[t] = h
        a = xp[t] + h @ Wh
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        valid = (t < lengths)[:, None]
        c = np.where(valid, f * c + i * g, c)
        h = np.where(valid, o * np.tanh(c), h)
        I[t] = i
        F[t] = f
        G[t] = g
        O[t] = o
        C[t] = c
        h_out[t] = np.where(valid, h, 0.0)


def _backward_numpy(dh_out, Wh, I, F, G, O, C, Hin, lengths, dxp, dWh) -> None:
    T, B, H = dh_out.shape
    dh = np.zeros((B, H), dtype=dh_out.dtype)
    dc = np.zeros((B, H), dtype=dh_out.dtype)
    zeros = np.zeros((B, H), dtype=dh_out.dtype)
    for t in range(T - 1, -1, -1):
        m = (t < lengths)[:, None].astype(dh_out.dtype)
        dht = dh_out[t] * m + dh
        tc = np.tanh(C[t])
        dct = dc + dht * O[t] * (1.0 - tc * tc)
        c_prev = C[t - 1] if t > 0 else zeros
        da = np.concatenate(
            [
                dct * G[t] * I[t] * (1.0 - I[t]),
                dct * c_prev * F[t] * (1.0 - F[t]),
                dct * I[t] * (1.0 - G[t] * G[t]),
                dht * tc * O[t] * (1.0 - O[t]),
            ],
            axis=1,
        )
        da *= m
        dxp[t] = da
        dWh += Hin[t].T @ da
        dh = da @ Wh.T + (1.0 - m) * dh
        dc = m * (dct * F[t]) + (1.0 - m) * dc


if _HAVE_NUMBA:

    @njit(cache=True, inline="always")
    def _sig_scalar(x):
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    @njit(cache=True)
    def _forward_numba(xp, Wh, lengths, h_out, I, F, G, O, C, Hin):
        T, B, H4 = xp.shape
        H = H4 // 4
        h = np.zeros((B, H), dtype=xp.dtype)
        c = np.zeros((B, H), dtype=xp.dtype)
        for t in range(T):
            a = xp[t] + np.dot(h, Wh)
            for b in range(B):
                valid = t < lengths[b]
                for j in range(H):
                    Hin[t, b, j] = h[b, j]
                    i_ = _sig_scalar(a[b, j])
                    f_ = _sig_scalar(a[b, H + j])
                    g_ = math.tanh(a[b, 2 * H + j])
                    o_ = _sig_scalar(a[b, 3 * H + j])
                    I[t, b, j] = i_
                    F[t, b, j] = f_
                    G[t, b, j] = g_
                    O[t, b, j] = o_
                    if valid:
                        cn = f_ * c[b, j] + i_ * g_
                        c[b, j] = cn
                        hn = o_ * math.tanh(cn)
                        h[b, j] = hn
                        h_out[t, b, j] = hn
                    C[t, b, j] = c[b, j]

    @njit(cache=True)
    def _backward_numba(dh_out, Wh, I, F, G, O, C, Hin, lengths, dxp, dWh):
        T, B, H = dh_out.shape
        WhT = np.ascontiguousarray(Wh.T)
        dh = np.zeros((B, H), dtype=dh_out.dtype)
        dc = np.zeros((B, H), dtype=dh_out.dtype)
        for t in range(T - 1, -1, -1):
            da = dxp[t]
            for b in range(B):
                if t < lengths[b]:
                    for j in range(H):
                        dht = dh_out[t, b, j] + dh[b, j]
                        tc = math.tanh(C[t, b, j])
                        dct = dc[b, j] + dht * O[t, b, j] * (1.0 - tc * tc)
                        cp = C[t - 1, b, j] if t > 0 else 0.0
                        i_ = I[t, b, j]
                        f_ = F[t, b, j]
                        g_ = G[t, b, j]
                        o_ = O[t, b, j]
                        da[b, j] = dct * g_ * i_ * (1.0 - i_)
                        da[b, H + j] = dct * cp * f_ * (1.0 - f_)
                        da[b, 2 * H + j] = dct * i_ * (1.0 - g_ * g_)
                        da[b, 3 * H + j] = dht * tc * o_ * (1.0 - o_)
                        dc[b, j] = dct * f_
            dWh += np.dot(np.ascontiguousarray(Hin[t].T), da)
            dh_new = np.dot(da, WhT)
            for b in range(B):
                if t < lengths[b]:
                    for j in range(H):
                        dh[b, j] = dh_new[b, j]


def lstm_forward(
    xp: np.ndarray, Wh: np.ndarray, lengths: np.ndarray, backend: str | None = None
) -> tuple[np.ndarray, ...]:
    """Run the masked LSTM recurrence.

    Returns (h_out, I, F, G, O, C, Hin), all [T, B, H]; C holds the
    frozen (post-mask) cell state, Hin the step's incoming hidden state.
    """
    T, B, H4 = xp.shape
    H = H4 // 4
    xp = np.ascontiguousarray(xp)
    Wh = np.ascontiguousarray(Wh)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    shape = (T, B, H)
    h_out = np.zeros(shape, dtype=xp.dtype)
    I = np.empty(shape, dtype=xp.dtype)
    F = np.empty(shape, dtype=xp.dtype)
    G = np.empty(shape, dtype=xp.dtype)
    O = np.empty(shape, dtype=xp.dtype)
    C = np.empty(shape, dtype=xp.dtype)
    Hin = np.empty(shape, dtype=xp.dtype)
    impl = _pick(backend, _forward_numpy, "_forward_numba")
    impl(xp, Wh, lengths, h_out, I, F, G, O, C, Hin)
    return h_out, I, F, G, O, C, Hin


def lstm_backward(
    dh_out: np.ndarray,
    Wh: np.ndarray,
    I: np.ndarray,
    F: np.ndarray,
    G: np.ndarray,
    O: np.ndarray,
    C: np.ndarray,
    Hin: np.ndarray,
    lengths: np.ndarray,
    backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Backprop through the recurrence. Returns (dxp [T,B,4H], dWh)."""
    T, B, H = dh_out.shape
    dh_out = np.ascontiguousarray(dh_out)
    Wh = np.ascontiguousarray(Wh)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    dxp = np.zeros((T, B, 4 * H), dtype=dh_out.dtype)
    dWh = np.zeros_like(Wh)
    impl = _pick(backend, _backward_numpy, "_backward_numba")
    impl(dh_out, Wh, I, F, G, O, C, Hin, lengths, dxp, dWh)
    return dxp, dWh


def _pick(backend: str | None, numpy_impl, numba_name: str):
    choice = BACKEND if backend is None else backend
    if choice == "numpy":
        return numpy_impl
    if choice == "numba":
        if not _HAVE_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return globals()[numba_name]
    raise ValueError(f"unknown backend {choice!r}")
