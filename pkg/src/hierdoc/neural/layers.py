"""Layer vocabulary with hand-written forward/backward passes.

Every layer follows one protocol: ``forward(x, lengths, training)``
returns ``(y, lengths_out)`` and stashes what backward needs;
``backward(dy)`` returns ``dx`` and fills ``self.grads``. Sequence
layers take [B, T, D] plus per-row valid-prefix lengths and keep the
invariant that outputs are exactly zero at masked positions, which is
what makes logits independent of padding. Vector layers take [B, D]
and ignore lengths.

Time-distributed work (conv, dense) runs on BLAS; only the LSTM
recurrence calls into kernels.py.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import stream
from . import kernels


def glorot_uniform(
    shape: tuple[int, ...], fan_in: int, fan_out: int, rng: np.random.Generator, dtype
) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def maxpool1d(x: np.ndarray, pool_size: int) -> np.ndarray:
    """Windowed max over time: [B,T,C] -> [B, floor(T/p), C], trailing
    remainder dropped; T < pool_size passes through unchanged."""
    if pool_size < 1:
        raise ValueError(f"pool_size must be >= 1, got {pool_size}")
    B, T, C = x.shape
    if T < pool_size:
        return x.copy()
    t_out = T // pool_size
    return x[:, : t_out * pool_size].reshape(B, t_out, pool_size, C).max(axis=2)


def global_maxpool(x: np.ndarray) -> np.ndarray:
    """Per-feature max over the full time axis: [B,T,C] -> [B,C]."""
    return x.max(axis=1)


def _valid_mask(lengths: np.ndarray, T: int) -> np.ndarray:
    return np.arange(T)[None, :] < lengths[:, None]  # [B, T] bool


class Layer:
    kind = "layer"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(
        self, x: np.ndarray, lengths: np.ndarray | None, training: bool
    ) -> tuple[np.ndarray, np.ndarray | None]:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def config(self) -> dict:
        return {}

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())


class Dense(Layer):
    kind = "dense"

    def __init__(
        self,
        in_dim: int,
        units: int,
        activation: str = "linear",
        *,
        name: str,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        super().__init__(name)
        if activation not in ("linear", "relu", "tanh"):
            raise ValueError(f"unknown activation {activation!r}")
        self.in_dim = in_dim
        self.units = units
        self.activation = activation
        self.params["W"] = glorot_uniform((in_dim, units), in_dim, units, rng, dtype)
        self.params["b"] = np.zeros(units, dtype=dtype)

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "units": self.units, "activation": self.activation}

    def forward(self, x, lengths, training):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.name}: expected dim {self.in_dim}, got {x.shape[-1]}")
        pre = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            y = np.maximum(pre, 0)
            self._act_cache = pre > 0
        elif self.activation == "tanh":
            y = np.tanh(pre)
            self._act_cache = y
        else:
            y = pre
            self._act_cache = None
        self._x = x
        return y, lengths

    def backward(self, dy):
        if self.activation == "relu":
            dpre = dy * self._act_cache
        elif self.activation == "tanh":
            dpre = dy * (1.0 - self._act_cache * self._act_cache)
        else:
            dpre = dy
        x2 = self._x.reshape(-1, self.in_dim)
        d2 = dpre.reshape(-1, self.units)
        self.grads["W"] = x2.T @ d2
        self.grads["b"] = d2.sum(axis=0)
        return dpre @ self.params["W"].T


class Conv1DSame(Layer):
    """Cross-correlation over time with zero same-padding; outputs are
    zeroed at masked positions so padding never leaks downstream."""

    kind = "conv1d"

    def __init__(
        self,
        in_channels: int,
        filters: int,
        kernel_size: int,
        *,
        name: str,
        rng: np.random.Generator,
        dtype=np.float32,
    ):
        super().__init__(name)
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel_size must be odd, got {kernel_size}")
        self.in_channels = in_channels
        self.filters = filters
        self.kernel_size = kernel_size
        fan_in = kernel_size * in_channels
        fan_out = kernel_size * filters
        self.params["K"] = glorot_uniform(
            (kernel_size, in_channels, filters), fan_in, fan_out, rng, dtype
        )
        self.params["b"] = np.zeros(filters, dtype=dtype)

    def config(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "filters": self.filters,
            "kernel_size": self.kernel_size,
        }

    def forward(self, x, lengths, training):
        B, T, C = x.shape
        if C != self.in_channels:
            raise ValueError(f"{self.name}: expected {self.in_channels} channels, got {C}")
        pad = (self.kernel_size - 1) // 2
        xp = np.zeros((B, T + 2 * pad, C), dtype=x.dtype)
        xp[:, pad : pad + T] = x
        K = self.params["K"]
        y = np.zeros((B, T, self.filters), dtype=x.dtype)
        for d in range(self.kernel_size):
            y += xp[:, d : d + T] @ K[d]
        y += self.params["b"]
        if lengths is not None:
            mask = _valid_mask(lengths, T)
            y *= mask[:, :, None]
            self._mask = mask
        else:
            self._mask = None
        self._xp = xp
        self._T = T
        return y, lengths

    def backward(self, dy):
        if self._mask is not None:
            dy = dy * self._mask[:, :, None]
        T, pad = self._T, (self.kernel_size - 1) // 2
        d2 = dy.reshape(-1, self.filters)
        dK = np.empty_like(self.params["K"])
        dxp = np.zeros_like(self._xp)
        K = self.params["K"]
        for d in range(self.kernel_size):
            win = self._xp[:, d : d + T].reshape(-1, self.in_channels)
            dK[d] = win.T @ d2
            dxp[:, d : d + T] += dy @ K[d].T
        self.grads["K"] = dK
        self.grads["b"] = d2.sum(axis=0)
        return dxp[:, pad : pad + T]


class MaxPool1DLayer(Layer):
    """Windowed max with floor truncation on each row's valid prefix;
    rows shorter than the pool pass through unchanged."""

    kind = "maxpool1d"

    def __init__(self, pool_size: int = 2, *, name: str):
        super().__init__(name)
        if pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {pool_size}")
        self.pool_size = pool_size

    def config(self) -> dict:
        return {"pool_size": self.pool_size}

    def forward(self, x, lengths, training):
        B, T, C = x.shape
        p = self.pool_size
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        self._in_shape = x.shape
        self._lengths = lengths
        if T < p:
            # whole batch shorter than one window: identity
            self._identity = True
            return x, lengths
        self._identity = False
        t_out = T // p
        new_lengths = np.where(lengths >= p, lengths // p, lengths)
        if np.any(new_lengths > t_out):
            raise ValueError(
                f"{self.name}: short rows (len < {p}) do not fit pooled length {t_out}"
            )
        windows = x[:, : t_out * p].reshape(B, t_out, p, C)
        am = windows.argmax(axis=2)  # [B, t_out, C], within-window offset
        y = np.take_along_axis(windows, am[:, :, None, :], axis=2)[:, :, 0, :]
        out_mask = _valid_mask(new_lengths, t_out)
        y = y * out_mask[:, :, None]
        short = lengths < p  # passthrough rows
        if np.any(short):
            for b in np.nonzero(short)[0]:
                n = int(lengths[b])
                y[b] = 0.0
                y[b, :n] = x[b, :n]
        self._am = am
        self._out_mask = out_mask
        self._short = short
        self._t_out = t_out
        return y, new_lengths

    def backward(self, dy):
        B, T, C = self._in_shape
        p = self.pool_size
        if self._identity:
            mask = _valid_mask(self._lengths, T)
            return dy * mask[:, :, None]
        t_out = self._t_out
        dyv = dy * self._out_mask[:, :, None]
        dwin = np.zeros((B, t_out, p, C), dtype=dy.dtype)
        np.put_along_axis(dwin, self._am[:, :, None, :], dyv[:, :, None, :], axis=2)
        dx = np.zeros((B, T, C), dtype=dy.dtype)
        dx[:, : t_out * p] = dwin.reshape(B, t_out * p, C)
        if np.any(self._short):
            for b in np.nonzero(self._short)[0]:
                n = int(self._lengths[b])
                dx[b] = 0.0
                dx[b, :n] = dy[b, :n]
        return dx


class GlobalMaxPoolLayer(Layer):
    """Per-feature max over valid positions; gradient routes to the
    argmax (first index on ties)."""

    kind = "global_maxpool"

    def __init__(self, *, name: str):
        super().__init__(name)

    def forward(self, x, lengths, training):
        B, T, C = x.shape
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        mask = _valid_mask(lengths, T)
        xm = np.where(mask[:, :, None], x, -np.inf)
        am = xm.argmax(axis=1)  # [B, C]
        y = np.take_along_axis(x, am[:, None, :], axis=1)[:, 0, :]
        self._am = am
        self._in_shape = x.shape
        return y, None

    def backward(self, dy):
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        np.put_along_axis(dx, self._am[:, None, :], dy[:, None, :], axis=1)
        return dx


class MeanOverTime(Layer):
    """Masked mean over time: [B,T,D] -> [B,D], dividing by each row's
    valid length. Chunk-order invariant by construction."""

    kind = "mean_over_time"

    def __init__(self, *, name: str):
        super().__init__(name)

    def forward(self, x, lengths, training):
        B, T, D = x.shape
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        mask = _valid_mask(lengths, T).astype(x.dtype)
        y = (x * mask[:, :, None]).sum(axis=1) / lengths[:, None].astype(x.dtype)
        self._mask = mask
        self._lengths = lengths
        self._in_shape = x.shape
        return y, None

    def backward(self, dy):
        B, T, D = self._in_shape
        scale = (self._mask / self._lengths[:, None].astype(dy.dtype))[:, :, None]
        return dy[:, None, :] * scale


class Dropout(Layer):
    """Inverted dropout: train-time mask scaled by 1/(1-rate), identity
    in eval. Works on [B,D] and [B,T,D] alike. Setting fixed_mask_seed
    re-derives the same mask on every forward (for finite-difference
    checks, which need a frozen stochastic graph)."""

    kind = "dropout"

    def __init__(self, rate: float, *, name: str, rng: np.random.Generator | None = None):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate
        self._rng = rng if rng is not None else stream(0, f"dropout/{name}")
        self.fixed_mask_seed: int | None = None

    def config(self) -> dict:
        return {"rate": self.rate}

    def forward(self, x, lengths, training):
        if not training or self.rate == 0.0:
            self._mask = None
            return x, lengths
        if self.fixed_mask_seed is not None:
            gen = stream(self.fixed_mask_seed, f"dropout-frozen/{self.name}")
        else:
            gen = self._rng
        keep = gen.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / np.asarray(1.0 - self.rate, dtype=x.dtype)
        return x * self._mask, lengths

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class BatchNorm(Layer):
    """Batch normalization over [B, F]: batch statistics (biased
    variance) in training with exponential running stats for eval."""

    kind = "batchnorm"

    def __init__(
        self,
        dim: int,
        momentum: float = 0.99,
        eps: float = 1e-3,
        *,
        name: str,
        dtype=np.float32,
    ):
        super().__init__(name)
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(dim, dtype=dtype)
        self.params["beta"] = np.zeros(dim, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(dim, dtype=dtype)
        self.buffers["running_var"] = np.ones(dim, dtype=dtype)

    def config(self) -> dict:
        return {"dim": self.dim, "momentum": self.momentum, "eps": self.eps}

    def forward(self, x, lengths, training):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"{self.name}: expected [B, {self.dim}], got {x.shape}")
        self._training = training
        if training:
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu) * inv_std
            m = self.momentum
            self.buffers["running_mean"][...] = m * self.buffers["running_mean"] + (1 - m) * mu
            self.buffers["running_var"][...] = m * self.buffers["running_var"] + (1 - m) * var
            self._xhat = xhat
            self._inv_std = inv_std
        else:
            inv_std = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
            xhat = (x - self.buffers["running_mean"]) * inv_std
            self._xhat = xhat
            self._inv_std = inv_std
        y = self.params["gamma"] * xhat + self.params["beta"]
        return y.astype(x.dtype), lengths

    def backward(self, dy):
        xhat = self._xhat
        self.grads["gamma"] = (dy * xhat).sum(axis=0)
        self.grads["beta"] = dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        if not self._training:
            return dxhat * self._inv_std
        B = dy.shape[0]
        return (
            self._inv_std
            / B
            * (B * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        )


class BiLSTM(Layer):
    """Bidirectional LSTM over the valid prefix, outputs concatenated
    [forward; backward] per timestep ([B,T,D] -> [B,T,2U]).

    Gate order [i, f, g, o]; logistic sigmoid gates, tanh candidate and
    output; h0 = c0 = 0; forget-gate bias starts at 1. The backward
    direction runs on each row's reversed valid prefix (masked tail left
    in place) and its outputs are un-reversed the same way.
    """

    kind = "bilstm"

    def __init__(
        self,
        in_dim: int,
        units: int,
        *,
        name: str,
        rng: np.random.Generator,
        dtype=np.float32,
        backend: str | None = None,
    ):
        super().__init__(name)
        self.in_dim = in_dim
        self.units = units
        self.backend = backend
        H = units
        for d in ("fwd", "bwd"):
            self.params[f"Wx_{d}"] = glorot_uniform((in_dim, 4 * H), in_dim, 4 * H, rng, dtype)
            self.params[f"Wh_{d}"] = glorot_uniform((H, 4 * H), H, 4 * H, rng, dtype)
            b = np.zeros(4 * H, dtype=dtype)
            b[H : 2 * H] = 1.0  # forget gate starts open
            self.params[f"b_{d}"] = b

    def config(self) -> dict:
        return {"in_dim": self.in_dim, "units": self.units}

    def _reverse_index(self, lengths: np.ndarray, T: int) -> np.ndarray:
        pos = np.arange(T)[None, :]
        L = lengths[:, None]
        return np.where(pos < L, L - 1 - pos, pos)  # involution per row

    def _run_dir(self, d: str, x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        xp = x @ self.params[f"Wx_{d}"] + self.params[f"b_{d}"]
        xp_t = np.ascontiguousarray(xp.transpose(1, 0, 2))  # [T, B, 4H]
        h_out, I, F, G, O, C, Hin = kernels.lstm_forward(
            xp_t, self.params[f"Wh_{d}"], lengths, backend=self.backend
        )
        self._cache[d] = (x, I, F, G, O, C, Hin)
        return h_out.transpose(1, 0, 2)  # [B, T, H]

    def _back_dir(self, d: str, dh: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        x, I, F, G, O, C, Hin = self._cache[d]
        dh_t = np.ascontiguousarray(dh.transpose(1, 0, 2))
        dxp_t, dWh = kernels.lstm_backward(
            dh_t, self.params[f"Wh_{d}"], I, F, G, O, C, Hin, lengths, backend=self.backend
        )
        dxp = dxp_t.transpose(1, 0, 2)  # [B, T, 4H]
        x2 = x.reshape(-1, self.in_dim)
        d2 = dxp.reshape(-1, 4 * self.units)
        self.grads[f"Wx_{d}"] = x2.T @ d2
        self.grads[f"Wh_{d}"] = dWh
        self.grads[f"b_{d}"] = d2.sum(axis=0)
        return dxp @ self.params[f"Wx_{d}"].T

    def forward(self, x, lengths, training):
        B, T, D = x.shape
        if T == 0:
            raise ValueError(f"{self.name}: empty time axis")
        if D != self.in_dim:
            raise ValueError(f"{self.name}: expected dim {self.in_dim}, got {D}")
        if lengths is None:
            lengths = np.full(B, T, dtype=np.int64)
        self._cache: dict[str, tuple] = {}
        self._lengths = lengths
        h_fwd = self._run_dir("fwd", x, lengths)
        idx = self._reverse_index(lengths, T)
        x_rev = np.take_along_axis(x, idx[:, :, None], axis=1)
        h_bwd = np.take_along_axis(
            self._run_dir("bwd", x_rev, lengths), idx[:, :, None], axis=1
        )
        self._idx = idx
        return np.concatenate([h_fwd, h_bwd], axis=2), lengths

    def backward(self, dy):
        H = self.units
        dx = self._back_dir("fwd", dy[:, :, :H], self._lengths)
        # un-reverse the incoming gradient, backprop, re-reverse dx
        dh_rev = np.take_along_axis(dy[:, :, H:], self._idx[:, :, None], axis=1)
        dx_rev = self._back_dir("bwd", dh_rev, self._lengths)
        dx += np.take_along_axis(dx_rev, self._idx[:, :, None], axis=1)
        return dx
