#!/usr/bin/env python3
"""Benchmark the LSTM sequence kernels: JIT backend vs numpy fallback.

The recurrence is the package's hot loop — everything else is BLAS
calls numpy already handles well. This script times both backends on
realistic head geometries and prints the speedups.

Usage:
    python3 scripts/benchmark_kernels.py [--repeats 7] [--dtype float32]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from hierdoc.neural import kernels
from hierdoc.rng import stream

# (label, batch, timesteps, hidden) — matching the shipped heads'
# first/second recurrent layers over typical chunk counts
CASES = [
    ("short-docs  B32 T8  H256", 32, 8, 256),
    ("long-docs   B32 T64 H256", 32, 64, 256),
    ("second-layer B32 T64 H128", 32, 64, 128),
    ("big-batch   B128 T32 H256", 128, 32, 256),
]


def _make_case(B: int, T: int, H: int, dtype) -> tuple:
    gen = stream(0, "benchmark/kernels")
    xp = gen.standard_normal((T, B, 4 * H)).astype(dtype)
    Wh = (gen.standard_normal((H, 4 * H)) * 0.1).astype(dtype)
    lengths = gen.integers(max(1, T // 2), T + 1, size=B).astype(np.int64)
    return xp, Wh, lengths


def _time_backend(backend: str, xp, Wh, lengths, repeats: int) -> tuple[float, float]:
    """Median seconds for (forward, forward+backward)."""
    fwd_times, full_times = [], []
    # warmup covers JIT compilation and cache effects
    out = kernels.lstm_forward(xp, Wh, lengths, backend=backend)
    kernels.lstm_backward(np.ones_like(out[0]), Wh, *out[1:], lengths, backend=backend)
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = kernels.lstm_forward(xp, Wh, lengths, backend=backend)
        t1 = time.perf_counter()
        h_out, I, F, G, O, C, Hin = out
        kernels.lstm_backward(
            np.ones_like(h_out), Wh, I, F, G, O, C, Hin, lengths, backend=backend
        )
        t2 = time.perf_counter()
        fwd_times.append(t1 - t0)
        full_times.append(t2 - t0)
    return statistics.median(fwd_times), statistics.median(full_times)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    args = parser.parse_args()
    dtype = np.float32 if args.dtype == "float32" else np.float64

    backends = kernels.available_backends()
    print(f"backends available: {', '.join(backends)} (default: {kernels.BACKEND})")
    print(f"dtype {args.dtype}, median of {args.repeats} runs\n")
    header = f"{'case':<28} {'stage':<9}" + "".join(f" {b:>10}" for b in backends)
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, B, T, H in CASES:
        xp, Wh, lengths = _make_case(B, T, H, dtype)
        rows = {b: _time_backend(b, xp, Wh, lengths, args.repeats) for b in backends}
        for stage, idx in (("forward", 0), ("fwd+bwd", 1)):
            line = f"{label:<28} {stage:<9}"
            for b in backends:
                line += f" {rows[b][idx] * 1e3:>8.2f}ms"
            if len(backends) > 1:
                line += f" {rows['numpy'][idx] / rows['numba'][idx]:>8.2f}x"
            print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
