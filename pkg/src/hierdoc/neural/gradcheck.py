"""Finite-difference gradient verification.

Central differences (L(θ+ε) - L(θ-ε)) / 2ε per sampled coordinate
against the analytic gradient, in float64. Relative error is
|a - n| / max(|a|, |n|, 1e-6); the floor keeps numerically-zero
coordinates (e.g. unpooled positions) from registering as spurious
disagreement at the noise level of the difference quotient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

_REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    eps: float
    entries: list[tuple[str, float]] = field(default_factory=list)  # (tensor, max rel err)

    @property
    def max_rel_error(self) -> float:
        return max((e for _, e in self.entries), default=0.0)

    def worst(self) -> tuple[str, float]:
        return max(self.entries, key=lambda kv: kv[1])

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance

    def summary(self) -> str:
        lines = [f"{name}: max rel err {err:.3e}" for name, err in self.entries]
        return "\n".join(lines)


def check_gradients(
    loss_fn: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    eps: float = 1e-5,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    loss_fn must recompute the loss (and gradients) from the current
    parameter values on every call and be deterministic given those
    values — freeze any dropout masks first. params holds the live
    arrays that loss_fn reads, keyed by tensor name. When
    max_coords_per_tensor is set, that many coordinates are sampled per
    tensor (rng required unless every tensor is small enough to cover
    fully).
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(
                f"gradient check requires float64 parameters, {name} is {p.dtype}"
            )
    _, grads = loss_fn()
    grads = {k: v.copy() for k, v in grads.items()}
    report = GradCheckReport(eps=eps)
    for name, p in params.items():
        flat = p.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is None or n <= max_coords_per_tensor:
            coords = np.arange(n)
        else:
            if rng is None:
                raise ValueError("rng required when sampling coordinates")
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        gflat = grads[name].reshape(-1)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            lo_plus, _ = loss_fn()
            flat[c] = orig - eps
            lo_minus, _ = loss_fn()
            flat[c] = orig
            numeric = (lo_plus - lo_minus) / (2.0 * eps)
            analytic = float(gflat[c])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), _REL_FLOOR)
            if rel > worst:
                worst = rel
        report.entries.append((name, worst))
    return report
