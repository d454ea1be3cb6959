"""Dense real vectors, tolerance policy, and seeded sampling.

Everything downstream works on 1-D numpy float64 arrays.  Operations accept
batches: an array of shape ``(..., n)`` is treated as a stack of vectors and
all reductions run over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionMismatchError",
    "Tolerances",
    "DEFAULT_TOLERANCES",
    "SampleSpec",
    "as_vector",
    "inner",
    "norm",
    "dist_to_point_set",
]


class DimensionMismatchError(ValueError):
    """Operands live in spaces of different dimension."""


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-D float64 vector, optionally of dimension ``dim``."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValueError(f"expected a 1-D vector of dimension >= 1, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"expected dimension {dim}, got {v.size}")
    return v


def inner(x, y) -> float:
    """Euclidean inner product <x, y>."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatchError(f"inner: dimensions {x.shape[-1]} and {y.shape[-1]} differ")
    return float(np.dot(x, y)) if x.ndim == 1 and y.ndim == 1 else np.sum(x * y, axis=-1)


def norm(x) -> float:
    """Euclidean norm sqrt(<x, x>); reduces over the last axis for batches."""
    x = np.asarray(x, dtype=float)
    s = np.sum(x * x, axis=-1)
    return float(np.sqrt(s)) if np.ndim(s) == 0 else np.sqrt(s)


def dist_to_point_set(x, sample) -> float:
    """Minimum of ||x - y|| over a nonempty finite set of points ``sample``.

    Used by oracles that stand in for a set by a dense sample of its points.
    """
    pts = np.atleast_2d(np.asarray(sample, dtype=float))
    if pts.size == 0:
        raise ValueError("dist_to_point_set: empty sample")
    x = as_vector(x, dim=pts.shape[-1])
    return float(np.min(np.sqrt(np.sum((pts - x) ** 2, axis=-1))))


@dataclass(frozen=True)
class Tolerances:
    """Numerical slack policy.

    eq_tol guards exact-identity checks, conv_tol detects convergence,
    slack_tol is the permitted violation of inequality monitors, and
    subgrad_zero_tol decides the zero-subgradient branch.
    """

    eq_tol: float = 1e-10
    conv_tol: float = 1e-8
    slack_tol: float = 1e-12
    subgrad_zero_tol: float = 1e-12

    def __post_init__(self) -> None:
        for name in ("eq_tol", "conv_tol", "slack_tol", "subgrad_zero_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"Tolerances.{name} must be strictly positive")
        if not (self.slack_tol <= self.eq_tol <= self.conv_tol):
            raise ValueError("required: slack_tol <= eq_tol <= conv_tol")


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class SampleSpec:
    """Seeded uniform sampling box for property verifiers.

    Defaults to 1000 draws from [-5, 5]^dim, which is desk-scale yet wide
    enough around unit-size problem data to expose sign errors.
    """

    dim: int
    count: int = 1000
    low: float = -5.0
    high: float = 5.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("SampleSpec.dim must be >= 1")
        if self.count < 1:
            raise ValueError("SampleSpec.count must be >= 1")
        if not self.low < self.high:
            raise ValueError("SampleSpec requires low < high")

    def points(self) -> np.ndarray:
        """Array of shape (count, dim)."""
        rng = np.random.default_rng(self.seed)
        return rng.uniform(self.low, self.high, size=(self.count, self.dim))

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Two arrays of shape (count, dim), drawn independently."""
        rng = np.random.default_rng(self.seed)
        draw = rng.uniform(self.low, self.high, size=(2, self.count, self.dim))
        return draw[0], draw[1]
