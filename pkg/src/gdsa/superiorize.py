"""Superiorization: steering the feasibility-seeking iteration with summable
objective-reducing perturbations.

At step k the iterate is shifted by ``sum_n beta_{k,n} * v_{k,n}`` before the
relaxed plan operator is applied.  Each direction is the negated, normalized
subgradient of the objective at the partially shifted point (or zero when the
selected subgradient vanishes), so the shift never increases the objective
locally while the total shift budget ``sum_k sum_n beta_{k,n}`` stays finite.
Because the underlying iteration tolerates any summable bounded perturbation,
the superiorized run still converges into the target set; the monitor at the
bottom checks the resulting alternative: either the limit already minimizes
the objective over the target set, or the tail of the run decreases the
distance to every constrained minimizer strictly.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DEFAULT_TOLERANCES, Tolerances, as_vector
from .engine import IterationTrace, RelaxationSchedule, StopRule, _run_loop
from .strings import ControlSchedule

__all__ = [
    "ObjectiveFunction",
    "WeightedSquaredNorm",
    "L1Norm",
    "MaxOfAffine",
    "SuperiorizationSchedule",
    "StrictFejerReport",
    "perturbation_directions",
    "superiorized_run",
    "strict_fejer_monitor",
    "find_strict_fejer_k0",
    "objective_to_json",
    "objective_from_json",
]


class ObjectiveFunction(abc.ABC):
    """Convex continuous objective with a subgradient selection rule.

    ``subgradient`` must return one element of the subdifferential at x;
    convexity makes the set nonempty everywhere.  Selections obey
    ``phi(y) >= phi(x) + <s(x), y - x>`` for all y.
    """

    @abc.abstractmethod
    def evaluate(self, x: np.ndarray) -> float: ...

    @abc.abstractmethod
    def subgradient(self, x: np.ndarray) -> np.ndarray: ...

    @property
    def dim(self) -> Optional[int]:
        """Required input dimension, or None when dimension-agnostic."""
        return None

    def __call__(self, x) -> float:
        return self.evaluate(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class WeightedSquaredNorm(ObjectiveFunction):
    """``phi(x) = weight * ||x - center||^2`` (differentiable everywhere)."""

    center: np.ndarray
    weight: float = 1.0

    def __post_init__(self) -> None:
        c = as_vector(self.center).copy()
        c.flags.writeable = False
        if self.weight <= 0.0:
            raise ValueError("weight must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "weight", float(self.weight))

    @property
    def dim(self) -> int:
        return self.center.size

    def evaluate(self, x: np.ndarray) -> float:
        d = x - self.center
        return float(self.weight * np.sum(d * d))

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.weight * (x - self.center)


@dataclass(frozen=True)
class L1Norm(ObjectiveFunction):
    """``phi(x) = sum_i |x_i|``; the selection picks 0 at zero coordinates
    (minimal-norm subgradient, so the zero branch fires exactly at the minimizer)."""

    def evaluate(self, x: np.ndarray) -> float:
        return float(np.sum(np.abs(x)))

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        return np.sign(x)


@dataclass(frozen=True)
class MaxOfAffine(ObjectiveFunction):
    """``phi(x) = max_i (<a_i, x> + b_i)``; ties broken by lowest piece index."""

    pieces: tuple[tuple[np.ndarray, float], ...]

    def __post_init__(self) -> None:
        if not self.pieces:
            raise ValueError("need at least one affine piece")
        pieces = []
        dim = None
        for a, b in self.pieces:
            a = as_vector(a, dim=dim).copy()
            a.flags.writeable = False
            dim = a.size
            pieces.append((a, float(b)))
        object.__setattr__(self, "pieces", tuple(pieces))

    @property
    def dim(self) -> int:
        return self.pieces[0][0].size

    def _values(self, x: np.ndarray) -> np.ndarray:
        return np.array([float(a @ x) + b for a, b in self.pieces])

    def evaluate(self, x: np.ndarray) -> float:
        return float(np.max(self._values(x)))

    def subgradient(self, x: np.ndarray) -> np.ndarray:
        return self.pieces[int(np.argmax(self._values(x)))][0].copy()


@dataclass(frozen=True)
class SuperiorizationSchedule:
    """Inner-step counts and shift sizes: N_k = steps and
    ``beta_{k,n} = beta0 * decay^k / N_k``.

    beta0 must be strictly positive and decay in (0, 1), which certifies the
    double series ``sum_k sum_n beta_{k,n} = beta0 / (1 - decay)`` finite.
    """

    beta0: float = 0.5
    decay: float = 0.9
    steps: int = 1

    def __post_init__(self) -> None:
        if self.beta0 <= 0.0:
            raise ValueError("beta0 must be strictly positive")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.steps < 1:
            raise ValueError("steps must be a positive integer")

    def betas_at(self, k: int) -> np.ndarray:
        return np.full(self.steps, self.beta0 * self.decay**k / self.steps)

    @property
    def total_budget(self) -> float:
        return self.beta0 / (1.0 - self.decay)

    def spent_through(self, k: int) -> float:
        """Total shift budget consumed by steps 0..k."""
        return self.beta0 * (1.0 - self.decay ** (k + 1)) / (1.0 - self.decay)


def perturbation_directions(
    y: np.ndarray,
    phi: ObjectiveFunction,
    n_steps: int,
    betas,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> list[np.ndarray]:
    """Steering directions v_1..v_N for one iteration, computed sequentially.

    v_{n+1} is the negated normalized subgradient selection at the partially
    shifted point ``y + sum_{i<=n} betas[i] * v_i``, or zero when the selected
    subgradient's norm is at or below subgrad_zero_tol.
    """
    betas = np.asarray(betas, dtype=float)
    if len(betas) != n_steps:
        raise ValueError("betas must have one entry per inner step")
    point = np.asarray(y, dtype=float).copy()
    dirs: list[np.ndarray] = []
    for n in range(n_steps):
        if not np.isfinite(phi.evaluate(point)):
            raise ValueError("objective evaluated to a non-finite value")
        s = phi.subgradient(point)
        ns = float(np.sqrt(np.sum(s * s)))
        if not np.isfinite(ns):
            raise ValueError("subgradient selection is non-finite")
        v = np.zeros_like(point) if ns <= tolerances.subgrad_zero_tol else -s / ns
        dirs.append(v)
        point = point + betas[n] * v
    return dirs


def superiorized_run(
    schedule: ControlSchedule,
    relax: RelaxationSchedule,
    phi: ObjectiveFunction,
    sup: SuperiorizationSchedule,
    y0,
    stop: StopRule = StopRule(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> IterationTrace:
    """Run the superiorized iteration from y0.

    Step k shifts the iterate by the steering directions' weighted sum and
    applies the relaxed plan operator at the shifted point.  The trace
    additionally records the objective value at every iterate and the shift
    budget remaining after every step.
    """

    def perturbation_at(k: int, y: np.ndarray) -> np.ndarray:
        betas = sup.betas_at(k)
        dirs = perturbation_directions(y, phi, sup.steps, betas, tolerances)
        total = np.zeros_like(y)
        for b, v in zip(betas, dirs):
            total = total + b * v
        return total

    def budget_remaining_at(k: int) -> float:
        return sup.total_budget - sup.spent_through(k)

    return _run_loop(
        schedule,
        relax,
        y0,
        stop,
        perturbation_at,
        phi=phi.evaluate,
        budget_remaining_at=budget_remaining_at,
    )


@dataclass(frozen=True)
class StrictFejerReport:
    """Outcome of the strict distance-decrease check against a constrained minimizer.

    When the trace limit already sits at the witness the check is not
    applicable (``limit_in_cmin`` is true and ``passed`` is None); otherwise
    ``passed`` states whether every recorded squared distance to the witness
    decreased by more than the slack tolerance from step k0 on.
    ``decrements`` holds ``||y_k - z||^2 - ||y_{k+1} - z||^2`` for all steps.
    """

    passed: Optional[bool]
    limit_in_cmin: bool
    k0: int
    decrements: np.ndarray
    message: str = ""


def strict_fejer_monitor(
    trace: IterationTrace,
    cmin_witness,
    k0: int = 0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> StrictFejerReport:
    """Check strict distance decrease toward a certified constrained minimizer.

    The witness must be oracle-certified as a minimizer of the objective over
    the target set.  Requires the trace to record at least k0 + 2 iterates.
    """
    if k0 < 0:
        raise ValueError("k0 must be >= 0")
    if len(trace.iterates) < k0 + 2:
        raise ValueError(f"trace too short: needs at least {k0 + 2} iterates")
    z = as_vector(cmin_witness, dim=trace.iterates.shape[-1])
    d2 = np.sum((trace.iterates - z) ** 2, axis=-1)
    decrements = d2[:-1] - d2[1:]
    if float(np.sqrt(d2[-1])) <= tolerances.conv_tol:
        return StrictFejerReport(None, True, k0, decrements, "limit in C_min")
    ok = bool(np.all(decrements[k0:] > tolerances.slack_tol))
    return StrictFejerReport(ok, False, k0, decrements)


def find_strict_fejer_k0(
    trace: IterationTrace,
    cmin_witness,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> Optional[int]:
    """Smallest k0 for which the strict monitor passes, or None.

    None is returned both when no k0 works and when the limit lies at the
    witness (the check is then not applicable).
    """
    report = strict_fejer_monitor(trace, cmin_witness, 0, tolerances)
    if report.limit_in_cmin:
        return None
    bad = np.nonzero(report.decrements <= tolerances.slack_tol)[0]
    k0 = int(bad[-1]) + 1 if len(bad) else 0
    if k0 > len(report.decrements) - 1:
        return None
    return k0


def objective_to_json(phi: ObjectiveFunction) -> dict:
    if isinstance(phi, L1Norm):
        return {"kind": "l1"}
    if isinstance(phi, WeightedSquaredNorm):
        return {"kind": "wsqnorm", "center": phi.center.tolist(), "weight": phi.weight}
    if isinstance(phi, MaxOfAffine):
        return {
            "kind": "max_affine",
            "pieces": [{"a": a.tolist(), "b": b} for a, b in phi.pieces],
        }
    raise TypeError(f"cannot serialize objective of type {type(phi).__name__}")


def objective_from_json(doc: dict) -> ObjectiveFunction:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("objective document must be an object with a 'kind' tag")
    kind = doc["kind"]
    if kind == "l1":
        return L1Norm()
    if kind == "wsqnorm":
        return WeightedSquaredNorm(np.asarray(doc["center"], float), doc.get("weight", 1.0))
    if kind == "max_affine":
        pieces = tuple((np.asarray(p["a"], float), float(p["b"])) for p in doc["pieces"])
        return MaxOfAffine(pieces)
    raise ValueError(f"unknown objective kind {kind!r}")
