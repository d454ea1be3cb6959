"""Projection operators, their closure under relaxation/averaging/composition,
and sampling-based verifiers for the operator-class inequalities.

Operator expressions are immutable trees.  Leaves are closed-form metric
projections (half-space, hyperplane, ball, box) and the identity; interior
nodes are

* ``Relaxation(T, lam)``:  ``(1 - lam) * Id + lam * T`` with lam in [0, 2],
* ``ConvexCombination``:   positive weights summing to one,
* ``Composition``:         ops applied left to right (``ops[0]`` first).

Every metric projection is firmly nonexpansive (FNE), i.e. satisfies
``<T(x) - T(y), x - y> >= ||T(x) - T(y)||^2``, and hence a nonexpansive
cutter.  ``propagate_alpha`` turns the tree structure into the relaxation
coefficient ``alpha`` for which the expression is an alpha-relaxation of
some FNE operator; the verifiers below check the implied inequalities on
seeded samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_TOLERANCES,
    DimensionMismatchError,
    SampleSpec,
    Tolerances,
    as_vector,
)

__all__ = [
    "AlphaUnknownError",
    "Operator",
    "HalfspaceProjection",
    "HyperplaneProjection",
    "BallProjection",
    "BoxProjection",
    "Identity",
    "Relaxation",
    "ConvexCombination",
    "Composition",
    "FixedPointWitness",
    "CheckReport",
    "apply",
    "residual",
    "propagate_alpha",
    "check_nonexpansive",
    "check_rho_fne",
    "check_cutter",
    "projection_witness_points",
    "operator_to_json",
    "operator_from_json",
]


class AlphaUnknownError(ValueError):
    """The relaxation calculus does not cover this tree shape; declare alpha explicitly."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class Operator:
    """Base class for immutable operator expressions on R^dim."""

    dim: int

    def apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)


@dataclass(frozen=True, eq=False)
class HalfspaceProjection(Operator):
    """Metric projection onto the half-space {u : <a, u> <= b}.

    Points on the boundary are fixed (the positive-part factor is zero there).
    """

    a: np.ndarray
    b: float
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        a = _readonly(as_vector(self.a).copy())
        if float(np.dot(a, a)) == 0.0:
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        excess = np.maximum(0.0, x @ self.a - self.b)
        return x - (excess / float(self.a @ self.a))[..., None] * self.a


@dataclass(frozen=True, eq=False)
class HyperplaneProjection(Operator):
    """Metric projection onto the hyperplane {u : <a, u> = b}."""

    a: np.ndarray
    b: float
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        a = _readonly(as_vector(self.a).copy())
        if float(np.dot(a, a)) == 0.0:
            raise ValueError("hyperplane normal must be nonzero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.a.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x - ((x @ self.a - self.b) / float(self.a @ self.a))[..., None] * self.a


@dataclass(frozen=True, eq=False)
class BallProjection(Operator):
    """Metric projection onto the closed ball of given center and radius."""

    center: np.ndarray
    radius: float
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        c = _readonly(as_vector(self.center).copy())
        if not float(self.radius) > 0.0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        delta = x - self.center
        d = np.sqrt(np.sum(delta * delta, axis=-1))
        scale = np.where(d > self.radius, self.radius / np.where(d == 0.0, 1.0, d), 1.0)
        return self.center + scale[..., None] * delta


@dataclass(frozen=True, eq=False)
class BoxProjection(Operator):
    """Componentwise clamp onto the box [lo, hi] (degenerate edges allowed)."""

    lo: np.ndarray
    hi: np.ndarray
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        lo = _readonly(as_vector(self.lo).copy())
        hi = _readonly(as_vector(self.hi, dim=lo.size).copy())
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class Identity(Operator):
    """The identity operator."""

    dim_: int
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        if self.dim_ < 1:
            raise ValueError("dimension must be >= 1")

    @property
    def dim(self) -> int:
        return self.dim_

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class Relaxation(Operator):
    """``(1 - lam) * Id + lam * T`` for lam in [0, 2]; lam = 2 is the reflection.

    lam = 0 returns the input unchanged and lam = 1 returns T(x) exactly
    (no arithmetic on those paths), so relaxation endpoints are bit-faithful.
    """

    inner: Operator
    lam: float
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        lam = float(self.lam)
        if not 0.0 <= lam <= 2.0:
            raise ValueError(f"relaxation parameter must be in [0, 2], got {lam}")
        object.__setattr__(self, "lam", lam)

    @property
    def dim(self) -> int:
        return self.inner.dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        if self.lam == 0.0:
            return np.asarray(x, dtype=float)
        tx = self.inner.apply(x)
        if self.lam == 1.0:
            return tx
        return x + self.lam * (tx - x)


@dataclass(frozen=True, eq=False)
class ConvexCombination(Operator):
    """Weighted average ``sum_i w_i T_i`` with strictly positive weights summing to one."""

    terms: tuple[tuple[float, Operator], ...]
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        terms = tuple((float(w), op) for w, op in self.terms)
        if not terms:
            raise ValueError("convex combination needs at least one term")
        if any(w <= 0.0 for w, _ in terms):
            raise ValueError("convex combination weights must be strictly positive")
        total = sum(w for w, _ in terms)
        if abs(total - 1.0) > DEFAULT_TOLERANCES.eq_tol:
            raise ValueError(f"convex combination weights sum to {total!r}, not 1")
        dims = {op.dim for _, op in terms}
        if len(dims) != 1:
            raise DimensionMismatchError("convex combination mixes dimensions")
        object.__setattr__(self, "terms", terms)

    @property
    def dim(self) -> int:
        return self.terms[0][1].dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = self.terms[0][0] * self.terms[0][1].apply(x)
        for w, op in self.terms[1:]:
            out = out + w * op.apply(x)
        return out


@dataclass(frozen=True, eq=False)
class Composition(Operator):
    """Composition applied in list order: ``ops[0]`` first, ``ops[-1]`` last."""

    ops: tuple[Operator, ...]
    declared_alpha: Optional[float] = None

    def __post_init__(self) -> None:
        ops = tuple(self.ops)
        if not ops:
            raise ValueError("composition needs at least one operator")
        dims = {op.dim for op in ops}
        if len(dims) != 1:
            raise DimensionMismatchError("composition mixes dimensions")
        object.__setattr__(self, "ops", ops)

    @property
    def dim(self) -> int:
        return self.ops[0].dim

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.asarray(x, dtype=float)
        for op in self.ops:
            out = op.apply(out)
        return out


def apply(op: Operator, x) -> np.ndarray:
    """Evaluate the operator expression at x (a vector or a stack of vectors)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != op.dim:
        raise DimensionMismatchError(f"operator expects dimension {op.dim}, got {x.shape[-1]}")
    return op.apply(x)


def residual(op: Operator, x) -> float:
    """||T(x) - x||, the displacement of x under the operator."""
    x = np.asarray(x, dtype=float)
    d = apply(op, x) - x
    s = np.sum(d * d, axis=-1)
    return float(np.sqrt(s)) if np.ndim(s) == 0 else np.sqrt(s)


def propagate_alpha(op: Operator) -> float:
    """Best alpha in (0, 2] for which ``op`` is an alpha-relaxation of an FNE operator.

    Rules: primitives and the identity are FNE (alpha = 1); an alpha-relaxed
    FNE relaxed again by lam is (alpha * lam)-relaxed FNE (relaxations nest
    multiplicatively); a convex combination inherits the worst (largest)
    alpha of its terms; a composition of m factors, each rho-FNE with
    rho = (2 - alpha)/alpha at the worst alpha, is (rho/m)-FNE, i.e.
    2/(1 + rho/m)-relaxed FNE.  A ``declared_alpha`` set on a node overrides
    the structural rule.  Raises :class:`AlphaUnknownError` when nesting
    pushes alpha outside (0, 2].
    """
    declared = getattr(op, "declared_alpha", None)
    if declared is not None:
        declared = float(declared)
        if not 0.0 < declared <= 2.0:
            raise ValueError(f"declared_alpha must be in (0, 2], got {declared}")
        return declared
    if isinstance(op, (HalfspaceProjection, HyperplaneProjection, BallProjection, BoxProjection, Identity)):
        return 1.0
    if isinstance(op, Relaxation):
        if op.lam == 0.0:
            return 1.0  # the zero relaxation is the identity
        alpha = propagate_alpha(op.inner) * op.lam
        if not 0.0 < alpha <= 2.0:
            raise AlphaUnknownError(
                f"alpha unknown: nested relaxation yields alpha = {alpha:.6g} outside (0, 2]"
            )
        return alpha
    if isinstance(op, ConvexCombination):
        return max(propagate_alpha(child) for _, child in op.terms)
    if isinstance(op, Composition):
        alpha_max = max(propagate_alpha(child) for child in op.ops)
        rho = (2.0 - alpha_max) / alpha_max / len(op.ops)
        return 2.0 / (1.0 + rho)
    raise AlphaUnknownError(f"alpha unknown for node type {type(op).__name__}")


@dataclass(frozen=True)
class FixedPointWitness:
    """Finite set of points certified to be fixed points of some operator."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise ValueError("witness set must be nonempty")
        if not np.all(np.isfinite(pts)):
            raise ValueError("witness points must be finite")
        object.__setattr__(self, "points", _readonly(pts.copy()))

    def verify(self, op: Operator, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
        """Max residual of the witnesses under op; raises if any exceeds eq_tol."""
        res = residual(op, self.points)
        worst = float(np.max(res))
        if worst > tolerances.eq_tol:
            raise ValueError(f"witness point is not fixed: residual {worst:.3e}")
        return worst


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a sampled inequality check.

    ``max_violation`` is the largest amount by which the inequality failed
    over the sample (negative values mean it held with margin); the check
    passes when that does not exceed the slack tolerance.
    """

    check: str
    passed: bool
    max_violation: float
    samples: int
    detail: str = field(default="")

    def __bool__(self) -> bool:
        return self.passed


def check_nonexpansive(
    op: Operator,
    samples: SampleSpec | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckReport:
    """Sample the nonexpansiveness inequality ||T(x) - T(y)|| <= ||x - y||."""
    samples = samples or SampleSpec(dim=op.dim)
    xs, ys = samples.pairs()
    tx, ty = apply(op, xs), apply(op, ys)
    viol = np.sqrt(np.sum((tx - ty) ** 2, axis=-1)) - np.sqrt(np.sum((xs - ys) ** 2, axis=-1))
    worst = float(np.max(viol))
    return CheckReport("nonexpansive", worst <= tolerances.slack_tol, worst, samples.count)


def check_rho_fne(
    op: Operator,
    rho: float,
    samples: SampleSpec | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckReport:
    """Sample the rho-firm-nonexpansiveness inequality.

    ||T(x) - T(y)||^2 <= ||x - y||^2 - rho * ||(x - T(x)) - (y - T(y))||^2
    """
    if rho < 0.0:
        raise ValueError("rho must be nonnegative")
    samples = samples or SampleSpec(dim=op.dim)
    xs, ys = samples.pairs()
    tx, ty = apply(op, xs), apply(op, ys)
    lhs = np.sum((tx - ty) ** 2, axis=-1)
    gap = np.sum(((xs - tx) - (ys - ty)) ** 2, axis=-1)
    viol = lhs - (np.sum((xs - ys) ** 2, axis=-1) - rho * gap)
    worst = float(np.max(viol))
    return CheckReport(
        f"rho_fne(rho={rho:g})", worst <= tolerances.slack_tol, worst, samples.count
    )


def check_cutter(
    op: Operator,
    witness: FixedPointWitness,
    samples: SampleSpec | None = None,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> CheckReport:
    """Sample the cutter inequality <z - T(x), x - T(x)> <= 0 over witness points z."""
    samples = samples or SampleSpec(dim=op.dim)
    xs = samples.points()
    tx = apply(op, xs)
    worst = -np.inf
    for z in witness.points:
        worst = max(worst, float(np.max(np.sum((z - tx) * (xs - tx), axis=-1))))
    return CheckReport(
        "cutter", worst <= tolerances.slack_tol, worst, samples.count * len(witness.points)
    )


def projection_witness_points(
    op: Operator,
    samples: SampleSpec | None = None,
    count: int = 8,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> FixedPointWitness:
    """Fixed points of an idempotent operator, obtained by projecting sample points.

    Valid for the primitive projections (their image equals their fixed-point
    set); the construction is re-certified by a residual check and raises if
    the operator is not actually idempotent on the sample.
    """
    samples = samples or SampleSpec(dim=op.dim, count=count, seed=7)
    pts = apply(op, samples.points()[:count])
    witness = FixedPointWitness(pts)
    witness.verify(op, tolerances)
    return witness


# JSON layout: a "kind" tag plus the node's fields, children nested.

_PRIMITIVE_KINDS = ("halfspace", "hyperplane", "ball", "box", "identity")


def operator_to_json(op: Operator) -> dict:
    """Serialize an operator expression to a JSON-compatible dict."""
    doc: dict
    if isinstance(op, HalfspaceProjection):
        doc = {"kind": "halfspace", "a": op.a.tolist(), "b": op.b}
    elif isinstance(op, HyperplaneProjection):
        doc = {"kind": "hyperplane", "a": op.a.tolist(), "b": op.b}
    elif isinstance(op, BallProjection):
        doc = {"kind": "ball", "center": op.center.tolist(), "radius": op.radius}
    elif isinstance(op, BoxProjection):
        doc = {"kind": "box", "lo": op.lo.tolist(), "hi": op.hi.tolist()}
    elif isinstance(op, Identity):
        doc = {"kind": "identity", "dim": op.dim}
    elif isinstance(op, Relaxation):
        doc = {"kind": "relaxation", "lam": op.lam, "inner": operator_to_json(op.inner)}
    elif isinstance(op, ConvexCombination):
        doc = {
            "kind": "combination",
            "terms": [{"weight": w, "op": operator_to_json(child)} for w, child in op.terms],
        }
    elif isinstance(op, Composition):
        doc = {"kind": "composition", "ops": [operator_to_json(child) for child in op.ops]}
    else:
        raise TypeError(f"cannot serialize operator of type {type(op).__name__}")
    if getattr(op, "declared_alpha", None) is not None:
        doc["alpha"] = op.declared_alpha
    return doc


def operator_from_json(doc: dict) -> Operator:
    """Inverse of :func:`operator_to_json`."""
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError("operator document must be an object with a 'kind' tag")
    kind = doc["kind"]
    alpha = doc.get("alpha")
    if kind == "halfspace":
        return HalfspaceProjection(np.asarray(doc["a"], float), doc["b"], declared_alpha=alpha)
    if kind == "hyperplane":
        return HyperplaneProjection(np.asarray(doc["a"], float), doc["b"], declared_alpha=alpha)
    if kind == "ball":
        return BallProjection(np.asarray(doc["center"], float), doc["radius"], declared_alpha=alpha)
    if kind == "box":
        return BoxProjection(np.asarray(doc["lo"], float), np.asarray(doc["hi"], float), declared_alpha=alpha)
    if kind == "identity":
        return Identity(int(doc["dim"]), declared_alpha=alpha)
    if kind == "relaxation":
        return Relaxation(operator_from_json(doc["inner"]), doc["lam"], declared_alpha=alpha)
    if kind == "combination":
        terms = tuple((t["weight"], operator_from_json(t["op"])) for t in doc["terms"])
        return ConvexCombination(terms, declared_alpha=alpha)
    if kind == "composition":
        return Composition(tuple(operator_from_json(d) for d in doc["ops"]), declared_alpha=alpha)
    raise ValueError(f"unknown operator kind {kind!r}")
