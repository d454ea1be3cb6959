"""String plans, string-averaged operators, and control schedules.

A *string* is a finite index sequence ``t = (t1, ..., tq)`` over a family of
base operators ``U_1, ..., U_m``; it selects the composition
``V[t] = U_tq o ... o U_t2 o U_t1`` (t1 applied first).  A *plan* is a
weighted finite set of strings and induces the string-averaged operator
``T = sum_t w(t) V[t]``.  A *control schedule* is an eventually periodic
sequence of plans (finite preamble followed by a cycle repeated forever),
which keeps the limsup-admissibility question decidable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import DEFAULT_TOLERANCES
from .operators import (
    Composition,
    ConvexCombination,
    Operator,
    propagate_alpha,
)

__all__ = [
    "IndexString",
    "StringPlan",
    "ControlSchedule",
    "AdmissibilityReport",
    "string_operator",
    "averaged_operator",
    "rho_constant",
    "is_fit",
    "check_admissibility",
    "simultaneous_plan",
    "plan_to_json",
    "plan_from_json",
    "signature_str",
]

PlanSignature = tuple  # nested tuples of ((indices...), weight) pairs


@dataclass(frozen=True)
class IndexString:
    """Ordered list of 1-based operator indices; a map {1..q} -> {1..m}."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise ValueError("a string must have length >= 1")
        if any(i < 1 for i in idx):
            raise ValueError("string indices are 1-based and must be >= 1")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)

    def max_index(self) -> int:
        return max(self.indices)


@dataclass(frozen=True)
class StringPlan:
    """A weighted finite set of strings; weights are positive and sum to one."""

    strings: tuple[IndexString, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        strings = tuple(
            s if isinstance(s, IndexString) else IndexString(tuple(s)) for s in self.strings
        )
        weights = tuple(float(w) for w in self.weights)
        if not strings:
            raise ValueError("a plan needs at least one string")
        if len(strings) != len(weights):
            raise ValueError("strings and weights must be parallel")
        if len(set(s.indices for s in strings)) != len(strings):
            raise ValueError("duplicate strings in plan")
        if any(w <= 0.0 for w in weights):
            raise ValueError("plan weights must be strictly positive")
        if abs(sum(weights) - 1.0) > DEFAULT_TOLERANCES.eq_tol:
            raise ValueError(f"plan weights sum to {sum(weights)!r}, not 1")
        object.__setattr__(self, "strings", strings)
        object.__setattr__(self, "weights", weights)

    @property
    def q(self) -> int:
        """Length bound of this plan (longest string)."""
        return max(len(s) for s in self.strings)

    def max_index(self) -> int:
        return max(s.max_index() for s in self.strings)

    def signature(self) -> PlanSignature:
        """Order-independent structural identity: sorted (indices, weight) pairs.

        Weights compare exactly; weights intended equal must be written equal.
        """
        return tuple(sorted((s.indices, w) for s, w in zip(self.strings, self.weights)))


def signature_str(sig: PlanSignature) -> str:
    """Compact, comma-free rendering of a plan signature for CSV/JSON keys."""
    return "|".join("-".join(map(str, idx)) + ":" + format(w, ".17g") for idx, w in sig)


def string_operator(plan: StringPlan, operators: tuple[Operator, ...], t: IndexString) -> Operator:
    """The string operator ``V[t] = U_tq o ... o U_t1`` (first index applied first).

    A length-1 string yields the base operator itself.
    """
    if t.max_index() > len(operators):
        raise IndexError(f"string index {t.max_index()} out of range for m={len(operators)}")
    if len(t) > plan.q:
        raise ValueError("string longer than the plan's length bound")
    chain = tuple(operators[i - 1] for i in t.indices)
    return chain[0] if len(chain) == 1 else Composition(chain)


def averaged_operator(plan: StringPlan, operators: tuple[Operator, ...]) -> Operator:
    """The string-averaged operator ``sum_t w(t) V[t]`` of a plan.

    A single-string plan yields that string operator itself.
    """
    vs = [string_operator(plan, operators, t) for t in plan.strings]
    if len(vs) == 1:
        return vs[0]
    return ConvexCombination(tuple(zip(plan.weights, vs)))


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Eventually periodic plan sequence over a fixed operator family.

    The schedule at step k is ``preamble[k]`` while k < len(preamble) and then
    cycles through ``cycle`` forever.
    """

    operators: tuple[Operator, ...]
    cycle: tuple[StringPlan, ...]
    preamble: tuple[StringPlan, ...] = ()
    _op_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        operators = tuple(self.operators)
        cycle = tuple(self.cycle)
        preamble = tuple(self.preamble)
        if not operators:
            raise ValueError("schedule needs at least one base operator")
        if not cycle:
            raise ValueError("schedule cycle must be nonempty")
        dims = {op.dim for op in operators}
        if len(dims) != 1:
            raise ValueError("base operators mix dimensions")
        m = len(operators)
        for plan in preamble + cycle:
            if plan.max_index() > m:
                raise ValueError(f"plan references operator {plan.max_index()} but m={m}")
        object.__setattr__(self, "operators", operators)
        object.__setattr__(self, "cycle", cycle)
        object.__setattr__(self, "preamble", preamble)

    @property
    def m(self) -> int:
        return len(self.operators)

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def all_plans(self) -> tuple[StringPlan, ...]:
        return self.preamble + self.cycle

    @property
    def max_string_length(self) -> int:
        """The bound M on string lengths over the whole schedule."""
        return max(plan.q for plan in self.all_plans())

    def plan_at(self, k: int) -> StringPlan:
        if k < 0:
            raise IndexError("schedule index must be >= 0")
        if k < len(self.preamble):
            return self.preamble[k]
        return self.cycle[(k - len(self.preamble)) % len(self.cycle)]

    def operator_for(self, plan: StringPlan) -> Operator:
        """Averaged operator of a plan, memoized by structural signature."""
        sig = plan.signature()
        op = self._op_cache.get(sig)
        if op is None:
            op = averaged_operator(plan, self.operators)
            self._op_cache[sig] = op
        return op

    def operator_at(self, k: int) -> Operator:
        return self.operator_for(self.plan_at(k))

    def distinct_operators(self) -> dict[PlanSignature, Operator]:
        """One averaged operator per distinct plan signature in the schedule."""
        out: dict[PlanSignature, Operator] = {}
        for plan in self.all_plans():
            sig = plan.signature()
            if sig not in out:
                out[sig] = self.operator_for(plan)
        return out


def rho_constant(schedule: ControlSchedule) -> float:
    """The step-size constant ``min{ (1/M) * min_i (2 - a_i)/a_i , 1 }``.

    M is the schedule's string-length bound and a_i the relaxation
    coefficient of base operator i (via declaration or structure).  The
    admissible relaxation range of the iteration is [eps, 1 + rho - eps].
    """
    big_m = schedule.max_string_length
    alphas = [propagate_alpha(op) for op in schedule.operators]
    rho_min = min((2.0 - a) / a for a in alphas)
    return min(rho_min / big_m, 1.0)


def is_fit(plan: StringPlan, m: int) -> bool:
    """True iff the plan's strings jointly cover every index 1..m."""
    covered: set[int] = set()
    for s in plan.strings:
        covered.update(s.indices)
    return covered == set(range(1, m + 1))


@dataclass(frozen=True)
class AdmissibilityReport:
    """Outcome of the limsup-admissibility decision on an eventually periodic schedule.

    ``admissible`` refers to the full sequence (preamble included): every plan
    must recur with a bounded gap, which for a preamble plan means its
    signature also occurs in the cycle.  ``tail_admissible`` refers to the
    schedule restarted after the preamble (always true here), with ``k0`` the
    restart index.  ``gap_bounds`` maps each recurring signature to a valid
    recurrence gap (preamble length + cycle length, coarse but always valid);
    ``tight_gap_bounds`` holds the minimal gaps when the cycle is short enough
    to scan.
    """

    admissible: bool
    limsup_set: tuple[PlanSignature, ...]
    gap_bounds: dict[PlanSignature, int]
    violating_index: Optional[int]
    tail_admissible: bool
    k0: int
    tight_gap_bounds: Optional[dict[PlanSignature, int]] = None


def _tight_gaps(
    pre: list[PlanSignature], cyc: list[PlanSignature], limsup: list[PlanSignature]
) -> dict[PlanSignature, int]:
    """Minimal valid recurrence gap per signature, by scanning one preamble + two periods."""
    horizon = list(pre) + cyc * 2
    p, length = len(pre), len(cyc)
    out: dict[PlanSignature, int] = {}
    for sig in limsup:
        worst = 1
        for k in range(p + length):  # beyond p the sequence is periodic
            nxt = next(i for i in range(k, len(horizon)) if horizon[i] == sig)
            worst = max(worst, nxt - k + 1)
        out[sig] = worst
    return out


def check_admissibility(schedule: ControlSchedule) -> AdmissibilityReport:
    """Decide limsup-admissibility of the schedule's plan sequence.

    The signatures occurring in the cycle are exactly those occurring
    infinitely often.  The full sequence is admissible iff every preamble
    signature recurs in the cycle; the tail (cycle-only) sequence is always
    admissible with restart index k0 = len(preamble).
    """
    pre = [plan.signature() for plan in schedule.preamble]
    cyc = [plan.signature() for plan in schedule.cycle]
    limsup = list(dict.fromkeys(cyc))
    violating = next((k for k, sig in enumerate(pre) if sig not in limsup), None)
    admissible = violating is None
    bound = len(pre) + len(cyc)
    gap_bounds = {sig: bound for sig in limsup}
    tight = _tight_gaps(pre, cyc, limsup) if admissible and len(cyc) <= 64 else None
    return AdmissibilityReport(
        admissible=admissible,
        limsup_set=tuple(limsup),
        gap_bounds=gap_bounds,
        violating_index=violating,
        tail_admissible=True,
        k0=len(pre),
        tight_gap_bounds=tight,
    )


def simultaneous_plan(m: int, weights=None) -> StringPlan:
    """The fully simultaneous plan: one length-1 string per base operator."""
    if weights is None:
        weights = (1.0 / m,) * m
    return StringPlan(tuple(IndexString((i,)) for i in range(1, m + 1)), tuple(weights))


def plan_to_json(plan: StringPlan) -> dict:
    return {
        "strings": [list(s.indices) for s in plan.strings],
        "weights": list(plan.weights),
    }


def plan_from_json(doc: dict) -> StringPlan:
    if not isinstance(doc, dict) or "strings" not in doc or "weights" not in doc:
        raise ValueError("plan document needs 'strings' and 'weights'")
    strings = tuple(IndexString(tuple(int(i) for i in s)) for s in doc["strings"])
    return StringPlan(strings, tuple(float(w) for w in doc["weights"]))
