"""Problem instances, brute-force oracles, experiment configuration, and
trace/summary persistence.

The oracles here form the independent verification channel: they rely only on
closed-form projections, grid search, and plain fixed-point (Picard)
iteration, never on the relaxed engine loop they are used to check.  They are
deliberately restricted to dimension <= 3.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import DEFAULT_TOLERANCES, Tolerances, as_vector
from .engine import (
    IterationTrace,
    PerturbationSchedule,
    RelaxationSchedule,
    StopRule,
)
from .operators import (
    BallProjection,
    BoxProjection,
    ConvexCombination,
    Operator,
    apply,
    operator_from_json,
    operator_to_json,
    residual,
)
from .strings import (
    ControlSchedule,
    StringPlan,
    plan_from_json,
    plan_to_json,
    signature_str,
)
from .superiorize import (
    ObjectiveFunction,
    SuperiorizationSchedule,
    objective_from_json,
)

__all__ = [
    "ConfigError",
    "OracleIterationCapError",
    "ProblemInstance",
    "GridSpec",
    "ExperimentConfig",
    "proximity_value",
    "proximity_argmin_oracle",
    "fixed_point_oracle",
    "constrained_min_oracle",
    "certified_c_witness",
    "two_interval_problem",
    "two_ball_problem",
    "segment_problem",
    "overlapping_ball_problem",
    "load_config",
    "parse_config",
    "config_hash",
    "write_trace_csv",
    "write_summary_json",
]


class ConfigError(ValueError):
    """Malformed experiment configuration."""


class OracleIterationCapError(RuntimeError):
    """Plain fixed-point iteration hit its hard cap without converging."""


_ORACLE_DIM_LIMIT = 3


@dataclass(frozen=True)
class ProblemInstance:
    """A finite family of closed convex sets, given by their projections.

    ``consistent`` is None until classified by an oracle.  ``known_c_points``
    are certified members of the target set of the simultaneous iteration
    (the common intersection when consistent).
    """

    dim: int
    projectors: tuple[Operator, ...]
    consistent: Optional[bool] = None
    known_c_points: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        projectors = tuple(self.projectors)
        if not projectors:
            raise ValueError("a problem needs at least one set")
        for p in projectors:
            if p.dim != self.dim:
                raise ValueError("projector dimension differs from problem dimension")
        pts = tuple(as_vector(p, dim=self.dim) for p in self.known_c_points)
        if self.consistent and pts:
            for z in pts:
                for p in projectors:
                    if residual(p, z) > DEFAULT_TOLERANCES.eq_tol:
                        raise ValueError("known point is not a member of every set")
        object.__setattr__(self, "projectors", projectors)
        object.__setattr__(self, "known_c_points", pts)

    @property
    def m(self) -> int:
        return len(self.projectors)

    def equal_weights(self) -> tuple[float, ...]:
        return (1.0 / self.m,) * self.m


@dataclass(frozen=True)
class GridSpec:
    """Uniform search grid [low, high]^dim with ``points`` nodes per axis."""

    low: float = -5.0
    high: float = 5.0
    points: int = 41

    def __post_init__(self) -> None:
        if not self.low < self.high:
            raise ValueError("grid requires low < high")
        if self.points < 2:
            raise ValueError("grid needs at least 2 points per axis")

    def mesh(self, dim: int) -> np.ndarray:
        axes = [np.linspace(self.low, self.high, self.points)] * dim
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def cell(self) -> float:
        return (self.high - self.low) / (self.points - 1)


def _check_weights(weights, m: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"need {m} weights, got shape {w.shape}")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    if abs(float(np.sum(w)) - 1.0) > DEFAULT_TOLERANCES.eq_tol:
        raise ValueError(f"weights sum to {float(np.sum(w))!r}, not 1")
    return w


def proximity_value(problem: ProblemInstance, weights, x) -> float:
    """Weighted mean squared violation ``(1/2) sum_i w_i ||P_i(x) - x||^2``.

    Zero exactly on the intersection of all sets; its minimizers are the
    fixed points of the weighted simultaneous projection operator.
    Accepts batches of points.
    """
    w = _check_weights(weights, problem.m)
    x = np.asarray(x, dtype=float)
    total = 0.0
    for wi, p in zip(w, problem.projectors):
        d = apply(p, x) - x
        total = total + wi * np.sum(d * d, axis=-1)
    return 0.5 * total if np.ndim(total) else float(0.5 * total)


def _pattern_search(f, start: np.ndarray, h0: float, h_min: float) -> np.ndarray:
    """Coordinate pattern search with step halving; for convex f this refines
    a grid argmin down to h_min."""
    x = np.asarray(start, dtype=float).copy()
    fx = f(x)
    h = h0
    dim = x.size
    while h > h_min:
        improved = False
        for i in range(dim):
            for sgn in (1.0, -1.0):
                cand = x.copy()
                cand[i] += sgn * h
                fc = f(cand)
                if fc < fx:
                    x, fx = cand, fc
                    improved = True
        if not improved:
            h *= 0.5
    return x


def proximity_argmin_oracle(
    problem: ProblemInstance,
    weights,
    grid: GridSpec = GridSpec(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Brute-force minimizer of the proximity function: grid search plus
    halving-step refinement down to conv_tol.  Restricted to dim <= 3."""
    if problem.dim > _ORACLE_DIM_LIMIT:
        raise ValueError(f"oracle restricted to dimension <= {_ORACLE_DIM_LIMIT}")
    w = _check_weights(weights, problem.m)
    mesh = grid.mesh(problem.dim)
    values = proximity_value(problem, w, mesh)
    best = mesh[int(np.argmin(values))]
    return _pattern_search(
        lambda x: proximity_value(problem, w, x), best, grid.cell, tolerances.conv_tol / 10.0
    )


def fixed_point_oracle(
    op: Operator,
    x0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    max_iters: int = 10_000_000,
) -> np.ndarray:
    """Plain Picard iteration of ``op`` from x0 down to residual conv_tol/100.

    Independent of the relaxed engine loop.  The caller is responsible for
    passing an operator for which plain iteration converges (averaged
    firmly-nonexpansive maps qualify); a hard iteration cap guards the rest.
    """
    x = as_vector(x0, dim=op.dim)
    tol = tolerances.conv_tol / 100.0
    for _ in range(max_iters):
        tx = apply(op, x)
        if float(np.sqrt(np.sum((tx - x) ** 2))) <= tol:
            return tx
        x = tx
    raise OracleIterationCapError(f"no fixed point within {max_iters} plain iterations")


def _batched_picard(
    op: Operator, pts: np.ndarray, tol: float, max_iters: int = 1_000_000
) -> np.ndarray:
    """Plain fixed-point iteration applied to a whole stack of start points."""
    x = np.asarray(pts, dtype=float)
    for _ in range(max_iters):
        tx = apply(op, x)
        if float(np.max(np.sqrt(np.sum((tx - x) ** 2, axis=-1)))) <= tol:
            return tx
        x = tx
    raise OracleIterationCapError(f"no fixed points within {max_iters} plain iterations")


def constrained_min_oracle(
    problem: ProblemInstance,
    weights,
    phi: ObjectiveFunction,
    grid: GridSpec = GridSpec(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> np.ndarray:
    """Brute-force minimizer of ``phi`` over the target set of the weighted
    simultaneous iteration.

    The target set is sampled densely by plain fixed-point iteration from
    every grid node; the best sample is refined by a projected pattern search
    (each candidate is mapped back into the set before evaluation).
    Restricted to dim <= 3.
    """
    if problem.dim > _ORACLE_DIM_LIMIT:
        raise ValueError(f"oracle restricted to dimension <= {_ORACLE_DIM_LIMIT}")
    w = _check_weights(weights, problem.m)
    avg = (
        problem.projectors[0]
        if problem.m == 1
        else ConvexCombination(tuple(zip(w, problem.projectors)))
    )

    def project(x: np.ndarray) -> np.ndarray:
        return fixed_point_oracle(avg, x, tolerances, max_iters=1_000_000)

    samples = _batched_picard(avg, grid.mesh(problem.dim), tolerances.conv_tol / 100.0)
    values = np.array([phi.evaluate(s) for s in samples])
    best = samples[int(np.argmin(values))]

    def f(x: np.ndarray) -> float:
        return phi.evaluate(project(x))

    refined = _pattern_search(f, best, grid.cell, tolerances.conv_tol / 10.0)
    return project(refined)


def certified_c_witness(
    schedule: ControlSchedule,
    x0,
    tolerances: Tolerances = DEFAULT_TOLERANCES,
    residual_bound: Optional[float] = None,
) -> Optional[np.ndarray]:
    """A point fixed by every distinct scheduled averaged operator, or None.

    Found by plain iteration of one averaged operator and certified by
    checking its residual under all the others.
    """
    ops = list(schedule.distinct_operators().values())
    try:
        z = fixed_point_oracle(ops[0], x0, tolerances, max_iters=1_000_000)
    except OracleIterationCapError:
        return None
    bound = residual_bound if residual_bound is not None else 10.0 * tolerances.conv_tol
    if all(residual(op, z) <= bound for op in ops):
        return z
    return None


def classify_consistency(
    problem: ProblemInstance,
    weights=None,
    grid: GridSpec = GridSpec(),
    tolerances: Tolerances = DEFAULT_TOLERANCES,
) -> ProblemInstance:
    """Return a copy of the problem with ``consistent`` decided by the
    proximity oracle (zero minimum means the sets intersect)."""
    w = weights if weights is not None else problem.equal_weights()
    argmin = proximity_argmin_oracle(problem, w, grid, tolerances)
    fmin = proximity_value(problem, w, argmin)
    consistent = bool(fmin <= tolerances.eq_tol)
    points = problem.known_c_points if problem.known_c_points else (argmin,)
    return replace(problem, consistent=consistent, known_c_points=points)


# Ready-made desk-scale instances used across the test and acceptance suites.


def two_interval_problem() -> ProblemInstance:
    """Two disjoint intervals [-3, -1] and [1, 3] on the line; the equally
    weighted simultaneous iteration settles at 0, the midpoint of the gap."""
    return ProblemInstance(
        dim=1,
        projectors=(
            BoxProjection(np.array([-3.0]), np.array([-1.0])),
            BoxProjection(np.array([1.0]), np.array([3.0])),
        ),
        consistent=False,
    )


def two_ball_problem() -> ProblemInstance:
    """Two disjoint unit balls centered (-2, 1) and (2, 1); the equally
    weighted simultaneous iteration settles at (0, 1)."""
    return ProblemInstance(
        dim=2,
        projectors=(
            BallProjection(np.array([-2.0, 1.0]), 1.0),
            BallProjection(np.array([2.0, 1.0]), 1.0),
        ),
        consistent=False,
    )


def segment_problem() -> ProblemInstance:
    """A single degenerate box: the segment from (-1, 0) to (1, 0)."""
    return ProblemInstance(
        dim=2,
        projectors=(BoxProjection(np.array([-1.0, 0.0]), np.array([1.0, 0.0])),),
        consistent=True,
        known_c_points=(np.array([0.0, 0.0]),),
    )


def overlapping_ball_problem() -> ProblemInstance:
    """Two balls of radius sqrt(2) centered (-1, 0) and (1, 0); their
    intersection is a lens around the origin, so the problem is consistent."""
    r = float(np.sqrt(2.0))
    return ProblemInstance(
        dim=2,
        projectors=(
            BallProjection(np.array([-1.0, 0.0]), r),
            BallProjection(np.array([1.0, 0.0]), r),
        ),
        consistent=True,
        known_c_points=(np.array([0.0, 0.0]),),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs, parsed from a single JSON document."""

    problem: ProblemInstance
    schedule: ControlSchedule
    relax: RelaxationSchedule
    x0: np.ndarray
    seed: int = 0
    stop: StopRule = StopRule()
    tolerances: Tolerances = DEFAULT_TOLERANCES
    perturb: Optional[PerturbationSchedule] = None
    objective: Optional[ObjectiveFunction] = None
    sup: Optional[SuperiorizationSchedule] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def plan_weights(self) -> tuple[float, ...]:
        """Per-set weights for proximity oracles.

        Uses the cycle's first plan when it is fully simultaneous (one
        length-1 string per set); equal weights otherwise.
        """
        plan = self.schedule.cycle[0]
        m = self.problem.m
        if len(self.schedule.cycle) == 1 and all(len(s) == 1 for s in plan.strings):
            covered = [s.indices[0] for s in plan.strings]
            if sorted(covered) == list(range(1, m + 1)):
                by_index = {s.indices[0]: w for s, w in zip(plan.strings, plan.weights)}
                return tuple(by_index[i] for i in range(1, m + 1))
        return self.problem.equal_weights()


def config_hash(doc: dict) -> str:
    """Stable hash of the raw config document (sorted-key canonical JSON)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def _resolve_includes(doc, base_dir: Path):
    """Replace {"include": "path"} nodes by the referenced JSON document."""
    if isinstance(doc, dict):
        if set(doc.keys()) == {"include"}:
            target = base_dir / doc["include"]
            try:
                with open(target, encoding="utf-8") as fh:
                    included = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot include {target}: {exc}") from exc
            return _resolve_includes(included, target.parent)
        return {k: _resolve_includes(v, base_dir) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_resolve_includes(v, base_dir) for v in doc]
    return doc


def _parse_problem(doc: dict) -> ProblemInstance:
    if "dim" not in doc or "sets" not in doc:
        raise ConfigError("problem needs 'dim' and 'sets'")
    projectors = tuple(operator_from_json(d) for d in doc["sets"])
    known = tuple(np.asarray(p, float) for p in doc.get("known_points", []))
    return ProblemInstance(
        dim=int(doc["dim"]),
        projectors=projectors,
        consistent=doc.get("consistent"),
        known_c_points=known,
    )


def _parse_schedule(doc: dict, problem: ProblemInstance) -> ControlSchedule:
    if "cycle" not in doc:
        raise ConfigError("schedule needs a 'cycle' of plans")
    if "operators" in doc:
        operators = tuple(operator_from_json(d) for d in doc["operators"])
    else:
        operators = problem.projectors
    cycle = tuple(plan_from_json(p) for p in doc["cycle"])
    preamble = tuple(plan_from_json(p) for p in doc.get("preamble", []))
    return ControlSchedule(operators=operators, cycle=cycle, preamble=preamble)


def _parse_relaxation(doc: dict) -> RelaxationSchedule:
    kwargs = {"epsilon": float(doc.get("epsilon", 0.05))}
    if "constant" in doc:
        kwargs["constant"] = float(doc["constant"])
    if "cycle" in doc:
        kwargs["cycle"] = tuple(float(v) for v in doc["cycle"])
    if "base" in doc:
        kwargs["base"] = float(doc["base"])
        kwargs["slope"] = float(doc.get("slope", 0.0))
    return RelaxationSchedule(**kwargs)


def parse_config(doc: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a JSON document.

    Raises :class:`ConfigError` on any structural or validation problem.
    """
    try:
        doc = _resolve_includes(doc, Path(base_dir))
        for key in ("problem", "schedule", "relaxation", "x0"):
            if key not in doc:
                raise ConfigError(f"config is missing {key!r}")
        problem = _parse_problem(doc["problem"])
        schedule = _parse_schedule(doc["schedule"], problem)
        relax = _parse_relaxation(doc["relaxation"])
        tol_doc = doc.get("tolerances", {})
        tolerances = Tolerances(
            eq_tol=float(tol_doc.get("eq_tol", DEFAULT_TOLERANCES.eq_tol)),
            conv_tol=float(tol_doc.get("conv_tol", DEFAULT_TOLERANCES.conv_tol)),
            slack_tol=float(tol_doc.get("slack_tol", DEFAULT_TOLERANCES.slack_tol)),
            subgrad_zero_tol=float(
                tol_doc.get("subgrad_zero_tol", DEFAULT_TOLERANCES.subgrad_zero_tol)
            ),
        )
        stop_doc = doc.get("stop", {})
        stop = StopRule(
            step_tol=float(stop_doc.get("step_tol", tolerances.conv_tol)),
            window=int(stop_doc.get("window", 10)),
            max_iters=int(stop_doc.get("max_iters", 100_000)),
        )
        seed = int(doc.get("seed", 0))
        perturb = None
        if "perturbation" in doc:
            p = doc["perturbation"]
            directions = None
            if "directions" in p:
                directions = tuple(np.asarray(v, float) for v in p["directions"])
            perturb = PerturbationSchedule(
                beta0=float(p.get("beta0", 0.5)),
                decay=float(p.get("decay", 0.9)),
                seed=int(p.get("seed", seed)),
                directions=directions,
            )
        objective = None
        sup = None
        if "superiorization" in doc:
            s = doc["superiorization"]
            if "objective" not in s:
                raise ConfigError("superiorization needs an 'objective'")
            objective = objective_from_json(s["objective"])
            if objective.dim is not None and objective.dim != problem.dim:
                raise ConfigError(
                    f"objective dimension {objective.dim} differs from problem dimension {problem.dim}"
                )
            sup = SuperiorizationSchedule(
                beta0=float(s.get("beta0", 0.5)),
                decay=float(s.get("decay", 0.9)),
                steps=int(s.get("steps", 1)),
            )
        if perturb is not None and sup is not None:
            raise ConfigError("choose either 'perturbation' or 'superiorization', not both")
        x0 = as_vector(doc["x0"], dim=problem.dim)
        return ExperimentConfig(
            problem=problem,
            schedule=schedule,
            relax=relax,
            x0=x0,
            seed=seed,
            stop=stop,
            tolerances=tolerances,
            perturb=perturb,
            objective=objective,
            sup=sup,
            raw=doc,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(doc, path.parent)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace_csv(
    trace: IterationTrace,
    path: str | Path,
    fejer_slack_min: Optional[np.ndarray] = None,
) -> None:
    """Persist a trace with 17-significant-digit decimals (byte-reproducible).

    Row k holds iterate k; the step-indexed columns are empty on the final
    row.  Superiorized traces gain phi_value and budget columns.
    """
    superiorized = trace.phi_values is not None
    dim = trace.iterates.shape[-1]
    header = ["k"] + [f"x{i}" for i in range(dim)]
    header += ["step_norm", "lambda", "plan_signature", "perturb_norm", "fejer_slack_min"]
    if superiorized:
        header += ["phi_value", "perturb_l1_budget_remaining"]
    lines = [",".join(header)]
    n = trace.iterations
    for k in range(n + 1):
        row = [str(k)] + [_fmt(v) for v in trace.iterates[k]]
        if k < n:
            pnorm = float(np.sqrt(np.sum(trace.perturbations[k] ** 2)))
            row += [
                _fmt(trace.step_norms[k]),
                _fmt(trace.lambdas[k]),
                signature_str(trace.plan_signatures[k]),
                _fmt(pnorm),
                _fmt(fejer_slack_min[k]) if fejer_slack_min is not None else "",
            ]
        else:
            row += ["", "", "", "", ""]
        if superiorized:
            row.append(_fmt(trace.phi_values[k]))
            row.append(_fmt(trace.perturb_budget_remaining[k]) if k < n else "")
        lines.append(",".join(row))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def write_summary_json(
    path: str | Path,
    config: ExperimentConfig,
    trace: IterationTrace,
    fejer_min_slack: Optional[float] = None,
) -> dict:
    """Write the run summary; returns the document that was written."""
    final = trace.final
    residuals = {
        signature_str(sig): residual(op, final)
        for sig, op in config.schedule.distinct_operators().items()
    }
    doc = {
        "config_hash": config.hash,
        "seed": config.seed,
        "iters": trace.iterations,
        "converged": trace.converged,
        "final_x": [float(v) for v in final],
        "final_residuals": residuals,
        "fejer_min_slack": fejer_min_slack,
        "phi_final": float(trace.phi_values[-1]) if trace.phi_values is not None else None,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc
