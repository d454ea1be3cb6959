"""Command-line interface.

Subcommands:

* ``run <config.json>``     execute one experiment, write trace CSV + summary JSON
* ``verify <config.json>``  operator inequality suite, admissibility, and the
                            distance-decrease monitor on a fresh run; exit 1 on failure
* ``sweep <config.json> --param a.b.c --values v1,v2``  grid over one config field
* ``oracle <config.json>``  emit target-set witnesses and constrained minimizers

Exit codes: 0 success, 1 verification failure, 2 malformed configuration.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import (
    NonFiniteIterateError,
    RelaxationRangeError,
    StopRule,
    fejer_monitor,
    run,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    GridSpec,
    certified_c_witness,
    constrained_min_oracle,
    fixed_point_oracle,
    load_config,
    parse_config,
    proximity_argmin_oracle,
    proximity_value,
    write_summary_json,
    write_trace_csv,
)
from .core import SampleSpec
from .operators import (
    FixedPointWitness,
    check_cutter,
    check_nonexpansive,
    check_rho_fne,
    projection_witness_points,
    propagate_alpha,
    residual,
)
from .strings import check_admissibility, rho_constant, signature_str
from .superiorize import superiorized_run

__all__ = ["main", "cli_main"]


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    cfg = config
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        if cfg.perturb is not None:
            cfg = replace(cfg, perturb=replace(cfg.perturb, seed=args.seed))
    if args.max_iters is not None:
        cfg = replace(cfg, stop=replace(cfg.stop, max_iters=args.max_iters))
    if args.tol is not None:
        cfg = replace(
            cfg,
            tolerances=replace(cfg.tolerances, conv_tol=args.tol),
            stop=replace(cfg.stop, step_tol=args.tol),
        )
    return cfg


def _execute(config: ExperimentConfig):
    if config.objective is not None and config.sup is not None:
        return superiorized_run(
            config.schedule,
            config.relax,
            config.objective,
            config.sup,
            config.x0,
            stop=config.stop,
            tolerances=config.tolerances,
        )
    return run(config.schedule, config.relax, config.x0, perturb=config.perturb, stop=config.stop)


def _grid_for(config: ExperimentConfig) -> GridSpec:
    span = float(np.max(np.abs(config.x0))) if config.x0.size else 1.0
    reach = max(5.0, span + 1.0)
    return GridSpec(low=-reach, high=reach, points=41)


def _run_outputs(config: ExperimentConfig, out_dir: Path, quiet: bool) -> dict:
    trace = _execute(config)
    fejer_slacks = None
    min_slack = None
    if config.problem.dim <= 3 and config.perturb is None and config.sup is None:
        witness_point = certified_c_witness(config.schedule, config.x0, config.tolerances)
        if witness_point is not None:
            report = fejer_monitor(
                trace,
                FixedPointWitness(witness_point[None, :]),
                config.relax.epsilon,
                rho_constant(config.schedule),
                config.tolerances,
            )
            fejer_slacks = report.per_step_min
            min_slack = report.min_slack
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "trace.csv"
    summary_path = out_dir / "summary.json"
    write_trace_csv(trace, csv_path, fejer_slack_min=fejer_slacks)
    summary = write_summary_json(summary_path, config, trace, fejer_min_slack=min_slack)
    if not quiet:
        print(f"wrote {csv_path} and {summary_path}")
        print(
            f"iters={summary['iters']} converged={summary['converged']} "
            f"final_x={summary['final_x']}"
        )
    return summary


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(args.out) if args.out else Path(args.config).parent / "out"
    _run_outputs(config, out_dir, args.quiet)
    return 0


def _cmd_verify(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    tol = config.tolerances
    failures = 0

    def report(name: str, passed: bool, detail: str = "") -> None:
        nonlocal failures
        status = "ok  " if passed else "FAIL"
        if not passed:
            failures += 1
        if not args.quiet or not passed:
            print(f"[{status}] {name}" + (f"  {detail}" if detail else ""))

    sample = SampleSpec(dim=config.problem.dim, seed=config.seed)
    for i, proj in enumerate(config.problem.projectors, start=1):
        ne = check_nonexpansive(proj, sample, tol)
        report(f"set {i}: nonexpansive", ne.passed, f"max_violation={ne.max_violation:.3e}")
        fne = check_rho_fne(proj, 1.0, sample, tol)
        report(f"set {i}: firmly nonexpansive", fne.passed, f"max_violation={fne.max_violation:.3e}")
        witness = projection_witness_points(proj, tolerances=tol)
        cut = check_cutter(proj, witness, sample, tol)
        report(f"set {i}: cutter", cut.passed, f"max_violation={cut.max_violation:.3e}")

    adm = check_admissibility(config.schedule)
    report(
        "schedule: limsup-admissible",
        adm.admissible,
        f"limsup={len(adm.limsup_set)} plans, k0={adm.k0}",
    )

    rho = rho_constant(config.schedule)
    for sig, op in config.schedule.distinct_operators().items():
        label = signature_str(sig)
        ne = check_nonexpansive(op, sample, tol)
        report(f"plan {label}: nonexpansive", ne.passed, f"max_violation={ne.max_violation:.3e}")
        alpha = propagate_alpha(op)
        rho_op = (2.0 - alpha) / alpha
        fne = check_rho_fne(op, rho_op, sample, tol)
        report(
            f"plan {label}: {rho_op:g}-firmly nonexpansive",
            fne.passed,
            f"max_violation={fne.max_violation:.3e}",
        )

    try:
        config.relax.validate(rho)
        report("relaxation schedule within range", True, f"rho={rho:g}")
    except RelaxationRangeError as exc:
        report("relaxation schedule within range", False, str(exc))
        return 1 if failures else 0

    witness_point = certified_c_witness(config.schedule, config.x0, tol)
    if witness_point is None:
        report("fejer monitor", True, "skipped: no certified witness at this scale")
    else:
        trace = run(config.schedule, config.relax, config.x0, stop=config.stop)
        fj = fejer_monitor(
            trace, FixedPointWitness(witness_point[None, :]), config.relax.epsilon, rho, tol
        )
        report("fejer monitor", fj.passed, f"min_slack={fj.min_slack:.3e}")

    return 1 if failures else 0


def _set_by_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"sweep path {dotted!r} not found in config")
        node = node[key]
    if not isinstance(node, dict):
        raise ConfigError(f"sweep path {dotted!r} not found in config")
    node[keys[-1]] = value


def _cmd_sweep(args) -> int:
    base = load_config(args.config)
    values = []
    for tok in args.values.split(","):
        tok = tok.strip()
        try:
            values.append(json.loads(tok))
        except json.JSONDecodeError:
            values.append(tok)
    rows = []
    for i, value in enumerate(values):
        doc = copy.deepcopy(base.raw)
        _set_by_path(doc, args.param, value)
        config = _apply_overrides(parse_config(doc, Path(args.config).parent), args)
        out_dir = Path(args.out) / f"sweep_{i}" if args.out else None
        if out_dir is not None:
            summary = _run_outputs(config, out_dir, quiet=True)
        else:
            trace = _execute(config)
            final = trace.final
            summary = {
                "iters": trace.iterations,
                "converged": trace.converged,
                "final_x": [float(v) for v in final],
                "final_residuals": {
                    signature_str(sig): residual(op, final)
                    for sig, op in config.schedule.distinct_operators().items()
                },
                "phi_final": float(trace.phi_values[-1]) if trace.phi_values is not None else None,
            }
        rows.append((value, summary))
    if not args.quiet:
        print(f"{args.param:>24}  {'iters':>8}  {'max_residual':>13}  {'phi_final':>12}")
        for value, summary in rows:
            max_res = max(summary["final_residuals"].values())
            phi = summary["phi_final"]
            phi_s = f"{phi:.6g}" if phi is not None else "-"
            print(f"{value!r:>24}  {summary['iters']:>8}  {max_res:>13.3e}  {phi_s:>12}")
    return 0


def _cmd_oracle(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    tol = config.tolerances
    grid = _grid_for(config)
    weights = config.plan_weights()
    out: dict = {}
    argmin = proximity_argmin_oracle(config.problem, weights, grid, tol)
    out["proximity_argmin"] = [float(v) for v in argmin]
    out["proximity_min_value"] = proximity_value(config.problem, weights, argmin)
    out["set_residuals_at_argmin"] = [residual(p, argmin) for p in config.problem.projectors]
    fixed_points = {}
    for sig, op in config.schedule.distinct_operators().items():
        z = fixed_point_oracle(op, config.x0, tol)
        fixed_points[signature_str(sig)] = {
            "point": [float(v) for v in z],
            "residual": residual(op, z),
        }
    out["plan_fixed_points"] = fixed_points
    if config.objective is not None:
        zmin = constrained_min_oracle(config.problem, weights, config.objective, grid, tol)
        out["constrained_min"] = [float(v) for v in zmin]
        out["constrained_min_value"] = config.objective.evaluate(zmin)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gdsa",
        description="Dynamic string-averaging iterations with verification and oracles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", _cmd_run),
        ("verify", _cmd_verify),
        ("sweep", _cmd_sweep),
        ("oracle", _cmd_oracle),
    ):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the experiment JSON")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--max-iters", type=int, default=None, help="override max iterations")
        p.add_argument("--tol", type=float, default=None, help="override conv_tol")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
        p.set_defaults(handler=fn)
    sub.choices["sweep"].add_argument("--param", required=True, help="dotted config path")
    sub.choices["sweep"].add_argument("--values", required=True, help="comma-separated values")

    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, RelaxationRangeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NonFiniteIterateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cli_main(argv: Optional[list[str]] = None) -> int:
    """Alias for :func:`main`."""
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
