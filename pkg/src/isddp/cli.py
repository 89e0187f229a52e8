"""Command-line entry point.

Four subcommands share one binary: `run` iterates the solver and emits the
per-iteration CSV (and an optional JSON summary), `oracle` evaluates the
brute-force ground truths, `compare` samples the smooth-instance intercept
comparison, and `validate` replays a run under a grid audit that checks
every pool for monotone growth and validity against the oracle.

Exit codes: 0 on success, 1 when a validation audit finds violations, 2 on
usage or instance errors, 3 on solver failures (the message names the
failing stage, realization, and iteration).  Set ISDDP_LOG to a logging
level name (DEBUG, INFO, ...) for progress output on stderr.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .compare import compare_bounds, sample_instance
from .errors import InstanceError, IsddpError, SolverFailure
from .isddp import (ErrorSchedule, initialize, plateau_reached, run,
                    SolverState)
from .model import parse_instance
from .oracle import extensive_form, true_Q_grid

LOG = logging.getLogger("isddp")

CSV_HEADER = "k,lower_bound,upper_path,upper_tree,eps_k,delta_k,wall_ms"
AUDIT_TOL = 1e-9
_MONOTONE_TOL = 1e-12


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration of one `run` (or `validate`) invocation."""

    instance: str
    iterations: int
    schedule: ErrorSchedule
    seed: int
    mode: str
    full_tree_sim: bool = False
    sharp_intercepts: bool = False
    grid_validate: Optional[int] = None
    stop_on_plateau: bool = False
    out_csv: Optional[str] = None
    out_json: Optional[str] = None
    oracle_value: Optional[float] = None


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def records_to_csv(records) -> str:
    """One data row per iteration under a stable header.

    The wall_ms column is left empty on purpose: identical configurations
    must produce byte-identical CSVs, and wall time never is.  Timings live
    in the JSON summary instead.
    """
    lines = [CSV_HEADER]
    for r in records:
        upper_tree = "" if r.upper_tree is None else repr(r.upper_tree)
        lines.append("%d,%r,%r,%s,%r,%r," % (
            r.k, r.lower_bound, r.upper_path, upper_tree, r.eps_k, r.delta_k))
    return "\n".join(lines) + "\n"


def schedule_bounds(schedule: ErrorSchedule, horizon: int) -> dict:
    """Closed-form gap targets implied by the schedule's level caps.

    lower_gap bounds optimum - lower_bound at the plateau, policy_gap the
    overall policy suboptimality, and node_gap_per_stage the worst model
    gap feeding each stage.  Caps are the constant bars, or the decay value
    for vanishing schedules (their levels peak at the first iteration).
    """
    if schedule.kind == "constant":
        eps_bar, delta_bar = schedule.eps_bar, schedule.delta_bar
    elif schedule.kind == "vanishing":
        eps_bar = delta_bar = schedule.decay
    else:
        raise ValueError("custom schedules carry no closed-form caps")
    T = horizon
    return {
        "lower_gap": delta_bar * T + 2.0 * eps_bar * (T - 1),
        "policy_gap": 3.0 * eps_bar * T,
        "node_gap_per_stage": {
            str(t): (delta_bar + 2.0 * eps_bar) * (T - t + 1)
            for t in range(2, T + 1)},
    }


def report(records, schedule: ErrorSchedule, horizon: int, instance=None,
           mode=None, seed=None, oracle_value=None, audit=None):
    """CSV text plus a JSON-ready summary for one finished run.

    When an oracle value is supplied the summary gains a gap check: the
    final lower bound must sit within the schedule's lower_gap target of it
    (plus 1e-6 slack).
    """
    if not records:
        raise ValueError("report needs at least one record")
    last = records[-1]
    lows = [r.lower_bound for r in records]
    bounds = schedule_bounds(schedule, horizon)
    doc = {
        "instance": instance,
        "horizon": horizon,
        "iterations": len(records),
        "schedule": {"kind": schedule.kind, "eps_bar": schedule.eps_bar,
                     "delta_bar": schedule.delta_bar, "decay": schedule.decay},
        "mode": mode,
        "seed": seed,
        "final": {"lower_bound": last.lower_bound,
                  "upper_path": last.upper_path,
                  "upper_tree": last.upper_tree},
        "plateau_reached": plateau_reached(lows),
        "bounds": bounds,
        "wall_ms_total": 1e3 * sum(r.wall_time for r in records),
    }
    if last.node_gaps is not None:
        doc["node_gaps"] = {str(t): g for t, g in sorted(last.node_gaps.items())}
    if oracle_value is not None:
        gap = float(oracle_value) - last.lower_bound
        target = bounds["lower_gap"] + 1e-6
        doc["gap_check"] = {"oracle_value": float(oracle_value), "gap": gap,
                            "bound": target, "pass": bool(gap <= target)}
    if audit is not None:
        doc["grid_validate"] = audit
    return records_to_csv(records), doc


# ---------------------------------------------------------------------------
# grid audit
# ---------------------------------------------------------------------------

def _stage_grid(problem, t, resolution):
    box = problem.stage(t - 1).state_set
    axes = [np.linspace(box.lower[i], box.upper[i], resolution)
            for i in range(box.dim)]
    if box.dim == 1:
        return axes[0].reshape(-1, 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def audited_run(state: SolverState, iterations: int, resolution: int,
                full_tree_sim: bool = False, stop_on_plateau: bool = False):
    """Run one iteration at a time, snapshotting every pool on a fixed grid
    in between: appending cuts must never lower a pool anywhere, and the
    final pools must sit below the oracle's cost-to-go values.

    Returns (records, audit) where audit counts violations per stage.
    """
    problem = state.problem
    grids = {t: _stage_grid(problem, t, resolution)
             for t in range(2, problem.horizon + 1)}
    snapshots = {t: state.pools[t].eval_grid(g) for t, g in grids.items()}
    worst_drop = {t: 0.0 for t in grids}
    records = []
    for _ in range(iterations):
        records.extend(run(state=state, iterations=1,
                           full_tree_sim=full_tree_sim))
        for t, grid in grids.items():
            fresh = state.pools[t].eval_grid(grid)
            worst_drop[t] = max(worst_drop[t],
                                float(np.max(snapshots[t] - fresh)))
            snapshots[t] = fresh
        LOG.debug("iteration %d: lower bound %.9g",
                  records[-1].k, records[-1].lower_bound)
        if stop_on_plateau and plateau_reached(state.lower_bounds):
            break
    stages = {}
    violations = 0
    for t, grid in grids.items():
        truth, interp_bound = true_Q_grid(problem, t, grid)
        excess = float(np.max(snapshots[t] - truth))
        below = bool(excess <= AUDIT_TOL)
        monotone = bool(worst_drop[t] <= _MONOTONE_TOL)
        if not (below and monotone):
            violations += 1
        stages[str(t)] = {
            "points": int(len(grid)),
            "max_excess": excess,
            "below_oracle": below,
            "max_drop": worst_drop[t],
            "monotone_append": monotone,
            "interpolation_bound": float(interp_bound),
        }
    audit = {"resolution": int(resolution), "violations": violations,
             "stages": stages}
    return records, audit


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _load_problem(path):
    with open(path) as fh:
        return parse_instance(fh.read(), path=path)


def _write_text(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _schedule_from_args(args) -> ErrorSchedule:
    if args.schedule == "exact":
        return ErrorSchedule.exact()
    if args.schedule == "constant":
        delta = args.eps if args.delta is None else args.delta
        return ErrorSchedule.constant_levels(args.eps, delta)
    return ErrorSchedule.vanishing(args.decay)


def _run_config(args) -> RunConfig:
    return RunConfig(
        instance=args.instance, iterations=args.iters,
        schedule=_schedule_from_args(args), seed=args.seed, mode=args.mode,
        full_tree_sim=getattr(args, "full_tree_sim", False),
        sharp_intercepts=getattr(args, "sharp_intercepts", False),
        grid_validate=getattr(args, "grid_validate", None),
        stop_on_plateau=getattr(args, "stop_on_plateau", False),
        out_csv=getattr(args, "out_csv", None),
        out_json=getattr(args, "out_json", None),
        oracle_value=getattr(args, "oracle_value", None))


def _cmd_run(args) -> int:
    cfg = _run_config(args)
    problem = _load_problem(cfg.instance)
    state = initialize(problem, cfg.schedule, mode=cfg.mode, seed=cfg.seed,
                       sharp_intercepts=cfg.sharp_intercepts)
    LOG.info("run: %s, %d iterations, schedule %s, mode %s, seed %d",
             cfg.instance, cfg.iterations, cfg.schedule.kind, cfg.mode,
             cfg.seed)
    audit = None
    if cfg.grid_validate is not None:
        records, audit = audited_run(
            state, cfg.iterations, cfg.grid_validate,
            full_tree_sim=cfg.full_tree_sim,
            stop_on_plateau=cfg.stop_on_plateau)
    else:
        records = run(state=state, iterations=cfg.iterations,
                      full_tree_sim=cfg.full_tree_sim,
                      stop_on_plateau=cfg.stop_on_plateau)
    csv_text, doc = report(records, cfg.schedule, problem.horizon,
                           instance=cfg.instance, mode=cfg.mode,
                           seed=cfg.seed, oracle_value=cfg.oracle_value,
                           audit=audit)
    _write_text(cfg.out_csv, csv_text)
    if cfg.out_json is not None:
        _write_text(cfg.out_json, json.dumps(doc, indent=2) + "\n")
    LOG.info("final lower bound %.9g after %d iterations",
             records[-1].lower_bound, len(records))
    if audit is not None and audit["violations"]:
        print(f"grid audit: {audit['violations']} stage(s) violated",
              file=sys.stderr)
        return 1
    return 0


def _cmd_oracle(args) -> int:
    if args.extensive_form is not None:
        problem = _load_problem(args.extensive_form)
        value, _ = extensive_form(problem)
        print(f"extensive-form optimum: {value!r}")
        return 0
    problem = _load_problem(args.grid)
    t = args.stage
    if not 2 <= t <= problem.horizon + 1:
        raise ValueError(
            f"--stage must be in 2..{problem.horizon + 1} for this instance")
    grid = _stage_grid(problem, t, args.resolution)
    values, bound = true_Q_grid(problem, t, grid)
    lines = [",".join(f"x{i + 1}" for i in range(grid.shape[1])) + ",value"]
    for point, val in zip(grid, values):
        coords = ",".join(repr(float(c)) for c in point)
        lines.append(f"{coords},{float(val)!r}")
    _write_text(args.out_csv, "\n".join(lines) + "\n")
    print(f"interpolation bound: {bound!r}", file=sys.stderr)
    return 0


def _cmd_compare(args) -> int:
    rng = np.random.default_rng(args.seed)
    xbar = rng.uniform(-0.5, 0.5, size=args.dim)
    inst = sample_instance(rng, xbar, dim=args.dim, n_ineq=args.rows)
    rep = compare_bounds(inst, xbar, args.eps, trials=args.trials,
                         seed=args.seed)
    _write_text(args.out_csv, rep.to_csv())
    return 0


def _cmd_validate(args) -> int:
    cfg = _run_config(args)
    problem = _load_problem(cfg.instance)
    state = initialize(problem, cfg.schedule, mode=cfg.mode, seed=cfg.seed,
                       sharp_intercepts=cfg.sharp_intercepts)
    _, audit = audited_run(state, cfg.iterations, args.resolution)
    for t, row in sorted(audit["stages"].items(), key=lambda kv: int(kv[0])):
        print(f"stage {t}: {row['points']} points, "
              f"max excess over oracle {row['max_excess']:.3g} "
              f"({'ok' if row['below_oracle'] else 'VIOLATED'}), "
              f"worst append drop {row['max_drop']:.3g} "
              f"({'ok' if row['monotone_append'] else 'VIOLATED'})")
    if audit["violations"]:
        print(f"FAIL: {audit['violations']} stage(s) violated")
        return 1
    print("PASS: pools grow monotonically and stay below the oracle")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _nonnegative_float(text):
    value = float(text)
    if value < 0.0:
        raise argparse.ArgumentTypeError("must be nonnegative")
    return value


def _add_schedule_flags(sub):
    sub.add_argument("--schedule", choices=("exact", "constant", "vanishing"),
                     default="exact", help="error schedule kind")
    sub.add_argument("--eps", type=_nonnegative_float, default=0.0,
                     help="backward-pass error level (constant schedules)")
    sub.add_argument("--delta", type=_nonnegative_float, default=None,
                     help="forward-pass error level (defaults to --eps)")
    sub.add_argument("--decay", type=_nonnegative_float, default=0.0,
                     help="decay/k error level (vanishing schedules)")
    sub.add_argument("--seed", type=int, default=0, help="run seed")
    sub.add_argument("--mode", choices=("truncated", "injected"),
                     default="injected", help="how inexactness is realized")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isddp",
        description="Multistage stochastic solver with certified inexact "
                    "cuts, plus its oracles and diagnostics.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="iterate the solver on an instance")
    p_run.add_argument("--instance", required=True, help="instance JSON path")
    p_run.add_argument("--iters", type=_positive_int, required=True,
                       help="iteration budget (>= 1)")
    _add_schedule_flags(p_run)
    p_run.add_argument("--full-tree-sim", action="store_true",
                       dest="full_tree_sim",
                       help="record per-node oracle gaps each iteration")
    p_run.add_argument("--sharp-intercepts", action="store_true",
                       dest="sharp_intercepts",
                       help="anchor cuts at dual values instead of "
                            "primal minus the full budget")
    p_run.add_argument("--grid-validate", type=_positive_int, default=None,
                       metavar="R", dest="grid_validate",
                       help="audit pools on an R-point grid per dimension")
    p_run.add_argument("--stop-on-plateau", action="store_true",
                       dest="stop_on_plateau",
                       help="stop once the trailing lower bounds flatten")
    p_run.add_argument("--oracle-value", type=float, default=None,
                       dest="oracle_value",
                       help="known optimum; adds a gap check to the summary")
    p_run.add_argument("--out-csv", default=None, dest="out_csv",
                       help="per-iteration CSV path (default: stdout)")
    p_run.add_argument("--out-json", default=None, dest="out_json",
                       help="JSON summary path (default: not written)")
    p_run.set_defaults(handler=_cmd_run)

    p_oracle = subs.add_parser("oracle", help="brute-force ground truths")
    which = p_oracle.add_mutually_exclusive_group(required=True)
    which.add_argument("--extensive-form", metavar="INSTANCE", default=None,
                       dest="extensive_form",
                       help="print the exact optimum of the instance")
    which.add_argument("--grid", metavar="INSTANCE", default=None,
                       help="tabulate a stage's expected cost-to-go")
    p_oracle.add_argument("--stage", type=int, default=2,
                          help="stage t for --grid (2..T+1)")
    p_oracle.add_argument("--resolution", type=_positive_int, default=101,
                          help="grid points per state dimension")
    p_oracle.add_argument("--out-csv", default=None, dest="out_csv",
                          help="grid CSV path (default: stdout)")
    p_oracle.set_defaults(handler=_cmd_oracle)

    p_cmp = subs.add_parser(
        "compare", help="smooth-instance intercept comparison")
    p_cmp.add_argument("--trials", type=_positive_int, default=100,
                       help="number of degraded certificates")
    p_cmp.add_argument("--eps", type=_nonnegative_float, default=0.1,
                       help="certificate error level")
    p_cmp.add_argument("--seed", type=int, default=0, help="sampling seed")
    p_cmp.add_argument("--dim", type=_positive_int, default=1,
                       help="decision dimension")
    p_cmp.add_argument("--rows", type=int, default=1,
                       help="inequality row count (0 for none)")
    p_cmp.add_argument("--out-csv", default=None, dest="out_csv",
                       help="trial CSV path (default: stdout)")
    p_cmp.set_defaults(handler=_cmd_compare)

    p_val = subs.add_parser(
        "validate", help="replay a run under the pool grid audit")
    p_val.add_argument("--instance", required=True, help="instance JSON path")
    p_val.add_argument("--iters", type=_positive_int, default=50,
                       help="iteration budget (>= 1)")
    _add_schedule_flags(p_val)
    p_val.add_argument("--sharp-intercepts", action="store_true",
                       dest="sharp_intercepts",
                       help="anchor cuts at dual values")
    p_val.add_argument("--resolution", type=_positive_int, default=50,
                       help="audit grid points per state dimension")
    p_val.set_defaults(handler=_cmd_validate)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse already printed its message; fold --help's 0 through
        return int(exc.code) if exc.code else 0
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, os.environ.get("ISDDP_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except (InstanceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except IsddpError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
