"""Command line front end: ``anisolve run | convergence | verify``.

Exit codes: 0 success, 1 I/O error or failed verify property, 2 schema or
validation failure, 3 solver failure (partial artifacts are written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import expr as ex
from .config import (
    Case,
    ConfigError,
    build,
    config_hash,
    continuation_params,
    load,
    newton_params,
    parabolic_params,
)
from .elliptic import FreezeError, solve_elliptic, validate
from .frozen import SolverError
from .grid import Grid
from .parabolic import StepFailure, Trajectory, solve_parabolic, validate_parabolic
from .verify import DEFAULT_SEED, DEFAULT_TRIALS, run_suite

log = logging.getLogger("anisolve")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class CliFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def setup_logging() -> None:
    name = os.environ.get("ANISOLVE_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name, logging.ERROR)
    root = logging.getLogger("anisolve")
    root.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
    if name not in LOG_LEVELS:
        root.error("ANISOLVE_LOG=%r not in %s; using 'error'", name, sorted(LOG_LEVELS))


# --- serialization -------------------------------------------------------


def jsonable(obj):
    """Plain JSON types; non-finite floats become strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return jsonable(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_field(path: Path, grid: Grid, u) -> None:
    """One row per node: x[,y],u with 17 significant digits."""
    coords = grid.node_coords()
    cols = [coords[k].ravel() for k in "xy"[: grid.d]] + [np.asarray(u).ravel()]
    header = ",".join(list("xy"[: grid.d]) + ["u"])
    np.savetxt(path, np.column_stack(cols), fmt="%.17g", delimiter=",", header=header, comments="")


# --- run -----------------------------------------------------------------


def _load_case(config_path, seed=None) -> Case:
    try:
        cfg = load(config_path)
    except OSError as err:
        raise CliFailure(EXIT_IO, f"cannot read config {config_path}: {err}") from err
    except ConfigError as err:
        raise CliFailure(EXIT_INVALID, f"invalid config {config_path}: {err}") from err
    if seed is not None:
        cfg["seed"] = seed
    try:
        return build(cfg)
    except ConfigError as err:
        raise CliFailure(EXIT_INVALID, f"invalid config {config_path}: {err}") from err


def _out_dir(args_out, cfg) -> Path:
    out = args_out or cfg["output"]["directory"]
    if out is None:
        raise CliFailure(EXIT_IO, "no output directory: pass --out or set output.directory")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CliFailure(EXIT_IO, f"cannot create output directory {path}: {err}") from err
    return path


def _validate(case: Case):
    if case.mode == "elliptic":
        return validate(case.problem)
    return validate_parabolic(case.problem)


def _summary_base(case: Case, vrep) -> dict:
    return {
        "mode": case.mode,
        "config": case.config,
        "config_sha256": config_hash(case.config),
        "seed": case.config["seed"],
        "validation": {"ok": vrep.ok, "checks": vrep.checks},
    }


def _snapshot_indices(case: Case) -> list:
    prob = case.problem
    times = case.config["output"]["snapshots"]
    if times is None:
        times = [prob.T]
    probe = Trajectory(prob.h, tuple(range(prob.N0 + 1)), ())
    return sorted({probe.index_at(t) for t in times})


def _run_elliptic(case: Case, out: Path, summary: dict) -> int:
    prob = case.problem
    cfg = case.config
    try:
        u, rep = solve_elliptic(prob, continuation_params(cfg), newton_params(cfg))
        status, code = "ok", EXIT_OK
    except (SolverError, FreezeError) as err:
        u = getattr(err, "best", None)
        rep = getattr(err, "report", None)
        status, code = "solver_failure", EXIT_SOLVER
        summary["error"] = str(err)
        print(f"solver failure: {err}", file=sys.stderr)
    files = []
    if u is not None:
        write_field(out / "solution.csv", prob.grid, u)
        files.append("solution.csv")
    summary.update(status=status, report=rep, files=files)
    return code


def _run_parabolic(case: Case, out: Path, summary: dict) -> int:
    prob = case.problem
    try:
        traj, rep = solve_parabolic(prob, parabolic_params(case.config))
        status, code = "ok", EXIT_OK
    except StepFailure as err:
        traj, rep = err.trajectory, err.report
        status, code = "solver_failure", EXIT_SOLVER
        summary["error"] = str(err)
        print(f"solver failure: {err}", file=sys.stderr)
    files = []
    snapshots = []
    for k in _snapshot_indices(case):
        if k >= len(traj.states):
            continue
        name = f"snapshot_k{k}.csv"
        write_field(out / name, prob.grid, traj.states[k])
        files.append(name)
        snapshots.append({"k": k, "t": k * prob.h, "file": name})
    ledger = {
        "h": prob.h,
        "s": list(traj.s),
        "l2_sq_initial": rep.l2_sq_initial,
        "bound_constant": rep.bound_constant,
        "steps": [
            {
                "k": st.k,
                "t": st.t,
                "s": st.s,
                "b_of_u": st.b_of_u,
                "fixed_point_iterations": st.fixed_point_iterations,
                "exponents": st.exponents,
                "l2_sq": st.l2_sq,
                "modular": st.modular,
                "ledger_lhs": st.ledger_lhs,
                "ledger_rhs": st.ledger_rhs,
                "ledger_slack": st.ledger_slack,
                "l2_bound": rep.l2_bound(st.t),
            }
            for st in rep.steps
        ],
    }
    write_json(out / "ledger.json", ledger)
    files.append("ledger.json")
    summary.update(status=status, report=rep, files=files, snapshots=snapshots)
    return code


def cmd_run(args) -> int:
    start = time.perf_counter()
    case = _load_case(args.config, args.seed)
    out = _out_dir(args.out, case.config)
    vrep = _validate(case)
    summary = _summary_base(case, vrep)
    if not vrep.ok:
        for chk in vrep.failures():
            print(f"validation failed: {chk.message}", file=sys.stderr)
        summary.update(status="invalid", files=[])
        code = EXIT_INVALID
    elif case.mode == "elliptic":
        code = _run_elliptic(case, out, summary)
    else:
        code = _run_parabolic(case, out, summary)
    summary["files"] = summary["files"] + ["summary.json"]
    summary["wall_time"] = time.perf_counter() - start
    write_json(out / "summary.json", summary)
    if code == EXIT_OK:
        print(f"{case.mode} run finished; artifacts in {out}")
    return code


# --- convergence ---------------------------------------------------------


def _solve_level(cfg: dict, n: int):
    """Worker: solve one level, return its final state (a nodal array)."""
    case = build(cfg, n)
    if case.mode == "elliptic":
        u, _ = solve_elliptic(case.problem, continuation_params(cfg), newton_params(cfg))
        return u
    traj, _ = solve_parabolic(case.problem, parabolic_params(cfg))
    return traj.states[-1]


def _reference_values(cfg: dict, grid: Grid):
    env = dict(grid.node_coords())
    if cfg["mode"] == "parabolic":
        env["t"] = cfg["parabolic"]["T"]
    ref = ex.evaluate(ex.parse(cfg["reference"]), env)
    return np.broadcast_to(ref, grid.shape)


def observed_orders(levels, errors) -> list:
    """log(e_coarse/e_fine)/log(n_fine/n_coarse) for consecutive levels."""
    orders = [None]
    for (n0, e0), (n1, e1) in zip(zip(levels, errors), zip(levels[1:], errors[1:])):
        if e0 > 0 and e1 > 0:
            orders.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            orders.append(None)
    return orders


def parse_levels(text: str) -> list:
    try:
        levels = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise CliFailure(EXIT_INVALID, f"bad --levels {text!r}: {err}") from err
    if len(levels) < 2 or sorted(set(levels)) != levels or levels[0] < 2:
        raise CliFailure(EXIT_INVALID, "--levels needs at least two increasing integers >= 2")
    return levels


def cmd_convergence(args) -> int:
    start = time.perf_counter()
    case = _load_case(args.config, args.seed)
    out = _out_dir(args.out, case.config)
    cfg = case.config
    levels = parse_levels(args.levels)
    self_ref = cfg["reference"] is None
    if self_ref:
        finest = levels[-1]
        bad = [n for n in levels if finest % n]
        if bad:
            raise CliFailure(EXIT_INVALID, f"levels {bad} do not divide the finest level {finest}")

    summary = {"config": cfg, "config_sha256": config_hash(cfg), "levels": levels}
    summary["reference"] = "finest_level" if self_ref else cfg["reference"]
    checks = []
    for n in levels:
        vrep = _validate(build(cfg, n))
        checks.append({"n": n, "ok": vrep.ok, "checks": vrep.checks})
        if not vrep.ok:
            for chk in vrep.failures():
                print(f"validation failed (n={n}): {chk.message}", file=sys.stderr)
            summary.update(status="invalid", validation=checks, files=["summary.json"])
            summary["wall_time"] = time.perf_counter() - start
            write_json(out / "summary.json", summary)
            return EXIT_INVALID
    summary["validation"] = checks

    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                sols = list(pool.map(_solve_level, [cfg] * len(levels), levels))
        else:
            sols = [_solve_level(cfg, n) for n in levels]
    except (SolverError, FreezeError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        summary.update(status="solver_failure", error=str(err), files=["summary.json"])
        summary["wall_time"] = time.perf_counter() - start
        write_json(out / "summary.json", summary)
        return EXIT_SOLVER

    rows_n, errors = [], []
    for n, u in zip(levels, sols):
        if self_ref:
            if n == levels[-1]:
                continue
            stride = levels[-1] // n
            ref = sols[-1][(slice(None, None, stride),) * u.ndim]
        else:
            ref = _reference_values(cfg, Grid(cfg["grid"]["d"], n))
        rows_n.append(n)
        errors.append(float(np.max(np.abs(u - ref))))
    orders = observed_orders(rows_n, errors)

    with open(out / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("n,error,order\n")
        for n, e, o in zip(rows_n, errors, orders):
            fh.write(f"{n},{e:.17g},{'' if o is None else format(o, '.17g')}\n")
    summary.update(
        status="ok",
        table=[{"n": n, "error": e, "order": o} for n, e, o in zip(rows_n, errors, orders)],
        files=["convergence.csv", "summary.json"],
    )
    summary["wall_time"] = time.perf_counter() - start
    write_json(out / "summary.json", summary)
    for n, e, o in zip(rows_n, errors, orders):
        print(f"n={n:5d}  error={e:.3e}  order={'-' if o is None else f'{o:.3f}'}")
    return EXIT_OK


# --- verify --------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise CliFailure(EXIT_INVALID, "--trials must be >= 1")
    results = run_suite(args.seed, args.trials)
    for res in results:
        verdict = "PASS" if res.passed else "FAIL"
        line = f"{verdict} {res.name} (trials={res.trials}, worst={res.worst:.3g})"
        if res.detail:
            line += f" {res.detail}"
        print(line)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} properties passed (seed={args.seed})")
    return EXIT_IO if failed else EXIT_OK


# --- entry point ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="anisolve",
        description="Anisotropic variable-exponent diffusion solver.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="validate and solve one case")
    run.add_argument("--config", required=True, help="case JSON file")
    run.add_argument("--out", help="output directory (default: output.directory)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("convergence", help="grid refinement study")
    conv.add_argument("--config", required=True, help="case JSON file")
    conv.add_argument("--out", help="output directory (default: output.directory)")
    conv.add_argument("--levels", default="32,64,128,256", help="comma separated n values")
    conv.add_argument("--jobs", type=int, default=1, help="parallel levels")
    conv.add_argument("--seed", type=int, help="override the config seed")
    conv.set_defaults(func=cmd_convergence)

    ver = sub.add_parser("verify", help="randomized invariant suite")
    ver.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ver.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    ver.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliFailure as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
