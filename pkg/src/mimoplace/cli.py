"""Command-line front end: crlb, place, sweep, simulate and bound
subcommands with deterministic seeding and CSV/JSON report emission.

Exit codes: 0 success, 1 input error, 2 singular or degenerate model,
3 solver failure. Every run writes a manifest listing its outputs before
long work begins and finalizes the wall clock afterwards.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (AllRestartsFailed, InfeasibleBounds, MaxIterations,
                     NumericalFailure, RecoveryInfeasible, SingularFim,
                     ToolkitError)
from .fim import state_fim_and_crlb
from .mcsim import SWEEP_AXES, crlb_sweep, rmse_experiment, _resolve_geometry
from .placement import SamplerConfig, omega_separation_interval, \
    sample_restart_optimize
from .scenario import dump_scenario, load_scenario, scenario_to_dict, \
    validate_scenario
from .sdp import optimize_single_target

_INPUT_ERRORS = (ToolkitError,)
_SINGULAR_ERRORS = (SingularFim,)
_SOLVER_ERRORS = (MaxIterations, NumericalFailure, RecoveryInfeasible,
                  AllRestartsFailed, InfeasibleBounds)


class CliError(Exception):
    """Bad command line or bad input file."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{message}\n{self.format_usage()}")


@dataclass
class RunManifest:
    subcommand: str
    scenario: str
    config: dict
    seed: int
    version: str
    outputs: list = field(default_factory=list)
    wall_clock_s: float = 0.0

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2))
        return path


def _parse_range(spec):
    """'a:b:n' -> n evenly spaced values from a to b inclusive."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise CliError(f"range spec must be a:b:n, got {spec!r}")
    try:
        lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise CliError(f"bad range spec {spec!r}: {exc}") from exc
    if num < 1:
        raise CliError("range spec needs at least one point")
    return np.linspace(lo, hi, num)


def _bool_flag(text):
    lowered = str(text).lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise CliError(f"expected a boolean, got {text!r}")


def _load_scenario_arg(args):
    if not args.scenario:
        raise CliError("--scenario is required for this subcommand")
    path = Path(args.scenario)
    if not path.exists():
        raise CliError(f"scenario file not found: {path}")
    scenario = load_scenario(path.read_text(encoding="utf-8"),
                             include_bin0=args.include_bin0)
    problems = validate_scenario(scenario)
    if problems:
        listing = "; ".join(str(v) for v in problems)
        raise CliError(f"scenario invalid: {listing}")
    return scenario


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _matrix_rows(matrix):
    n, m = matrix.shape
    return [(i, j, repr(float(matrix[i, j])))
            for i in range(n) for j in range(m)]


def _build_parser():
    parser = _Parser(prog="mimoplace",
                     description="CRLB-driven antenna placement toolkit for "
                                 "collocated MIMO arrays")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", help="scenario JSON file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap (single-threaded dispatcher)")
        p.add_argument("--include-bin0", type=_bool_flag, default=True,
                       help="keep the innermost spill bin in the "
                            "measurement stack")
        p.add_argument("--metric", choices=("trace", "det", "maxeig"),
                       default="trace")

    p_crlb = sub.add_parser("crlb", help="FIM/CRLB dump for one scenario")
    common(p_crlb)

    p_place = sub.add_parser("place", help="optimize antenna placement")
    common(p_place)
    p_place.add_argument("kind", choices=("single", "multi"))
    p_place.add_argument("--restarts", type=int, default=50)
    p_place.add_argument("--patience", type=int, default=10)
    p_place.add_argument("--sampler-std", type=float, default=None,
                         help="restart perturbation std dev (m); default "
                              "half a wavelength")

    p_sweep = sub.add_parser("sweep", help="CRLB metrics along an axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p_sweep.add_argument("--range", dest="axis_range", required=True,
                         help="a:b:n sweep values")
    p_sweep.add_argument("--geometries", default="ula",
                         help="comma list: ula,optimal,random,file:<path>")
    p_sweep.add_argument("--restarts", type=int, default=20)
    p_sweep.add_argument("--patience", type=int, default=8)

    p_sim = sub.add_parser("simulate", help="Monte-Carlo RMSE vs CRLB")
    common(p_sim)
    p_sim.add_argument("--snr", dest="snr_range", required=True,
                       help="a:b:n SNR grid in dB")
    p_sim.add_argument("--trials", type=int, default=100)
    p_sim.add_argument("--geometries", default="ula",
                       help="comma list: ula,optimal,random,file:<path>")
    p_sim.add_argument("--restarts", type=int, default=20)
    p_sim.add_argument("--patience", type=int, default=8)

    p_bound = sub.add_parser("bound", help="bearing-separation phase bounds")
    common(p_bound)
    p_bound.add_argument("--dtheta", dest="dtheta_range", required=True,
                         help="a:b:n bearing separations (rad)")
    return parser


def _resolve_geometries(spec, scenario, seed, sampler, include_bin0):
    resolved = []
    for name in spec.split(","):
        name = name.strip()
        if not name:
            continue
        if name.startswith("file:"):
            path = Path(name[5:])
            if not path.exists():
                raise CliError(f"geometry scenario not found: {path}")
            other = load_scenario(path.read_text(encoding="utf-8"),
                                  include_bin0=include_bin0)
            resolved.append((f"file:{path.name}", other.array))
        else:
            resolved.append((name, _resolve_geometry(name, scenario, seed,
                                                     sampler)))
    if not resolved:
        raise CliError("no geometries requested")
    return resolved


def _cmd_crlb(args, out_dir):
    scenario = _load_scenario_arg(args)
    manifest = RunManifest(
        subcommand="crlb", scenario=args.scenario,
        config={"metric": args.metric, "include_bin0": args.include_bin0,
                "threads": args.threads},
        seed=args.seed, version=__version__,
        outputs=["fim.csv", "crlb.csv", "metrics.json", "manifest.json"])
    manifest.write(out_dir)
    started = time.monotonic()
    report = state_fim_and_crlb(scenario)
    _write_csv(out_dir / "fim.csv", ("row", "col", "value"),
               _matrix_rows(report.state_fim))
    _write_csv(out_dir / "crlb.csv", ("row", "col", "value"),
               _matrix_rows(report.crlb))
    (out_dir / "metrics.json").write_text(json.dumps(report.metrics,
                                                     indent=2))
    manifest.wall_clock_s = time.monotonic() - started
    manifest.write(out_dir)
    return 0


def _cmd_place(args, out_dir):
    scenario = _load_scenario_arg(args)
    q_std = args.sampler_std if args.sampler_std is not None \
        else scenario.radar.wavelength / 2.0
    config = {"kind": args.kind, "restarts": args.restarts,
              "patience": args.patience, "sampler_std": q_std,
              "include_bin0": args.include_bin0, "threads": args.threads}
    manifest = RunManifest(
        subcommand="place", scenario=args.scenario, config=config,
        seed=args.seed, version=__version__,
        outputs=["placement.json", "geometry.json", "trace.csv",
                 "manifest.json"])
    manifest.write(out_dir)
    started = time.monotonic()

    if args.kind == "single":
        if scenario.num_targets != 1:
            raise CliError("'place single' needs exactly one target; use "
                           "'place multi' for multi-target scenarios")
        arr = scenario.array
        sol = optimize_single_target(scenario.targets[0], arr.num_tx,
                                     arr.num_rx, arr.mode,
                                     scenario.constraints, seed=args.seed)
        (out_dir / "placement.json").write_text(json.dumps(sol.to_dict(),
                                                           indent=2))
        geometry = sol.geometry
        trace_rows = [(0, sol.iterations, repr(sol.achieved_cost), 1)]
    else:
        cfg = SamplerConfig(restarts=args.restarts, patience=args.patience,
                            q_std=q_std, seed=args.seed)
        result, trace = sample_restart_optimize(scenario, cfg)
        summary = {
            "cost": result.cost,
            "restarts_run": result.restarts_run,
            "accepted": result.accepted,
            "status": result.status,
            "geometry": {"mode": result.geometry.mode,
                         "tx": result.geometry.tx.tolist(),
                         "rx": result.geometry.rx.tolist()},
        }
        (out_dir / "placement.json").write_text(json.dumps(summary,
                                                           indent=2))
        geometry = result.geometry
        trace_rows = [(r, it, repr(c), acc)
                      for r, it, c, acc, _ in trace.rows()]

    placed = scenario.with_geometry(geometry)
    (out_dir / "geometry.json").write_text(dump_scenario(placed))
    _write_csv(out_dir / "trace.csv",
               ("restart", "inner_iter", "cost", "accepted"), trace_rows)
    manifest.wall_clock_s = time.monotonic() - started
    manifest.write(out_dir)
    return 0


def _cmd_sweep(args, out_dir):
    scenario = _load_scenario_arg(args)
    values = _parse_range(args.axis_range)
    sampler = SamplerConfig(restarts=args.restarts, patience=args.patience,
                            seed=args.seed)
    manifest = RunManifest(
        subcommand="sweep", scenario=args.scenario,
        config={"axis": args.axis, "range": args.axis_range,
                "geometries": args.geometries, "metric": args.metric,
                "restarts": args.restarts, "patience": args.patience,
                "include_bin0": args.include_bin0, "threads": args.threads},
        seed=args.seed, version=__version__,
        outputs=["sweep.csv", "manifest.json"])
    manifest.write(out_dir)
    started = time.monotonic()
    geometries = None if args.axis == "spacing" else \
        [g.strip() for g in args.geometries.split(",") if g.strip()]
    header = ("axis_value", "geometry", "trace", "det", "max_eig")
    rows = []
    truncated = False
    try:
        sweep_rows = crlb_sweep(scenario, args.axis, values,
                                geometries=geometries or ("ula",),
                                seed=args.seed, sampler=sampler)
        rows = [(repr(r["axis_value"]), r["geometry"], repr(r["trace"]),
                 repr(r["det"]), repr(r["max_eig"])) for r in sweep_rows]
    except KeyboardInterrupt:
        truncated = True
    if truncated:
        rows.append(("truncated", "truncated", "", "", ""))
    _write_csv(out_dir / "sweep.csv", header, rows)
    manifest.wall_clock_s = time.monotonic() - started
    manifest.write(out_dir)
    return 130 if truncated else 0


def _cmd_simulate(args, out_dir):
    scenario = _load_scenario_arg(args)
    snrs = _parse_range(args.snr_range)
    sampler = SamplerConfig(restarts=args.restarts, patience=args.patience,
                            seed=args.seed)
    manifest = RunManifest(
        subcommand="simulate", scenario=args.scenario,
        config={"snr": args.snr_range, "trials": args.trials,
                "geometries": args.geometries, "include_bin0":
                    args.include_bin0, "threads": args.threads},
        seed=args.seed, version=__version__,
        outputs=["rmse.csv", "manifest.json"])
    manifest.write(out_dir)
    started = time.monotonic()
    geometries = _resolve_geometries(args.geometries, scenario, args.seed,
                                     sampler, args.include_bin0)
    header = ("snr_db", "geometry", "target", "rmse_m", "crlb_m", "trials",
              "failures")
    rows = []
    truncated = False
    try:
        for label, geom in geometries:
            results = rmse_experiment(scenario.with_geometry(geom), snrs,
                                      trials=args.trials, seed=args.seed,
                                      label=label)
            for res in results:
                for t in range(res.rmse.size):
                    rows.append((repr(res.snr_db), res.geometry, t,
                                 repr(float(res.rmse[t])),
                                 repr(float(res.crlb[t])), res.trials,
                                 res.failures))
    except KeyboardInterrupt:
        truncated = True
    if truncated:
        rows.append(("truncated",) * len(header))
    _write_csv(out_dir / "rmse.csv", header, rows)
    manifest.wall_clock_s = time.monotonic() - started
    manifest.write(out_dir)
    return 130 if truncated else 0


def _cmd_bound(args, out_dir):
    scenario = _load_scenario_arg(args)
    values = _parse_range(args.dtheta_range)
    manifest = RunManifest(
        subcommand="bound", scenario=args.scenario,
        config={"dtheta": args.dtheta_range,
                "include_bin0": args.include_bin0, "threads": args.threads},
        seed=args.seed, version=__version__,
        outputs=["bound.csv", "manifest.json"])
    manifest.write(out_dir)
    started = time.monotonic()
    d, e = scenario.constraints.d, scenario.constraints.e
    lam = scenario.radar.wavelength
    rows = []
    for dtheta in values:
        lo, hi = omega_separation_interval(float(dtheta), d, e, lam)
        rows.append((repr(float(dtheta)), repr(lo), repr(hi),
                     repr(hi - lo)))
    _write_csv(out_dir / "bound.csv",
               ("dtheta_rad", "lo_rad", "hi_rad", "width_rad"), rows)
    manifest.wall_clock_s = time.monotonic() - started
    manifest.write(out_dir)
    return 0


_HANDLERS = {
    "crlb": _cmd_crlb,
    "place": _cmd_place,
    "sweep": _cmd_sweep,
    "simulate": _cmd_simulate,
    "bound": _cmd_bound,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](args, out_dir)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _SINGULAR_ERRORS as exc:
        print(f"singular model: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
