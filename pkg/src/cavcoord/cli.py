"""Command-line front end.

Verbs:
    run       simulate a scenario and write CSV/JSON outputs
    compare   pair optimal and baseline metrics for the same scenario
    validate  load a scenario and report every problem found
    bounds    print exit-time bounds for one (v0, S, limits) triple

Exit codes: 0 ok, 1 runtime failure, 2 usage or config error,
3 safety violation detected.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .engine import MODES, TRACKING, SimLog, compute_metrics, run
from .scenario import ScenarioConfig, ScenarioError, load_scenario
from .trajectory import InfeasibleEntry, Limits, exit_time_bounds

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_UNSAFE = 0, 1, 2, 3

TRAJECTORY_COLUMNS = ["rep", "time_s", "vehicle", "path", "s_m", "route_m", "v_mps",
                      "u_mps2", "mode", "in_zone"]
PLANNING_COLUMNS = ["rep", "vehicle", "path", "t0_s", "v0_mps", "S_m", "t_lb_s", "t_ub_s",
                    "tf_planned_s", "tf_actual_s", "status"]
SPEED_POSITION_COLUMNS = ["rep", "vehicle", "route_m", "v_mps", "in_zone"]
TIME_POSITION_COLUMNS = ["rep", "vehicle", "ego", "time_s", "route_m"]


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """CSV cell: 9 significant digits, booleans as 0/1, None as empty."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return "%.9g" % x
    return str(x)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


# -- experiment orchestration ----------------------------------------------------


def _one_run(args):
    cfg, mode, duration, seed, tracking = args
    return run(cfg, mode, duration=duration, seed=seed, tracking=tracking)


def run_reps(cfg: ScenarioConfig, mode: str, reps: int, seed: int, duration: float,
             tracking: str, jobs: int = 1) -> list[SimLog]:
    """Independent repetitions with seeds ``seed, seed+1, ...``, in rep order."""
    tasks = [(cfg, mode, duration, seed + k, tracking) for k in range(reps)]
    if jobs > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_one_run, tasks))
    return [_one_run(t) for t in tasks]


def metrics_row(log: SimLog, rep: int) -> dict:
    row = {"rep": rep, "seed": log.seed}
    if not log.records:
        row.update({k: None for k in ("v_min_zone_mps", "v_avg_zone_mps", "v_min_all_mps",
                                      "v_avg_all_mps", "rmse_pct")})
        row.update(safety_violations=0, collisions=0, planning_failures=0,
                   tracking_deviations=0, vehicles={}, exits=[])
        return row
    m = compute_metrics(log)
    row.update(
        v_min_zone_mps=m.v_min_zone,
        v_avg_zone_mps=m.v_avg_zone,
        v_min_all_mps=m.v_min_all,
        v_avg_all_mps=m.v_avg_all,
        rmse_pct=m.rmse_pct,
        safety_violations=m.safety_violations,
        collisions=m.collisions,
        planning_failures=m.planning_failures,
        tracking_deviations=m.tracking_deviations,
        rear_min_slack_m=log.rear_min_slack,
        lateral_min_slack_m=log.lateral_min_slack,
        store_peak=log.store_peak,
        vehicles=m.vehicles,
        exits=[{"vehicle": v, "tf_planned_s": a, "tf_actual_s": b} for v, a, b in m.exits],
    )
    return row


def _summary(rows: list[dict]) -> dict:
    def col(key):
        return [r[key] for r in rows if r.get(key) is not None]

    def mean(xs):
        return sum(xs) / len(xs) if xs else None

    return {
        "runs": len(rows),
        "v_min_zone_mps": min(col("v_min_zone_mps"), default=None),
        "v_avg_zone_mps": mean(col("v_avg_zone_mps")),
        "rmse_pct_mean": mean(col("rmse_pct")),
        "rmse_pct_max": max(col("rmse_pct"), default=None),
        "safety_violations": sum(col("safety_violations")),
        "planning_failures": sum(col("planning_failures")),
    }


def write_outputs(out: Path, cfg: ScenarioConfig, mode: str, tracking: str,
                  logs: list[SimLog]) -> dict:
    """Write every output file for one mode; returns the metrics document."""
    out.mkdir(parents=True, exist_ok=True)
    ego_ids = {v.id for v in cfg.vehicles if v.ego}

    def traj_rows():
        for rep, log in enumerate(logs):
            for t, vid, pid, s, route, v, u, vmode, in_zone in log.records:
                yield (rep, t, vid, pid, s, route, v, u, vmode, in_zone)

    def plan_rows():
        for rep, log in enumerate(logs):
            for ev in log.plans:
                yield (rep, ev.vehicle, ev.path, ev.t0, ev.v0, ev.S, ev.t_lb, ev.t_ub,
                       ev.tf_planned, ev.tf_actual, ev.status)

    def speed_rows():
        for rep, log in enumerate(logs):
            for t, vid, _, _, route, v, _, _, in_zone in log.records:
                if not ego_ids or vid in ego_ids:
                    yield (rep, vid, route, v, in_zone)

    def time_rows():
        for rep, log in enumerate(logs):
            for t, vid, _, _, route, *_ in log.records:
                yield (rep, vid, vid in ego_ids, t, route)

    _write_csv(out / "trajectories.csv", TRAJECTORY_COLUMNS, traj_rows())
    _write_csv(out / "planning.csv", PLANNING_COLUMNS, plan_rows())
    _write_csv(out / "speed_position.csv", SPEED_POSITION_COLUMNS, speed_rows())
    _write_csv(out / "time_position.csv", TIME_POSITION_COLUMNS, time_rows())

    rows = [metrics_row(log, rep) for rep, log in enumerate(logs)]
    doc = {
        "scenario": cfg.name,
        "scenario_hash": cfg.digest(),
        "mode": mode,
        "tracking": tracking,
        "runs": rows,
        "summary": _summary(rows),
        "violations": [v for log in logs for v in log.violations + log.collisions],
    }
    (out / "metrics.json").write_text(json.dumps(_json_safe(doc), indent=2) + "\n")
    return doc


def run_experiment(cfg: ScenarioConfig, mode: str, out: Path, *, reps: int | None = None,
                   seed: int | None = None, duration: float | None = None,
                   tracking: str | None = None, jobs: int = 1) -> int:
    """Run ``cfg`` in ``mode`` and write outputs to ``out``; returns an exit code."""
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}, got {mode!r}")
    tracking = tracking or cfg.tracking
    if tracking not in TRACKING:
        raise UsageError(f"tracking must be one of {TRACKING}, got {tracking!r}")
    reps = cfg.repetitions if reps is None else reps
    seed = cfg.seed if seed is None else seed
    duration = cfg.duration if duration is None else duration
    if reps < 1 or duration < 0:
        raise UsageError("--reps must be >= 1 and --duration >= 0")
    logs = run_reps(cfg, mode, reps, seed, duration, tracking, jobs)
    doc = write_outputs(Path(out), cfg, mode, tracking, logs)
    return EXIT_UNSAFE if doc["summary"]["safety_violations"] else EXIT_OK


# -- comparison -------------------------------------------------------------------


def _ego_table(doc: dict) -> dict[str, dict]:
    """Per-ego figures averaged over runs (all vehicles when none is ego)."""
    acc: dict[str, list[dict]] = {}
    for row in doc["runs"]:
        vehicles = row.get("vehicles") or {}
        egos = {k: v for k, v in vehicles.items() if v.get("ego")} or vehicles
        for vid, d in egos.items():
            acc.setdefault(vid, []).append(d)
    out = {}
    for vid, ds in sorted(acc.items()):
        def mean(key):
            xs = [d[key] for d in ds if d.get(key) is not None]
            return sum(xs) / len(xs) if xs else None

        out[vid] = {
            "travel_time_s": mean("travel_time_s"),
            "avg_speed_mps": mean("avg_speed_mps"),
            "min_speed_mps": min((d["min_speed_mps"] for d in ds
                                  if d.get("min_speed_mps") is not None), default=None),
            "stops": sum(d.get("stops", 0) for d in ds),
        }
    return out


def compare(optimal: dict, baseline: dict) -> dict:
    """Ego-level comparison of two metrics documents from the same scenario.

    Deltas are baseline minus optimal, so a positive travel-time delta means
    the optimal case was faster.
    """
    if optimal.get("scenario_hash") != baseline.get("scenario_hash"):
        raise ValueError(
            f"metrics come from different scenarios "
            f"({optimal.get('scenario_hash')} vs {baseline.get('scenario_hash')})"
        )
    opt, base = _ego_table(optimal), _ego_table(baseline)
    vehicles = {}
    for vid in sorted(set(opt) & set(base)):
        o, b = opt[vid], base[vid]

        def delta(key):
            if o[key] is None or b[key] is None:
                return None
            return b[key] - o[key]

        vehicles[vid] = {
            "travel_time_delta_s": delta("travel_time_s"),
            "avg_speed_optimal_mps": o["avg_speed_mps"],
            "avg_speed_baseline_mps": b["avg_speed_mps"],
            "min_speed_optimal_mps": o["min_speed_mps"],
            "min_speed_baseline_mps": b["min_speed_mps"],
            "stops_optimal": o["stops"],
            "stops_baseline": b["stops"],
        }

    def mean(side, key):
        xs = [v[key] for v in side.values() if v[key] is not None]
        return sum(xs) / len(xs) if xs else None

    def diff(a, b):
        return None if a is None or b is None else b - a

    return {
        "scenario": optimal.get("scenario"),
        "scenario_hash": optimal.get("scenario_hash"),
        "vehicles": vehicles,
        "avg_speed_optimal_mps": mean(opt, "avg_speed_mps"),
        "avg_speed_baseline_mps": mean(base, "avg_speed_mps"),
        "travel_time_delta_s": diff(mean(opt, "travel_time_s"), mean(base, "travel_time_s")),
        "stops_optimal": sum(v["stops"] for v in opt.values()),
        "stops_baseline": sum(v["stops"] for v in base.values()),
    }


# -- argument handling -------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cavcoord", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    def sim_flags(p, modes):
        p.add_argument("--scenario", required=True,
                       help="scenario JSON file, or a bundled name (roundabout, corridor)")
        p.add_argument("--mode", default=modes[0], choices=modes)
        p.add_argument("--duration", type=float, help="simulated seconds (default: scenario)")
        p.add_argument("--reps", type=int, help="repetitions (default: scenario)")
        p.add_argument("--seed", type=int, help="seed of the first repetition")
        p.add_argument("--tracking", choices=TRACKING)
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel repetitions")

    sim_flags(sub.add_parser("run", help="simulate and write outputs"), list(MODES) + ["both"])

    cp = sub.add_parser("compare", help="compare optimal and baseline runs")
    cp.add_argument("--optimal", help="metrics.json of an optimal run")
    cp.add_argument("--baseline", help="metrics.json of a baseline run")
    cp.add_argument("--scenario", help="run both modes of this scenario instead")
    cp.add_argument("--out", help="output directory (with --scenario)")
    for flag, kind in (("--duration", float), ("--reps", int), ("--seed", int)):
        cp.add_argument(flag, type=kind)
    cp.add_argument("--tracking", choices=TRACKING)
    cp.add_argument("--jobs", type=int, default=1)

    vp = sub.add_parser("validate", help="check a scenario file")
    vp.add_argument("--scenario", required=True)

    bp = sub.add_parser("bounds", help="exit-time bounds for one entry state")
    bp.add_argument("--v0", type=float, required=True, help="entry speed (m/s)")
    bp.add_argument("--S", type=float, required=True, help="control-zone length (m)")
    bp.add_argument("--v-min", type=float, default=0.15)
    bp.add_argument("--v-max", type=float, default=0.5)
    bp.add_argument("--u-min", type=float, default=-0.45)
    bp.add_argument("--u-max", type=float, default=0.45)
    return ap


def _cmd_run(ns) -> int:
    cfg = load_scenario(ns.scenario)
    modes = list(MODES) if ns.mode == "both" else [ns.mode]
    code = EXIT_OK
    for mode in modes:
        out = Path(ns.out) / mode if len(modes) > 1 else Path(ns.out)
        rc = run_experiment(cfg, mode, out, reps=ns.reps, seed=ns.seed, duration=ns.duration,
                            tracking=ns.tracking, jobs=ns.jobs)
        code = max(code, rc)
        summ = json.loads((out / "metrics.json").read_text())["summary"]
        print(f"{cfg.name} [{mode}] runs={summ['runs']} violations={summ['safety_violations']} "
              f"planning_failures={summ['planning_failures']} -> {out}")
    return code


def _cmd_compare(ns) -> int:
    code = EXIT_OK
    if ns.scenario:
        if not ns.out:
            raise UsageError("compare --scenario needs --out")
        cfg = load_scenario(ns.scenario)
        docs = {}
        for mode in MODES:
            out = Path(ns.out) / mode
            code = max(code, run_experiment(cfg, mode, out, reps=ns.reps, seed=ns.seed,
                                            duration=ns.duration, tracking=ns.tracking,
                                            jobs=ns.jobs))
            docs[mode] = json.loads((out / "metrics.json").read_text())
        opt, base = docs["optimal"], docs["baseline"]
    elif ns.optimal and ns.baseline:
        opt = json.loads(Path(ns.optimal).read_text())
        base = json.loads(Path(ns.baseline).read_text())
    else:
        raise UsageError("compare needs --scenario or both --optimal and --baseline")
    try:
        report = compare(opt, base)
    except ValueError as exc:
        raise UsageError(str(exc))
    text = json.dumps(_json_safe(report), indent=2)
    if ns.out:
        Path(ns.out).mkdir(parents=True, exist_ok=True)
        (Path(ns.out) / "comparison.json").write_text(text + "\n")
    print(text)
    return code


def _cmd_validate(ns) -> int:
    cfg = load_scenario(ns.scenario)
    net = cfg.network()
    print(f"{cfg.name}: ok (hash {cfg.digest()})")
    for p in cfg.paths.values():
        zone = f"control zone {p.cz_length:.3f} m" if p.has_zone else "no control zone"
        print(f"  path {p.id}: length {p.length:.3f} m, {zone}")
    print(f"  conflict points: {len(net.conflicts)}")
    print(f"  vehicles: {len(cfg.vehicles)} ({sum(v.ego for v in cfg.vehicles)} ego)")
    return EXIT_OK


def _cmd_bounds(ns) -> int:
    try:
        limits = Limits(ns.v_min, ns.v_max, ns.u_min, ns.u_max)
        b = exit_time_bounds(ns.v0, ns.S, limits)
    except (InfeasibleEntry, ValueError) as exc:
        raise UsageError(str(exc))
    print(json.dumps({
        "v0_mps": ns.v0, "S_m": ns.S,
        "t_lb_s": b.t_lb, "t_ub_s": b.t_ub,
        "t_umax_s": b.t_umax, "t_vmax_s": b.t_vmax, "t_umin_s": b.t_umin, "t_vmin_s": b.t_vmin,
    }, indent=2))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "compare": _cmd_compare, "validate": _cmd_validate,
            "bounds": _cmd_bounds}


def main(argv=None) -> int:
    ap = _parser()
    try:
        ns = ap.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return COMMANDS[ns.verb](ns)
    except ScenarioError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - any engine failure is a runtime error
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
