"""Command-line entry point: ``uwb-lab {simulate,calibrate,replay,characterize,selftest}``.

Exit codes: 0 ok, 1 usage error, 2 validation/schema error, 3 numerical
failure. Errors go to stderr as one line of JSON.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .autocalib import (
    CalibrationConfig,
    calibration_latency,
    run_calibration_trials,
    REFERENCE_LATENCY,
)
from .characterize import (
    BIN_KEYS,
    QUARTILE_METHOD,
    WHISKER_IQR,
    BoxStats,
    Trajectory,
    auto_time_shift,
    bin_records,
    box_stats,
    cdf,
    compute_errors,
    trend_report,
)
from .dataio import (
    CSV_SCHEMA_VERSION,
    read_records_csv,
    read_trajectory_csv,
    ingest_dataset,
    write_cdf_csv,
    write_ranges_csv,
    write_records_csv,
    write_trajectory_csv,
)
from .errors import InputError, NumericalError, ParseError, UwbLabError, ValidationError
from .flightsim import CircleTrajectory, SweepTrajectory, entry_index, radial_deviation, run_flight
from .locate import SolveMode, multilaterate
from .scenario import SCHEMA_VERSION, bundled_names, load_scenario, parse_anchors

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2, 3

# Published calibration accuracy (max anchor error in metres) by square side, for comparison.
REFERENCE_MAX_ERROR = {
    "rtls_autopositioning": {"10m": 1.2, "4m": 0.75},
    "custom_x50": {"10m": 0.4, "4m": 0.25},
    "custom_x5": {"10m": 0.5, "4m": 0.3},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _metadata(seed=None, **extra) -> dict:
    meta = {
        "tool": "uwb-lab",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "whisker_convention": f"{WHISKER_IQR}*IQR",
        "quartile_method": QUARTILE_METHOD,
        "distance_to_centroid": "3d-euclidean",
    }
    if seed is not None:
        meta["seed"] = seed
    meta.update(extra)
    return meta


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _box_dict(b: BoxStats) -> dict:
    return {
        "q1": b.q1, "median": b.median, "q3": b.q3,
        "whisker_lo": b.whisker_lo, "whisker_hi": b.whisker_hi,
        "mean": b.mean, "n_outliers": len(b.outliers),
    }


def _nan_to_none(x):
    return None if x is None or (isinstance(x, float) and np.isnan(x)) else x


def _error_summary(records) -> dict:
    if len(records) < 4:
        return {"n": len(records)}
    arr = {k: np.array([getattr(r, k) for r in records]) for k in ("err_x", "err_y", "err_z", "err_xy")}
    return {
        "n": len(records),
        **{k: _box_dict(box_stats(v)) for k, v in arr.items()},
        "fraction_err_xy_below_0.1m": float(np.mean(arr["err_xy"] < 0.1)),
        "fraction_in_envelope": float(np.mean([r.in_envelope for r in records])),
    }


def _out_dir(p: str) -> Path:
    out = Path(p)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {p!r}: {exc.strerror}") from None
    return out


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = load_scenario(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    if args.duration is not None:
        from dataclasses import replace
        cfg = replace(cfg, duration=args.duration)
    scenario = cfg.flight_scenario(seed)
    log = run_flight(scenario)
    out = _out_dir(args.out)
    write_trajectory_csv(log, out / "trajectory.csv")
    write_ranges_csv(log, out / "ranges.csv")

    truth = Trajectory(log.t, log.truth)
    est = Trajectory(log.t, log.estimate)
    speed = log.speed if isinstance(cfg.trajectory, SweepTrajectory) else None
    records = compute_errors(truth, est, cfg.anchors, 0.0, rate=cfg.control_rate, speed=speed)
    write_records_csv(records, out / "records.csv")

    summary = {"ticks": len(log), "solver_failures": log.failures, "errors": _error_summary(records)}
    extra = {}
    if isinstance(cfg.trajectory, CircleTrajectory):
        params = cfg.trajectory.params
        extra["controller_norm"] = cfg.trajectory.norm
        k = entry_index(log, params)
        dev = radial_deviation(log, params.p0.r)
        summary["circle"] = {
            "entry_tick": k,
            "max_radial_deviation_after_entry": float(dev[k:].max()) if k is not None else None,
            "epsilon": params.epsilon,
        }
    report = {
        "metadata": _metadata(seed, scenario=cfg.name, command="simulate", solver_mode=cfg.solver_mode.value,
                              trajectory=type(cfg.trajectory).__name__, **extra),
        "config": cfg.to_dict() | {"seed": seed},
        "summary": summary,
    }
    _write_json(out / "report.json", report)
    return EXIT_OK


# -- calibrate ---------------------------------------------------------------


def cmd_calibrate(args) -> int:
    cfg = load_scenario(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    samples = cfg.calibration.samples_per_pair if args.samples is None else args.samples
    cal = CalibrationConfig(samples, cfg.calibration.per_ranging_time, cfg.calibration.fixed_overhead)
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    trials = run_calibration_trials(
        cfg.anchors, cfg.noise, cal, args.trials, seed, cfg.frame, cfg.planar_z, threads=args.threads
    )
    out = _out_dir(args.out)
    with open(out / "trials.csv", "w", encoding="utf-8", newline="") as f:
        f.write("trial,seed,anchor_id,error\n")
        for tr in trials:
            for aid, e in zip(cfg.frame.ordering, tr.anchor_errors):
                f.write(f"{tr.index},{tr.seed},{aid},{e:.9g}\n")
    errs = np.array([tr.anchor_errors for tr in trials])
    side = float(np.median(np.linalg.norm(np.diff(cfg.anchors.positions, axis=0, append=cfg.anchors.positions[:1]), axis=1)))
    summary = {
        "metadata": _metadata(
            seed, scenario=cfg.name, command="calibrate", trial_seed_rule="splitmix64(seed + trial)",
            pair_averaging="mean of both directed measurements", reference_distance="square side",
        ),
        "anchors": len(cfg.anchors),
        "ordering": list(cfg.frame.ordering),
        "samples_per_pair": samples,
        "trials": args.trials,
        "noise": {"sigma": cfg.noise.sigma, "bias": cfg.noise.bias, "clip": cfg.noise.clip},
        "median_boundary_edge_m": side,
        "max_error": float(errs.max()),
        "mean_error": float(errs.mean()),
        "p95_error": float(np.percentile(errs, 95)),
        "mean_trial_max_error": float(errs.max(axis=1).mean()),
        "latency_s": calibration_latency(len(cfg.anchors), cal),
        "rangings": len(cfg.anchors) * (len(cfg.anchors) - 1) * samples,
        "latency_model": {
            "per_ranging_time": cal.per_ranging_time,
            "fixed_overhead": cal.fixed_overhead,
            "fit_points": [list(p) for p in REFERENCE_LATENCY],
        },
        "reference_max_error": REFERENCE_MAX_ERROR,
    }
    _write_json(out / "summary.json", summary)
    return EXIT_OK


# -- replay ------------------------------------------------------------------


def _load_anchors(path: str):
    if not Path(path).exists() and path in bundled_names():
        return load_scenario(path).anchors
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read anchors file {path!r}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    items = raw.get("anchors") if isinstance(raw, dict) else raw
    if items is None:
        raise ValidationError("anchors: required")
    return parse_anchors(items)


def _pick(trajs: dict, source: str, tag: str | None, what: str) -> tuple[str, Trajectory]:
    tags = [t for t in trajs if source in trajs[t]] if tag is None else [tag]
    if not tags or tags[0] not in trajs or source not in trajs[tags[0]]:
        raise ValidationError(f"{what}: no {source!r} rows" + (f" for tag {tag!r}" if tag else ""))
    return tags[0], trajs[tags[0]][source]


def cmd_replay(args) -> int:
    anchors = _load_anchors(args.anchors)
    tag, truth = _pick(read_trajectory_csv(args.truth), "truth", args.tag, "--truth")
    _, est = _pick(read_trajectory_csv(args.est), "estimate", tag, "--est")
    out = _out_dir(args.out)

    shift, confident = args.time_shift, True
    if args.auto_shift is not None:
        shift, confident = auto_time_shift(truth, est, args.auto_shift)
    records = compute_errors(truth, est, anchors, shift)
    write_records_csv(records, out / "records.csv")
    write_cdf_csv(cdf([r.err_xy for r in records]), out / "cdf_err_xy.csv")
    report = {
        "metadata": _metadata(command="replay", tag_id=tag, time_shift=shift, time_shift_confident=confident),
        "recorded": _error_summary(records),
    }

    if args.ranges:
        _, range_sets = ingest_dataset(args.truth, args.ranges)
        mode = SolveMode.parse(args.mode)
        solved_t, solved_xyz, failures = [], [], 0
        for rs in range_sets:
            if str(rs.tag_id) != str(tag):
                continue
            fixed_z = None
            if mode is SolveMode.FUSED_2D:
                j = int(np.argmin(np.abs(est.t - rs.timestamp)))
                fixed_z = float(est.xyz[j, 2])
            try:
                fix = multilaterate(rs, anchors, mode, fixed_z=fixed_z)
            except NumericalError:
                failures += 1
                continue
            solved_t.append(rs.timestamp)
            solved_xyz.append(fix.point.as_array())
        if len(solved_t) < 2:
            raise NumericalError("re-solve from ranges produced fewer than 2 fixes")
        resolved = Trajectory(np.array(solved_t), np.array(solved_xyz))
        rec2 = compute_errors(truth, resolved, anchors, shift)
        write_records_csv(rec2, out / "records_resolved.csv")
        report["resolved"] = _error_summary(rec2) | {"solver_failures": failures, "solver_mode": mode.value}
    _write_json(out / "report.json", report)
    return EXIT_OK


# -- characterize ------------------------------------------------------------


def _parse_edges(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise ValidationError(f"--edges must be a comma-separated list of numbers, got {text!r}") from None


def cmd_characterize(args) -> int:
    records = read_records_csv(args.records)
    edges = _parse_edges(args.edges)
    bins, dropped = bin_records(records, args.bin, edges)
    out = _out_dir(args.out)
    box_rows = []
    files = []
    for label, recs in bins:
        if not recs:
            continue
        name = f"cdf_{args.bin}_{label}.csv"
        write_cdf_csv(cdf([r.err_xy for r in recs]), out / name)
        files.append(name)
        if len(recs) >= 4:
            b = box_stats([r.err_xy for r in recs])
            box_rows.append((label, b))
    with open(out / f"box_{args.bin}.csv", "w", encoding="utf-8", newline="") as f:
        f.write("label,n_outliers,q1,median,q3,whisker_lo,whisker_hi,mean\n")
        for label, b in box_rows:
            vals = [b.q1, b.median, b.q3, b.whisker_lo, b.whisker_hi, b.mean]
            f.write(label + f",{len(b.outliers)}," + ",".join(f"{v:.9g}" for v in vals) + "\n")
    trend = trend_report(bins)
    payload = trend.to_dict()
    payload["bins"] = [dict(b, median_err_xy=_nan_to_none(b["median_err_xy"])) for b in payload["bins"]]
    payload["metadata"] = _metadata(command="characterize", bin_key=args.bin, edges=edges) | payload["metadata"]
    payload["dropped"] = dropped
    payload["total_records"] = len(records)
    payload["cdf_files"] = files
    _write_json(out / "trend.json", payload)
    return EXIT_OK


# -- selftest ----------------------------------------------------------------


def cmd_selftest(args) -> int:
    from .selftest import run_all

    results = run_all(verbose=True, stream=sys.stdout)
    failed = [name for name, ok, _ in results if not ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uwb-lab", description="UWB ToF ranging, self-calibration and UAV localisation toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="run a scenario and write trajectory CSV + report JSON")
    s.add_argument("--config", required=True, help="scenario JSON path or bundled name (e.g. room-corners)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="Monte-Carlo anchor self-calibration")
    c.add_argument("--config", required=True)
    c.add_argument("--samples", type=int, help="measurements per directed anchor pair")
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--threads", type=int, help="parallel trials (default: UWB_LAB_THREADS or machine default)")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("replay", help="compare recorded estimates (and optionally re-solved ranges) with ground truth")
    r.add_argument("--truth", required=True)
    r.add_argument("--est", required=True)
    r.add_argument("--ranges")
    r.add_argument("--anchors", required=True, help="bundled scenario name, or JSON with an 'anchors' list (a scenario config works)")
    r.add_argument("--out", required=True)
    r.add_argument("--tag")
    r.add_argument("--time-shift", type=float, default=0.0, help="estimate delay in seconds")
    r.add_argument("--auto-shift", type=float, metavar="WINDOW", help="search the delay in [-WINDOW, WINDOW]")
    r.add_argument("--mode", default="2d", choices=["2d", "3d"])
    r.set_defaults(func=cmd_replay)

    k = sub.add_parser("characterize", help="binned CDFs, boxplot stats and trend summary")
    k.add_argument("--records", required=True)
    k.add_argument("--bin", required=True, choices=BIN_KEYS)
    k.add_argument("--edges", required=True, help="comma-separated bin edges, e.g. 0,1,2,3,4,5,6")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_characterize)

    t = sub.add_parser("selftest", help="run the invariant checks")
    t.set_defaults(func=cmd_selftest)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "UsageError", str(exc))
    except InputError as exc:
        return _fail(EXIT_VALIDATION, type(exc).__name__, str(exc))
    except UwbLabError as exc:
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))
    except Exception as exc:  # pragma: no cover - last resort, keeps stderr machine-readable
        return _fail(EXIT_NUMERICAL, type(exc).__name__, str(exc))


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
