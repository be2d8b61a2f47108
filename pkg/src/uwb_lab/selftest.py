"""Fast invariant checks across all modules, run by ``uwb-lab selftest``.

Each check raises ``AssertionError`` (or any exception) on violation. They
use small fixed seeds and finish in a few seconds overall.
"""

from __future__ import annotations

import math
import tempfile
import traceback
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from .autocalib import (
    CalibrationConfig,
    CanonicalFrame,
    calibration_latency,
    canonicalize_positions,
    distance_matrix,
    run_calibration_trials,
    solve_anchor_positions,
)
from .characterize import Trajectory, bin_records, box_stats, cdf, compute_errors, trend_report
from .dataio import read_ranges_csv, read_trajectory_csv, write_ranges_csv, write_trajectory_csv
from .errors import DegenerateGeometry, InsufficientRanges, InvalidTimestamps, ValidationError
from .flightsim import (
    CircleControllerParams,
    CircleTrajectory,
    CylindricalPose,
    FlightScenario,
    UavState,
    next_waypoint,
    run_flight,
    step_kinematics,
)
from .geometry import AnchorArray, Point3, convex_hull_2d
from .locate import (
    SolveMode,
    exact_ranges,
    levenberg_marquardt,
    multilaterate,
    residuals_and_jacobian,
)
from .ranging import (
    SPEED_OF_LIGHT,
    ClockModel,
    RangingNoiseModel,
    TwrTimestamps,
    ds_twr_tof,
    sample_range,
    simulate_exchange,
    ss_twr_tof,
)
from .scenario import bundled_names, load_scenario
from .seeding import trial_seed

SQUARE = AnchorArray.from_positions([(-4, -4, 1.8), (4, -4, 1.8), (4, 4, 1.8), (-4, 4, 1.8)])


def _raises(exc, fn, *a, **kw):
    try:
        fn(*a, **kw)
    except exc:
        return
    raise AssertionError(f"{getattr(fn, '__name__', fn)} did not raise {exc.__name__}")


def check_geometry():
    rng = np.random.default_rng(1)
    for _ in range(50):
        pts = rng.uniform(-5, 5, size=(12, 2))
        env = convex_hull_2d(pts)
        assert env.signed_area() > 0
        for p in pts:
            assert env.contains_xy(p)
    _raises(DegenerateGeometry, AnchorArray.from_positions, [(0, 0, 0), (1, 1, 0), (2, 2, 1)])
    _raises(ValidationError, AnchorArray.from_positions, [(0, 0, 0), (1, 0, 0)])
    _raises(ValidationError, Point3, math.nan, 0, 0)


def check_ranging():
    a = (Point3(0, 0, 0), ClockModel(0.0, 20.0, 0.0))
    b = (Point3(10, 0, 0), ClockModel(1e-3, -20.0, 0.0))
    ts = simulate_exchange(a, b)
    for v in (ts.t_round1, ts.t_reply1, ts.t_round2, ts.t_reply2):
        assert v > 0
    ds = ds_twr_tof(ts) * SPEED_OF_LIGHT
    ss = ss_twr_tof(ts.t_round1, ts.t_reply1) * SPEED_OF_LIGHT
    assert abs(ds - 10.0) < 0.01, ds
    assert abs(abs(ss - 10.0) - 1.2) < 0.12, ss
    ideal = simulate_exchange((a[0], ClockModel()), (b[0], ClockModel()))
    assert abs(ds_twr_tof(ideal) * SPEED_OF_LIGHT - 10.0) < 1e-6
    _raises(InvalidTimestamps, TwrTimestamps, 1e-6, 2e-6, 1e-6, 5e-7)
    noise = RangingNoiseModel()
    err = sample_range(np.full(5000, 3.0), noise, np.random.default_rng(0)) - 3.0
    assert np.max(np.abs(err)) <= noise.clip + 1e-12
    assert abs(err.std() - noise.sigma) < 0.2 * noise.sigma


def check_locate():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p = Point3(*rng.uniform(-3, 3, 2), rng.uniform(0.2, 2.5))
        rs = exact_ranges(SQUARE, p)
        fix = multilaterate(rs, SQUARE, SolveMode.FUSED_2D, fixed_z=p.z)
        assert fix.point.distance_to(p) < 1e-6
    x = rng.uniform(-2, 2, 3)
    r, J = residuals_and_jacobian(x, SQUARE.positions, np.ones(4))
    h = 1e-6
    fd = np.column_stack([
        (residuals_and_jacobian(x + h * e, SQUARE.positions, np.ones(4))[0] - r) / h for e in np.eye(3)
    ])
    assert np.allclose(fd, J, atol=1e-5)
    res = levenberg_marquardt(lambda v: residuals_and_jacobian(v, SQUARE.positions, np.full(4, 5.0)), x)
    assert all(b <= a for a, b in zip(res.costs, res.costs[1:]))
    _raises(InsufficientRanges, multilaterate, exact_ranges(SQUARE, Point3(0, 0, 1)).without("a0").without("a1"),
            SQUARE, SolveMode.FUSED_2D, fixed_z=1.0)


def check_autocalib():
    rng = np.random.default_rng(3)
    for _ in range(20):
        # anchors on the boundary of their convex envelope
        hull = np.array(convex_hull_2d(rng.uniform(-5, 5, (8, 2))).vertices)
        pts = np.column_stack([hull, np.zeros(len(hull))])
        anchors = AnchorArray.from_positions(pts)
        frame = CanonicalFrame.counter_clockwise(anchors)
        est = solve_anchor_positions(distance_matrix(anchors), frame)
        truth = canonicalize_positions(np.array([anchors.position(a).as_array() for a in frame.ordering]))
        assert np.allclose(est.positions, truth, atol=1e-9)
    cfg = CalibrationConfig(samples_per_pair=50)
    assert abs(calibration_latency(4, cfg) - (0.7222 + 600 * cfg.per_ranging_time)) < 1e-3
    anchors = AnchorArray.from_positions([(0, 0, 0), (4, 0, 0), (4, 4, 0), (0, 4, 0)])
    serial = run_calibration_trials(anchors, RangingNoiseModel(), CalibrationConfig(5), 4, 9, threads=1)
    parallel = run_calibration_trials(anchors, RangingNoiseModel(), CalibrationConfig(5), 4, 9, threads=3)
    assert all(np.array_equal(a.anchor_errors, b.anchor_errors) for a, b in zip(serial, parallel))
    assert [t.seed for t in serial] == [trial_seed(9, i) for i in range(4)]


def check_flightsim():
    params = CircleControllerParams()
    far = CylindricalPose(3.0, 1.0, 1.0)
    assert next_waypoint(far, params) == params.p0
    on = CylindricalPose(1.23, 0.5, 1.23)
    assert abs(next_waypoint(on, params).theta - 0.55) < 1e-12
    s = UavState(Point3(0, 0, 0), speed_limit=1.0)
    s2 = step_kinematics(s, Point3(10, 0, 0), 0.1)
    assert abs(s2.position.x - 0.1) < 1e-12
    log = run_flight(FlightScenario(SQUARE, duration=20.0, seed=4))
    assert len(log) == 200 and log.failures == 0
    steps = np.linalg.norm(np.diff(log.truth, axis=0), axis=1)
    assert np.all(steps <= 1.0 * 0.1 + 1e-9)
    again = run_flight(FlightScenario(SQUARE, duration=20.0, seed=4))
    assert np.array_equal(log.estimate, again.estimate)
    still = run_flight(FlightScenario(SQUARE, trajectory=CircleTrajectory(speed_limit=0.0), duration=2.0))
    assert np.all(still.truth == 0.0)


def check_characterize():
    rng = np.random.default_rng(5)
    v = rng.normal(size=101)
    c = cdf(v)
    assert c.probabilities[-1] == 1.0 and np.all(np.diff(c.probabilities) > 0)
    b = box_stats(v)
    assert b.whisker_lo <= b.q1 <= b.median <= b.q3 <= b.whisker_hi
    t = np.arange(50) * 0.1
    truth = Trajectory(t, np.column_stack([t, np.zeros(50), np.ones(50)]))
    est = Trajectory(t, truth.xyz + [0.03, 0.04, 0.0])
    recs = compute_errors(truth, est, SQUARE)
    assert all(abs(r.err_xy - 0.05) < 1e-12 for r in recs)
    bins, dropped = bin_records(recs, "dist_to_centroid", [0, 1, 2, 3, 4, 5, 6])
    assert sum(len(r) for _, r in bins) + dropped == len(recs)
    rep = trend_report(bins)
    assert len(rep.labels) == 6


def check_io():
    for name in bundled_names():
        load_scenario(name)
    cfg = load_scenario("room-corners")
    log = run_flight(replace(cfg, duration=3.0).flight_scenario())
    with tempfile.TemporaryDirectory() as d:
        traj_p, rng_p = Path(d) / "t.csv", Path(d) / "r.csv"
        write_trajectory_csv(log, traj_p)
        write_ranges_csv(log, rng_p)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            trajs = read_trajectory_csv(traj_p)
            ranges = read_ranges_csv(rng_p)
        back = trajs[log.tag_id]["truth"]
        assert np.allclose(back.xyz, log.truth, atol=1e-7)
        assert len(ranges) == len(log)


CHECKS = [
    ("geometry", check_geometry),
    ("ranging", check_ranging),
    ("locate", check_locate),
    ("autocalib", check_autocalib),
    ("flightsim", check_flightsim),
    ("characterize", check_characterize),
    ("io", check_io),
]


def run_all(verbose: bool = False, stream=None) -> list[tuple[str, bool, str]]:
    results = []
    for name, fn in CHECKS:
        try:
            fn()
            results.append((name, True, ""))
        except Exception as exc:  # noqa: BLE001 - every failure is reported, not raised
            msg = f"{type(exc).__name__}: {exc}"
            if verbose:
                msg += "\n" + traceback.format_exc()
            results.append((name, False, msg))
        if verbose and stream is not None:
            ok, msg = results[-1][1], results[-1][2]
            stream.write(f"{'PASS' if ok else 'FAIL'} {name}" + ("" if ok else f"\n{msg}") + "\n")
    return results
