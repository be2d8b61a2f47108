"""Kinematic UAV flight driven by the circular waypoint controller.

Each control tick samples noisy ranges from the true position, solves a
2D fix with lidar-fused height, feeds the estimate to the controller and
moves the vehicle straight toward the commanded waypoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import AnchorArray, Point3, centroid
from .locate import RangeSet, SolveMode, multilaterate
from .ranging import RangingNoiseModel, sample_range

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    t = math.fmod(theta, TWO_PI)
    if t < 0:
        t += TWO_PI
    # fmod of a tiny negative can round up to exactly 2*pi
    return 0.0 if t >= TWO_PI else t


@dataclass(frozen=True)
class CylindricalPose:
    r: float
    theta: float
    z: float

    def __post_init__(self):
        if self.r < 0:
            raise ValidationError("r must be >= 0")
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @classmethod
    def from_point(cls, p: Point3) -> "CylindricalPose":
        return cls(math.hypot(p.x, p.y), math.atan2(p.y, p.x), p.z)

    def to_point(self) -> Point3:
        return Point3(self.r * math.cos(self.theta), self.r * math.sin(self.theta), self.z)


@dataclass(frozen=True)
class CircleControllerParams:
    p0: CylindricalPose = CylindricalPose(1.23, 0.0, 1.23)
    epsilon: float = 0.3
    delta_theta: float = 0.05

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if not (0 < self.delta_theta < math.pi):
            raise ValidationError("delta_theta must be in (0, pi)")


NORMS = ("radial", "3d")


def path_deviation(p: CylindricalPose, p0: CylindricalPose, norm: str = "radial") -> float:
    """|‖p‖ - ‖p0‖|, with ‖.‖ the xy radius ("radial") or the Cartesian norm ("3d")."""
    if norm == "radial":
        return abs(p.r - p0.r)
    if norm == "3d":
        return abs(math.hypot(p.r, p.z) - math.hypot(p0.r, p0.z))
    raise ValidationError(f"norm must be one of {NORMS}, got {norm!r}")


def next_waypoint(current: CylindricalPose, params: CircleControllerParams, norm: str = "radial") -> CylindricalPose:
    p0 = params.p0
    if path_deviation(current, p0, norm) > params.epsilon:
        return CylindricalPose(p0.r, p0.theta, p0.z)
    return CylindricalPose(p0.r, current.theta + params.delta_theta, p0.z)


@dataclass(frozen=True)
class UavState:
    position: Point3
    speed_limit: float = 1.0
    control_rate: float = 10.0

    def __post_init__(self):
        # speed_limit 0 is allowed: a grounded vehicle still produces a log
        if self.speed_limit < 0:
            raise ValidationError("speed_limit must be >= 0")
        if self.control_rate <= 0:
            raise ValidationError("control_rate must be > 0")


def step_kinematics(state: UavState, waypoint: Point3, dt: float) -> UavState:
    if dt <= 0:
        raise ValidationError("dt must be > 0")
    p = state.position.as_array()
    w = waypoint.as_array()
    delta = w - p
    dist = float(np.linalg.norm(delta))
    reach = state.speed_limit * dt
    if dist <= reach:
        new = w
    else:
        new = p + delta * (reach / dist)
    return replace(state, position=Point3.from_array(new))


# Trajectory kinds -----------------------------------------------------------


@dataclass(frozen=True)
class CircleTrajectory:
    params: CircleControllerParams = CircleControllerParams()
    start: Point3 = Point3(0.0, 0.0, 0.0)
    speed_limit: float = 1.0
    norm: str = "radial"
    kind: str = "circle"


@dataclass(frozen=True)
class PassesTrajectory:
    """Straight back-and-forth passes between two points, one per commanded speed."""

    speeds: tuple[float, ...] = (0.5, 1.5, 2.5, 3.5, 4.5)
    start: Point3 = Point3(-3.5, 0.0, 1.2)
    end: Point3 = Point3(3.5, 0.0, 1.2)
    kind: str = "passes"


@dataclass(frozen=True)
class SweepTrajectory:
    """Static tag positions on a disc around the anchor centroid.

    The radius is drawn uniformly (not the area), so every distance band
    receives about the same number of samples.
    """

    n_points: int = 6000
    radius: float = 6.0
    z_min: float = 0.5
    z_max: float = 2.5
    kind: str = "sweep"


Trajectory = Union[CircleTrajectory, PassesTrajectory, SweepTrajectory]


@dataclass(frozen=True)
class FlightScenario:
    anchors: AnchorArray
    noise: RangingNoiseModel = RangingNoiseModel()
    trajectory: Trajectory = CircleTrajectory()
    duration: float = 120.0
    control_rate: float = 10.0
    seed: int = 0
    lidar_sigma: float = 0.02
    tag_id: str = "tag0"
    name: str = "scenario"
    solver_mode: SolveMode = SolveMode.FUSED_2D


@dataclass
class TrajectoryLog:
    tag_id: str
    t: np.ndarray
    truth: np.ndarray
    estimate: np.ndarray  # NaN rows where the solver failed
    waypoint: np.ndarray
    speed: np.ndarray
    anchor_ids: list = field(default_factory=list)
    ranges: np.ndarray | None = None  # ticks x anchors
    failures: int = 0

    def __len__(self) -> int:
        return len(self.t)

    @property
    def solved(self) -> np.ndarray:
        return ~np.isnan(self.estimate).any(axis=1)


class _Sensor:
    """Range + lidar sampling and the 2D fix for one tick."""

    def __init__(self, scenario: FlightScenario):
        self.anchors = scenario.anchors
        self.noise = scenario.noise
        self.lidar_sigma = scenario.lidar_sigma
        self.tag_id = scenario.tag_id
        range_ss, lidar_ss = np.random.SeedSequence(scenario.seed).spawn(2)
        self.range_rng = np.random.default_rng(range_ss)
        self.lidar_rng = np.random.default_rng(lidar_ss)
        self.pos = scenario.anchors.positions
        self.mode = SolveMode.parse(scenario.solver_mode)
        self.last_fix: Point3 | None = None

    def measure(self, t: float, truth: np.ndarray) -> tuple[np.ndarray, Point3 | None]:
        true_d = np.linalg.norm(self.pos - truth, axis=1)
        d = sample_range(true_d, self.noise, self.range_rng)
        d = np.maximum(d, 1e-3)
        lidar_z = truth[2] + (self.lidar_rng.normal(0.0, self.lidar_sigma) if self.lidar_sigma > 0 else 0.0)
        rs = RangeSet(self.tag_id, t, tuple(zip(self.anchors.ids, d)))
        init = None
        if self.last_fix is not None:
            init = Point3(self.last_fix.x, self.last_fix.y, lidar_z)
        try:
            if self.mode is SolveMode.FUSED_2D:
                fix = multilaterate(rs, self.anchors, self.mode, fixed_z=lidar_z, init=init)
            else:
                fix = multilaterate(rs, self.anchors, self.mode, init=self.last_fix)
        except NumericalError:
            return d, None
        self.last_fix = fix.point
        return d, fix.point


def _new_log(scenario: FlightScenario, n: int) -> TrajectoryLog:
    return TrajectoryLog(
        tag_id=scenario.tag_id,
        t=np.arange(n) / scenario.control_rate,
        truth=np.zeros((n, 3)),
        estimate=np.full((n, 3), np.nan),
        waypoint=np.zeros((n, 3)),
        speed=np.zeros(n),
        anchor_ids=list(scenario.anchors.ids),
        ranges=np.zeros((n, len(scenario.anchors))),
    )


def _run_circle(scenario: FlightScenario, traj: CircleTrajectory) -> TrajectoryLog:
    dt = 1.0 / scenario.control_rate
    n = int(round(scenario.duration * scenario.control_rate))
    log = _new_log(scenario, n)
    sensor = _Sensor(scenario)
    state = UavState(traj.start, traj.speed_limit, scenario.control_rate)
    waypoint = traj.params.p0.to_point()
    for k in range(n):
        p = state.position.as_array()
        d, est = sensor.measure(log.t[k], p)
        if est is not None:
            waypoint = next_waypoint(CylindricalPose.from_point(est), traj.params, traj.norm).to_point()
            log.estimate[k] = est.as_array()
        else:
            log.failures += 1
        log.truth[k] = p
        log.ranges[k] = d
        log.waypoint[k] = waypoint.as_array()
        state = step_kinematics(state, waypoint, dt)
        log.speed[k] = float(np.linalg.norm(state.position.as_array() - p)) / dt
    return log


def _run_passes(scenario: FlightScenario, traj: PassesTrajectory) -> TrajectoryLog:
    dt = 1.0 / scenario.control_rate
    ends = [traj.end, traj.start]
    plan = []  # (waypoint, speed) per tick
    pos = traj.start.as_array()
    for i, v in enumerate(traj.speeds):
        if v <= 0:
            raise ValidationError("pass speeds must be > 0")
        target = ends[i % 2].as_array()
        steps = max(1, math.ceil(np.linalg.norm(target - pos) / (v * dt) - 1e-9))
        plan.extend([(target, v)] * steps)
        pos = target
    n = len(plan)
    if scenario.duration:
        n = min(n, int(round(scenario.duration * scenario.control_rate)))
    log = _new_log(scenario, n)
    sensor = _Sensor(scenario)
    state = UavState(traj.start, traj.speeds[0], scenario.control_rate)
    for k in range(n):
        target, v = plan[k]
        p = state.position.as_array()
        d, est = sensor.measure(log.t[k], p)
        if est is not None:
            log.estimate[k] = est.as_array()
        else:
            log.failures += 1
        log.truth[k] = p
        log.ranges[k] = d
        log.waypoint[k] = target
        state = step_kinematics(replace(state, speed_limit=v), Point3.from_array(target), dt)
        log.speed[k] = float(np.linalg.norm(state.position.as_array() - p)) / dt
    return log


def sweep_positions(anchors: AnchorArray, traj: SweepTrajectory, rng: np.random.Generator) -> np.ndarray:
    c = centroid(anchors)
    r = rng.uniform(0.0, traj.radius, traj.n_points)
    a = rng.uniform(0.0, TWO_PI, traj.n_points)
    z = rng.uniform(traj.z_min, traj.z_max, traj.n_points)
    return np.column_stack([c.x + r * np.cos(a), c.y + r * np.sin(a), z])


def _run_sweep(scenario: FlightScenario, traj: SweepTrajectory) -> TrajectoryLog:
    pos_ss, _ = np.random.SeedSequence([scenario.seed, 1]).spawn(2)
    points = sweep_positions(scenario.anchors, traj, np.random.default_rng(pos_ss))
    log = _new_log(scenario, len(points))
    sensor = _Sensor(scenario)
    for k, p in enumerate(points):
        sensor.last_fix = None  # independent positions: no warm start
        d, est = sensor.measure(log.t[k], p)
        if est is not None:
            log.estimate[k] = est.as_array()
        else:
            log.failures += 1
        log.truth[k] = p
        log.ranges[k] = d
        log.waypoint[k] = p
    return log


def run_flight(scenario: FlightScenario) -> TrajectoryLog:
    """Simulate the scenario; deterministic for a given seed."""
    traj = scenario.trajectory
    if scenario.control_rate <= 0:
        raise ValidationError("control_rate must be > 0")
    if isinstance(traj, CircleTrajectory):
        return _run_circle(scenario, traj)
    if isinstance(traj, PassesTrajectory):
        return _run_passes(scenario, traj)
    if isinstance(traj, SweepTrajectory):
        return _run_sweep(scenario, traj)
    raise ValidationError(f"unknown trajectory kind {type(traj).__name__}")


def radial_deviation(log: TrajectoryLog, r0: float) -> np.ndarray:
    return np.abs(np.hypot(log.truth[:, 0], log.truth[:, 1]) - r0)


def entry_index(log: TrajectoryLog, params: CircleControllerParams) -> int | None:
    """First tick whose true position is within epsilon of the circle."""
    idx = np.flatnonzero(radial_deviation(log, params.p0.r) <= params.epsilon)
    return int(idx[0]) if len(idx) else None
