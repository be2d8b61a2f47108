"""Scenario configuration: JSON loading, validation and the bundled library."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

from .autocalib import FIXED_OVERHEAD, PER_RANGING_TIME, CalibrationConfig, CanonicalFrame
from .errors import ParseError, UwbLabError, ValidationError
from .flightsim import (
    NORMS,
    CircleControllerParams,
    CircleTrajectory,
    CylindricalPose,
    FlightScenario,
    PassesTrajectory,
    SweepTrajectory,
)
from .geometry import AnchorArray, Point3
from .locate import SolveMode
from .ranging import DEFAULT_REPLY_TURNAROUND, ClockModel, RangingNoiseModel

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ClockDefaults:
    drift: float = 0.0  # ppm
    antenna_delay: float = 0.0
    reply_turnaround: float = DEFAULT_REPLY_TURNAROUND

    def __post_init__(self):
        ClockModel(0.0, self.drift, self.antenna_delay)
        if self.reply_turnaround <= 0:
            raise ValidationError("reply_turnaround must be > 0")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    anchors: AnchorArray
    noise: RangingNoiseModel = RangingNoiseModel()
    clock: ClockDefaults = ClockDefaults()
    trajectory: Any = CircleTrajectory()
    duration: float = 120.0
    control_rate: float = 10.0
    seed: int = 0
    solver_mode: SolveMode = SolveMode.FUSED_2D
    lidar_sigma: float = 0.02
    calibration: CalibrationConfig = CalibrationConfig()
    ordering: tuple = ()
    planar_z: float = 0.0
    tag_id: str = "tag0"
    source: str | None = field(default=None, compare=False)

    @property
    def frame(self) -> CanonicalFrame:
        if self.ordering:
            return CanonicalFrame(self.ordering)
        return CanonicalFrame.counter_clockwise(self.anchors)

    def flight_scenario(self, seed: int | None = None) -> FlightScenario:
        seed = self.seed if seed is None else seed
        return FlightScenario(
            anchors=self.anchors,
            noise=RangingNoiseModel(self.noise.sigma, self.noise.bias, self.noise.clip, seed),
            trajectory=self.trajectory,
            duration=self.duration,
            control_rate=self.control_rate,
            seed=seed,
            lidar_sigma=self.lidar_sigma,
            tag_id=self.tag_id,
            name=self.name,
            solver_mode=self.solver_mode,
        )

    def to_dict(self) -> dict:
        """All fields with defaults materialised; ``parse_scenario`` round-trips it."""
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "anchors": [{"id": aid, "xyz": [p.x, p.y, p.z]} for aid, p in self.anchors.anchors],
            "noise": {"sigma": self.noise.sigma, "bias": self.noise.bias, "clip": self.noise.clip},
            "clock": {
                "drift_ppm": self.clock.drift,
                "antenna_delay": self.clock.antenna_delay,
                "reply_turnaround": self.clock.reply_turnaround,
            },
            "trajectory": _trajectory_to_dict(self.trajectory),
            "duration": self.duration,
            "control_rate": self.control_rate,
            "seed": self.seed,
            "solver_mode": self.solver_mode.value,
            "lidar_sigma": self.lidar_sigma,
            "calibration": {
                "samples_per_pair": self.calibration.samples_per_pair,
                "per_ranging_time": self.calibration.per_ranging_time,
                "fixed_overhead": self.calibration.fixed_overhead,
                "planar_z": self.planar_z,
                "ordering": list(self.frame.ordering),
            },
            "tag_id": self.tag_id,
        }


def _xyz(v, where: str) -> Point3:
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        raise ValidationError(f"{where}: expected [x, y, z]")
    try:
        return Point3(*(float(c) for c in v))
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _trajectory_to_dict(traj) -> dict:
    if isinstance(traj, CircleTrajectory):
        p0 = traj.params.p0
        return {
            "kind": "circle",
            "p0": [p0.r, p0.theta, p0.z],
            "epsilon": traj.params.epsilon,
            "delta_theta": traj.params.delta_theta,
            "speed_limit": traj.speed_limit,
            "start": [traj.start.x, traj.start.y, traj.start.z],
            "norm": traj.norm,
        }
    if isinstance(traj, PassesTrajectory):
        return {
            "kind": "passes",
            "speeds": list(traj.speeds),
            "start": [traj.start.x, traj.start.y, traj.start.z],
            "end": [traj.end.x, traj.end.y, traj.end.z],
        }
    if isinstance(traj, SweepTrajectory):
        return {
            "kind": "sweep",
            "n_points": traj.n_points,
            "radius": traj.radius,
            "z_min": traj.z_min,
            "z_max": traj.z_max,
        }
    raise ValidationError(f"unknown trajectory type {type(traj).__name__}")


def _parse_trajectory(d: dict):
    if not isinstance(d, dict):
        raise ValidationError("trajectory: expected an object")
    kind = d.get("kind", "circle")
    if kind == "circle":
        p0 = d.get("p0", [1.23, 0.0, 1.23])
        if not isinstance(p0, (list, tuple)) or len(p0) != 3:
            raise ValidationError("trajectory.p0: expected [r, theta, z]")
        params = CircleControllerParams(
            CylindricalPose(*(float(c) for c in p0)),
            float(d.get("epsilon", 0.3)),
            float(d.get("delta_theta", 0.05)),
        )
        norm = d.get("norm", "radial")
        if norm not in NORMS:
            raise ValidationError(f"trajectory.norm must be one of {NORMS}")
        speed = float(d.get("speed_limit", 1.0))
        if speed < 0:
            raise ValidationError("trajectory.speed_limit must be >= 0")
        return CircleTrajectory(params, _xyz(d.get("start", [0.0, 0.0, 0.0]), "trajectory.start"), speed, norm)
    if kind == "passes":
        speeds = tuple(float(v) for v in d.get("speeds", [0.5, 1.5, 2.5, 3.5, 4.5]))
        if not speeds or any(v <= 0 for v in speeds):
            raise ValidationError("trajectory.speeds must be a non-empty list of positive speeds")
        return PassesTrajectory(
            speeds,
            _xyz(d.get("start", [-3.5, 0.0, 1.2]), "trajectory.start"),
            _xyz(d.get("end", [3.5, 0.0, 1.2]), "trajectory.end"),
        )
    if kind == "sweep":
        n = int(d.get("n_points", 6000))
        radius = float(d.get("radius", 6.0))
        z_min, z_max = float(d.get("z_min", 0.5)), float(d.get("z_max", 2.5))
        if n < 1 or radius <= 0 or z_max < z_min:
            raise ValidationError("trajectory: sweep needs n_points >= 1, radius > 0, z_min <= z_max")
        return SweepTrajectory(n, radius, z_min, z_max)
    raise ValidationError(f"trajectory.kind must be circle, passes or sweep, got {kind!r}")


def _section(raw: dict, key: str) -> dict:
    v = raw.get(key, {})
    if not isinstance(v, dict):
        raise ValidationError(f"{key}: expected an object")
    return v


def parse_anchors(items) -> AnchorArray:
    if not isinstance(items, list):
        raise ValidationError("anchors: expected a list")
    out = []
    for i, a in enumerate(items):
        if not isinstance(a, dict) or "xyz" not in a:
            raise ValidationError(f"anchors[{i}]: expected {{'id': ..., 'xyz': [x, y, z]}}")
        out.append((str(a.get("id", f"a{i}")), _xyz(a["xyz"], f"anchors[{i}].xyz")))
    try:
        return AnchorArray(tuple(out))
    except UwbLabError as exc:
        raise ValidationError(f"anchors: {exc}") from None


def parse_scenario(raw: dict, source: str | None = None) -> ScenarioConfig:
    """Validate a decoded config; errors name the offending field."""
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
    if "anchors" not in raw:
        raise ValidationError("anchors: required")
    anchors = parse_anchors(raw["anchors"])

    def field_error(name, exc):
        return ValidationError(f"{name}: {exc}")

    try:
        n = _section(raw, "noise")
        noise = RangingNoiseModel(float(n.get("sigma", 0.039)), float(n.get("bias", 0.0)), float(n.get("clip", 0.086)))
    except (UwbLabError, TypeError, ValueError) as exc:
        raise field_error("noise", exc) from None
    try:
        c = _section(raw, "clock")
        clock = ClockDefaults(
            float(c.get("drift_ppm", 0.0)),
            float(c.get("antenna_delay", 0.0)),
            float(c.get("reply_turnaround", DEFAULT_REPLY_TURNAROUND)),
        )
    except (UwbLabError, TypeError, ValueError) as exc:
        raise field_error("clock", exc) from None
    try:
        trajectory = _parse_trajectory(raw.get("trajectory", {}))
    except ValidationError:
        raise
    except (UwbLabError, TypeError, ValueError) as exc:
        raise field_error("trajectory", exc) from None
    try:
        cal = _section(raw, "calibration")
        calibration = CalibrationConfig(
            int(cal.get("samples_per_pair", 50)),
            float(cal.get("per_ranging_time", PER_RANGING_TIME)),
            float(cal.get("fixed_overhead", FIXED_OVERHEAD)),
        )
        planar_z = float(cal.get("planar_z", 0.0))
        ordering = tuple(str(a) for a in cal.get("ordering", []))
    except (UwbLabError, TypeError, ValueError) as exc:
        raise field_error("calibration", exc) from None
    if ordering and (len(ordering) != len(anchors) or set(ordering) != set(anchors.ids)):
        raise ValidationError("calibration.ordering must be a permutation of the anchor ids")
    ordering = ordering or CanonicalFrame.counter_clockwise(anchors).ordering

    def num(key, default, positive=True):
        try:
            v = float(raw.get(key, default))
        except (TypeError, ValueError):
            raise ValidationError(f"{key}: expected a number") from None
        if not math.isfinite(v) or (positive and v <= 0):
            raise ValidationError(f"{key}: must be a positive finite number")
        return v

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ValidationError("seed: must be a non-negative integer")
    try:
        mode = SolveMode.parse(raw.get("solver_mode", SolveMode.FUSED_2D.value))
    except ValidationError as exc:
        raise field_error("solver_mode", exc) from None
    lidar_sigma = num("lidar_sigma", 0.02, positive=False)
    if lidar_sigma < 0:
        raise ValidationError("lidar_sigma: must be >= 0")
    return ScenarioConfig(
        name=str(raw.get("name", "scenario")),
        anchors=anchors,
        noise=noise,
        clock=clock,
        trajectory=trajectory,
        duration=num("duration", 120.0),
        control_rate=num("control_rate", 10.0),
        seed=seed,
        solver_mode=mode,
        lidar_sigma=lidar_sigma,
        calibration=calibration,
        ordering=ordering,
        planar_z=planar_z,
        tag_id=str(raw.get("tag_id", "tag0")),
        source=source,
    )


def loads_scenario(text: str, source: str | None = None) -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    return parse_scenario(raw, source)


def bundled_names() -> list[str]:
    root = resources.files("uwb_lab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str):
    name = name[:-5] if name.endswith(".json") else name
    res = resources.files("uwb_lab") / "scenarios" / f"{name}.json"
    if not res.is_file():
        raise ValidationError(f"no bundled scenario {name!r}; available: {bundled_names()}")
    return res


def load_scenario(path) -> ScenarioConfig:
    """Load a config file; a bare name like ``room-corners`` selects a bundled scenario."""
    p = Path(path)
    if p.is_file():
        text = p.read_text(encoding="utf-8")
        return loads_scenario(text, str(p))
    if p.suffix in ("", ".json") and p.parent == Path("."):
        res = bundled_path(p.name)
        return loads_scenario(res.read_text(encoding="utf-8"), f"bundled:{p.stem}")
    raise ValidationError(f"config file {str(path)!r} does not exist")
