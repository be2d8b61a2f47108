"""Tag multilateration by Levenberg-Marquardt.

Two modes. In ``3D`` all coordinates are free. In ``2D-fused-height``
only xy is solved, and the tag height is fixed from an external sensor.
The residual still uses the full 3D range
``sqrt(|p_xy - a_xy|^2 + (z_fixed - a_z)^2) - d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Hashable

import numpy as np

from .errors import DegenerateGeometry, InsufficientRanges, NoConvergence, ValidationError
from .geometry import AnchorArray, Point3, are_collinear, are_coplanar, centroid

MAX_ITERATIONS = 50
STEP_TOL = 1e-6
NO_CONVERGENCE_STEP = 1e-3
LAMBDA0 = 1e-3
LAMBDA_DOWN = 0.3
LAMBDA_UP = 10.0
RESTARTS = 8
RESTART_SPREAD = 1.0


class SolveMode(str, Enum):
    FUSED_2D = "2D-fused-height"
    FULL_3D = "3D"

    @classmethod
    def parse(cls, value) -> "SolveMode":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        if v in ("2d", "2d-fused-height", "fused", "2d_fused_height"):
            return cls.FUSED_2D
        if v == "3d":
            return cls.FULL_3D
        raise ValidationError(f"unknown solver mode {value!r}")

    @property
    def min_ranges(self) -> int:
        return 3 if self is SolveMode.FUSED_2D else 4


@dataclass(frozen=True)
class RangeSet:
    tag_id: Hashable
    timestamp: float
    ranges: tuple[tuple[Hashable, float], ...]

    def __post_init__(self):
        rs = tuple((aid, float(r)) for aid, r in self.ranges)
        object.__setattr__(self, "ranges", rs)
        if any(not r > 0 for _, r in rs):
            raise ValidationError("ranges must be > 0")
        ids = [a for a, _ in rs]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate anchor id in RangeSet")

    @property
    def anchor_ids(self) -> list:
        return [a for a, _ in self.ranges]

    @property
    def values(self) -> np.ndarray:
        return np.array([r for _, r in self.ranges])

    def without(self, anchor_id) -> "RangeSet":
        return replace(self, ranges=tuple((a, r) for a, r in self.ranges if a != anchor_id))


@dataclass(frozen=True)
class PositionFix:
    point: Point3
    rms_residual: float
    iterations: int
    in_envelope: bool
    mode: SolveMode

    def __post_init__(self):
        if self.rms_residual < 0:
            raise ValidationError("rms_residual must be >= 0")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    last_step: float
    converged: bool
    costs: list[float] = field(default_factory=list)  # after each accepted step, starting with x0


def residuals_and_jacobian(
    x: np.ndarray, anchors: np.ndarray, ranges: np.ndarray, fixed_z: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Range residuals and their analytic Jacobian w.r.t. the free coordinates.

    With ``fixed_z`` set, ``x`` is (x, y); otherwise (x, y, z).
    """
    if fixed_z is None:
        diff = x[None, :] - anchors
    else:
        diff = np.column_stack([x[0] - anchors[:, 0], x[1] - anchors[:, 1], fixed_z - anchors[:, 2]])
    dist = np.sqrt(np.sum(diff**2, axis=1))
    safe = np.where(dist > 1e-12, dist, 1e-12)
    J = diff / safe[:, None]
    if fixed_z is not None:
        J = J[:, :2]
    return dist - ranges, J


def levenberg_marquardt(
    fun: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    x0: np.ndarray,
    max_iter: int = MAX_ITERATIONS,
    step_tol: float = STEP_TOL,
) -> LMResult:
    """Minimise 0.5*|r(x)|^2 with the damping schedule 1e-3, x0.3 on accept, x10 on reject."""
    x = np.asarray(x0, dtype=float).copy()
    r, J = fun(x)
    cost = 0.5 * float(r @ r)
    costs = [cost]
    lam = LAMBDA0
    eye = np.eye(len(x))
    step_norm = np.inf
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        g = J.T @ r
        H = J.T @ J
        try:
            step = np.linalg.solve(H + lam * eye, -g)
        except np.linalg.LinAlgError:
            lam *= LAMBDA_UP
            continue
        step_norm = float(np.linalg.norm(step))
        x_new = x + step
        r_new, J_new = fun(x_new)
        cost_new = 0.5 * float(r_new @ r_new)
        if cost_new <= cost:
            x, r, J, cost = x_new, r_new, J_new, cost_new
            costs.append(cost)
            lam *= LAMBDA_DOWN
        else:
            lam *= LAMBDA_UP
        if step_norm < step_tol:
            converged = True
            break
    return LMResult(x, cost, it, step_norm, converged, costs)


def linearized_position(anchor_pos: np.ndarray, ranges: np.ndarray, fixed_z: float | None = None):
    """Closed-form least-squares position from differenced squared ranges.

    Subtracting the first anchor's sphere equation from the others leaves a
    linear system in the free coordinates. Returns None when it is rank
    deficient.
    """
    a = np.asarray(anchor_pos, dtype=float)
    d2 = np.asarray(ranges, dtype=float) ** 2
    if fixed_z is not None:
        d2 = d2 - (fixed_z - a[:, 2]) ** 2
        a = a[:, :2]
    A = 2.0 * (a[1:] - a[0])
    b = np.sum(a[1:] ** 2, axis=1) - np.sum(a[0] ** 2) - d2[1:] + d2[0]
    x, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < a.shape[1]:
        return None
    return x


def _check_geometry(anchor_pos: np.ndarray, mode: SolveMode) -> None:
    if mode is SolveMode.FUSED_2D and are_collinear(anchor_pos[:, :2]):
        raise DegenerateGeometry("anchors used for the 2D solve are collinear")
    if mode is SolveMode.FULL_3D and are_coplanar(anchor_pos):
        raise DegenerateGeometry("anchors used for the 3D solve are coplanar")


def multilaterate(
    ranges: RangeSet,
    anchors: AnchorArray,
    mode=SolveMode.FUSED_2D,
    fixed_z: float | None = None,
    init: Point3 | None = None,
    rng: np.random.Generator | None = None,
) -> PositionFix:
    """Least-squares position from ranges to known anchors.

    Starts at the anchor centroid unless ``init`` is given. On
    ``NoConvergence`` it retries once from the best of 8 starts perturbed
    by up to 1 m per axis (``rng`` seeds the perturbation, default seed 0).
    """
    mode = SolveMode.parse(mode)
    if len(ranges.ranges) < mode.min_ranges:
        raise InsufficientRanges(f"{mode.value} needs >= {mode.min_ranges} ranges, got {len(ranges.ranges)}")
    missing = [a for a in ranges.anchor_ids if a not in anchors.ids]
    if missing:
        raise ValidationError(f"ranges reference unknown anchors {missing}")
    if mode is SolveMode.FUSED_2D and fixed_z is None:
        raise ValidationError("2D-fused-height mode requires fixed_z")
    pos = np.array([anchors.position(a).as_array() for a in ranges.anchor_ids])
    _check_geometry(pos, mode)
    d = ranges.values
    fz = float(fixed_z) if mode is SolveMode.FUSED_2D else None

    def fun(x):
        return residuals_and_jacobian(x, pos, d, fz)

    start = (init or centroid(anchors)).as_array()
    x0 = start[:2] if fz is not None else start
    res = levenberg_marquardt(fun, x0)
    if not res.converged and res.last_step > NO_CONVERGENCE_STEP:
        rng = rng if rng is not None else np.random.default_rng(0)
        starts = x0 + rng.uniform(-RESTART_SPREAD, RESTART_SPREAD, size=(RESTARTS, len(x0)))
        best = min(starts, key=lambda s: float(np.sum(fun(s)[0] ** 2)))
        res = levenberg_marquardt(fun, best)
        if not res.converged and res.last_step > NO_CONVERGENCE_STEP:
            raise NoConvergence(f"LM did not converge (last step {res.last_step:.3g} m)")

    # A converged LM can still sit in a local minimum (typically the mirror
    # image across the anchor plane). The linearised solution is a cheap
    # global candidate; refine from it only when it already beats the result.
    x_lin = linearized_position(pos, d, fz)
    if x_lin is not None and 0.5 * float(np.sum(fun(x_lin)[0] ** 2)) < res.cost:
        alt = levenberg_marquardt(fun, x_lin)
        if alt.cost < res.cost:
            res = alt

    xyz = np.array([res.x[0], res.x[1], fz]) if fz is not None else res.x
    point = Point3.from_array(xyz)
    r, _ = fun(res.x)
    return PositionFix(
        point=point,
        rms_residual=float(np.sqrt(np.mean(r**2))),
        iterations=max(res.iterations, 1),
        in_envelope=anchors.envelope().contains_xy(point),
        mode=mode,
    )


def fuse_height(fix: PositionFix, lidar_z: float) -> PositionFix:
    """Replace the height of a 2D fix with an external altitude reading."""
    if fix.mode is not SolveMode.FUSED_2D:
        raise ValidationError("fuse_height applies to 2D-fused-height fixes only")
    p = fix.point
    return replace(fix, point=Point3(p.x, p.y, float(lidar_z)))


def drop_anchor_robustness(
    ranges: RangeSet,
    anchors: AnchorArray,
    mode=SolveMode.FUSED_2D,
    fixed_z: float | None = None,
    init: Point3 | None = None,
) -> list[PositionFix]:
    """One fix per leave-one-out subset of the ranges, in range order."""
    if len(ranges.ranges) < 4:
        raise InsufficientRanges("leave-one-out analysis needs >= 4 ranges")
    return [
        multilaterate(ranges.without(aid), anchors, mode, fixed_z, init)
        for aid in ranges.anchor_ids
    ]


def exact_ranges(anchors: AnchorArray, p: Point3, tag_id="tag", timestamp: float = 0.0) -> RangeSet:
    """Noise-free ranges from ``p`` to every anchor."""
    d = np.linalg.norm(anchors.positions - p.as_array(), axis=1)
    return RangeSet(tag_id, timestamp, tuple(zip(anchors.ids, d)))
