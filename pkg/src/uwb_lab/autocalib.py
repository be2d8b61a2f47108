"""Anchor self-calibration from averaged pairwise two-way ranges.

Frame convention: the first anchor of the counter-clockwise boundary
ordering is the origin, the second lies on the positive x-axis and the
third has positive y. Everything is solved in a plane at ``planar_z``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import AmbiguousPlacement, InconsistentDistances, ValidationError
from .geometry import AnchorArray, Point3
from .ranging import RangingNoiseModel, sample_range
from .seeding import make_rng, trial_seed

# Published latencies of the pairwise calibration for 4 anchors:
# x50 -> 4*3*50 = 600 rangings, x5 -> 60 rangings.
REFERENCE_LATENCY = ((600, 2.5), (60, 0.9))

RESIDUAL_GATE = 0.5  # m
TRIANGLE_SLACK_SIGMAS = 5.0


def fit_latency(points: Sequence[tuple[int, float]] = REFERENCE_LATENCY) -> tuple[float, float]:
    """Least-squares line through (rangings, seconds); returns (per_ranging_time, fixed_overhead)."""
    n = np.array([p[0] for p in points], dtype=float)
    t = np.array([p[1] for p in points], dtype=float)
    A = np.column_stack([n, np.ones_like(n)])
    (slope, intercept), *_ = np.linalg.lstsq(A, t, rcond=None)
    return float(slope), float(intercept)


PER_RANGING_TIME, FIXED_OVERHEAD = fit_latency()


@dataclass(frozen=True)
class CalibrationConfig:
    samples_per_pair: int = 50
    per_ranging_time: float = PER_RANGING_TIME
    fixed_overhead: float = FIXED_OVERHEAD

    def __post_init__(self):
        if not (1 <= int(self.samples_per_pair) <= 1000):
            raise ValidationError("samples_per_pair must be in [1, 1000]")
        if self.per_ranging_time < 0 or self.fixed_overhead < 0:
            raise ValidationError("latency parameters must be >= 0")


@dataclass(frozen=True)
class PairwiseDistanceMatrix:
    ids: tuple
    d: np.ndarray
    # std of the individual samples behind each entry, if known
    sample_std: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "ids", tuple(self.ids))
        n = len(self.ids)
        if d.shape != (n, n):
            raise ValidationError(f"distance matrix must be {n}x{n}, got {d.shape}")
        if not np.allclose(d, d.T, rtol=0, atol=1e-12):
            raise ValidationError("distance matrix must be symmetric")
        if np.any(np.diag(d) != 0):
            raise ValidationError("distance matrix must have a zero diagonal")
        off = d[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise ValidationError("off-diagonal distances must be > 0")

    @property
    def n(self) -> int:
        return len(self.ids)

    def between(self, a, b) -> float:
        return float(self.d[self.ids.index(a), self.ids.index(b)])


@dataclass(frozen=True)
class CanonicalFrame:
    ordering: tuple

    def __post_init__(self):
        object.__setattr__(self, "ordering", tuple(self.ordering))
        if len(set(self.ordering)) != len(self.ordering):
            raise ValidationError("ordering must not repeat anchor ids")

    @classmethod
    def counter_clockwise(cls, anchors: AnchorArray, origin: Hashable | None = None) -> "CanonicalFrame":
        """Boundary order by polar angle about the centroid, rotated to start at ``origin``."""
        xy = anchors.positions[:, :2]
        c = xy.mean(axis=0)
        ang = np.arctan2(xy[:, 1] - c[1], xy[:, 0] - c[0])
        order = [anchors.ids[i] for i in np.argsort(ang, kind="stable")]
        origin = anchors.ids[0] if origin is None else origin
        k = order.index(origin)
        return cls(tuple(order[k:] + order[:k]))


def collect_pairwise(
    true_anchors: AnchorArray,
    noise: RangingNoiseModel,
    cfg: CalibrationConfig,
    rng: np.random.Generator,
) -> PairwiseDistanceMatrix:
    """Every anchor initiates once towards every other; both directions are averaged."""
    pos = true_anchors.positions
    n = len(pos)
    k = int(cfg.samples_per_pair)
    directed = np.zeros((n, n, k))
    for i in range(n):
        for j in range(n):
            if i != j:
                directed[i, j] = sample_range(np.linalg.norm(pos[i] - pos[j]), noise, rng, size=k)
    d = np.zeros((n, n))
    std = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            both = np.concatenate([directed[i, j], directed[j, i]])
            d[i, j] = d[j, i] = both.mean()
            std[i, j] = std[j, i] = both.std(ddof=1) if len(both) > 1 else 0.0
    return PairwiseDistanceMatrix(tuple(true_anchors.ids), d, sample_std=std)


def distance_matrix(anchors: AnchorArray) -> PairwiseDistanceMatrix:
    """Exact matrix from known positions."""
    pos = anchors.positions
    d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    return PairwiseDistanceMatrix(tuple(anchors.ids), d)


def _signed_area(xy: np.ndarray) -> float:
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _place_remaining(placed: list[np.ndarray], ranges: np.ndarray) -> tuple[np.ndarray, float]:
    """Linearised trilateration followed by one Gauss-Newton step; returns (xy, rms residual)."""
    P = np.array(placed)
    p0, r0 = P[0], ranges[0]
    A = 2.0 * (P[1:] - p0)
    b = r0**2 - ranges[1:] ** 2 + np.sum(P[1:] ** 2, axis=1) - np.sum(p0**2)
    q, *_ = np.linalg.lstsq(A, b, rcond=None)

    diff = q - P
    dist = np.linalg.norm(diff, axis=1)
    dist = np.where(dist == 0, 1e-12, dist)
    J = diff / dist[:, None]
    res = dist - ranges
    step, *_ = np.linalg.lstsq(J, -res, rcond=None)
    q = q + step
    res = np.linalg.norm(q - P, axis=1) - ranges
    return q, float(np.sqrt(np.mean(res**2)))


def _solve_planar(d: np.ndarray, idx: list[int], tol: float, flip: bool) -> np.ndarray:
    o0, o1, o2 = idx[:3]
    d01, d02, d12 = d[o0, o1], d[o0, o2], d[o1, o2]
    violation = max(d01 - d02 - d12, d02 - d01 - d12, d12 - d01 - d02)
    if violation > tol:
        raise InconsistentDistances(
            f"first triangle violates the triangle inequality by {violation:.4g} m (tolerance {tol:.4g} m)"
        )
    x2 = (d01**2 + d02**2 - d12**2) / (2.0 * d01)
    y2 = float(np.sqrt(max(d02**2 - x2**2, 0.0)))
    if flip:
        y2 = -y2
    xy = {o0: np.array([0.0, 0.0]), o1: np.array([d01, 0.0]), o2: np.array([x2, y2])}
    for k in idx[3:]:
        placed = list(xy.keys())
        q, rms = _place_remaining([xy[j] for j in placed], np.array([d[k, j] for j in placed]))
        if rms > RESIDUAL_GATE:
            raise AmbiguousPlacement(f"anchor index {k} placed with rms residual {rms:.3f} m")
        xy[k] = q
    return np.array([xy[k] for k in idx])


def solve_anchor_positions(
    d: PairwiseDistanceMatrix,
    frame: CanonicalFrame,
    planar_z: float = 0.0,
    sigma: float | None = None,
) -> AnchorArray:
    """Reconstruct anchors in the canonical frame; output keeps ``frame.ordering``.

    ``sigma`` is the single-shot ranging std used for the triangle-inequality
    slack; when omitted it is estimated from ``d.sample_std``.
    """
    if d.n < 3:
        raise ValidationError("need at least 3 anchors")
    if len(frame.ordering) != d.n or set(frame.ordering) != set(d.ids):
        raise ValidationError("frame ordering must be a permutation of the matrix ids")
    idx = [d.ids.index(a) for a in frame.ordering]
    if sigma is None:
        sigma = 0.0
        if d.sample_std is not None and d.n > 1:
            off = d.sample_std[~np.eye(d.n, dtype=bool)]
            sigma = float(np.sqrt(np.mean(off**2)))
    tol = TRIANGLE_SLACK_SIGMAS * sigma + 1e-9

    xy = _solve_planar(d.d, idx, tol, flip=False)
    if d.n > 3 and _signed_area(xy) <= 0:
        xy = _solve_planar(d.d, idx, tol, flip=True)
        if _signed_area(xy) <= 0:
            raise AmbiguousPlacement("no reflection matches the counter-clockwise ordering")
    pos = np.column_stack([xy, np.full(len(xy), float(planar_z))])
    return AnchorArray.from_positions(pos, ids=frame.ordering)


def canonicalize_positions(positions: np.ndarray, planar_z: float = 0.0) -> np.ndarray:
    """Rigidly move xy so row 0 is the origin, row 1 on +x, row 2 at y >= 0.

    Pure geometry on known coordinates; used as the ground truth that a
    reconstruction is compared against.
    """
    xy = np.asarray(positions, dtype=float)[:, :2] - np.asarray(positions, dtype=float)[0, :2]
    ang = np.arctan2(xy[1, 1], xy[1, 0])
    c, s = np.cos(-ang), np.sin(-ang)
    xy = xy @ np.array([[c, s], [-s, c]])
    if xy[2, 1] < 0:
        xy[:, 1] = -xy[:, 1]
    return np.column_stack([xy, np.full(len(xy), float(planar_z))])


def calibration_latency(n_anchors: int, cfg: CalibrationConfig) -> float:
    if n_anchors < 2:
        raise ValidationError("need at least 2 anchors")
    rangings = n_anchors * (n_anchors - 1) * cfg.samples_per_pair
    return cfg.fixed_overhead + cfg.per_ranging_time * rangings


@dataclass(frozen=True)
class CalibrationTrial:
    index: int
    seed: int
    anchor_errors: np.ndarray  # per anchor, in frame order
    estimate: AnchorArray | None = None

    @property
    def max_error(self) -> float:
        return float(np.max(self.anchor_errors))

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.anchor_errors))


def run_calibration_trial(
    true_anchors: AnchorArray,
    noise: RangingNoiseModel,
    cfg: CalibrationConfig,
    seed: int,
    frame: CanonicalFrame | None = None,
    planar_z: float = 0.0,
    index: int = 0,
) -> CalibrationTrial:
    frame = frame or CanonicalFrame.counter_clockwise(true_anchors)
    rng = make_rng(seed)
    matrix = collect_pairwise(true_anchors, noise, cfg, rng)
    est = solve_anchor_positions(matrix, frame, planar_z, sigma=noise.sigma)
    truth = canonicalize_positions(
        np.array([true_anchors.position(a).as_array() for a in frame.ordering]), planar_z
    )
    err = np.linalg.norm(est.positions[:, :2] - truth[:, :2], axis=1)
    return CalibrationTrial(index, seed, err, est)


def default_threads() -> int | None:
    val = os.environ.get("UWB_LAB_THREADS")
    if not val:
        return None
    n = int(val)
    if n < 1:
        raise ValidationError("UWB_LAB_THREADS must be >= 1")
    return n


def run_calibration_trials(
    true_anchors: AnchorArray,
    noise: RangingNoiseModel,
    cfg: CalibrationConfig,
    trials: int,
    master_seed: int,
    frame: CanonicalFrame | None = None,
    planar_z: float = 0.0,
    threads: int | None = None,
) -> list[CalibrationTrial]:
    """Independent trials with per-trial seeds split from ``master_seed``.

    Results do not depend on ``threads``.
    """
    frame = frame or CanonicalFrame.counter_clockwise(true_anchors)

    def one(i: int) -> CalibrationTrial:
        return run_calibration_trial(
            true_anchors, noise, cfg, trial_seed(master_seed, i), frame, planar_z, index=i
        )

    threads = threads if threads is not None else default_threads()
    if threads == 1 or trials < 2:
        return [one(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(trials)))
