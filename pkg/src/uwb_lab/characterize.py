"""Accuracy characterisation: error records, binning, CDFs, boxplot stats, trends.

Quartiles use linear interpolation between order statistics. Whiskers reach
the most extreme sample within 1.5 IQR of the box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyInput, NoOverlap, TooFewValues, ValidationError
from .geometry import AnchorArray, centroid

WHISKER_IQR = 1.5
QUARTILE_METHOD = "linear"
MIN_MATCHES = 10
SHIFT_GRID = 0.01  # s

BIN_KEYS = ("dist_to_centroid", "height", "speed")

# Legend bins of the corner-anchor CDF figure.
DISTANCE_EDGES = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
SPEED_EDGES = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    xyz: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        xyz = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        if len(t) != len(xyz):
            raise ValidationError("trajectory t and xyz lengths differ")
        order = np.argsort(t, kind="stable")
        object.__setattr__(self, "t", t[order])
        object.__setattr__(self, "xyz", xyz[order])

    def __len__(self) -> int:
        return len(self.t)

    def rate(self) -> float:
        if len(self.t) < 2:
            raise NoOverlap("need at least 2 samples to infer a rate")
        dt = np.median(np.diff(self.t))
        if dt <= 0:
            raise ValidationError("trajectory timestamps are not increasing")
        return 1.0 / dt


@dataclass(frozen=True)
class ErrorRecord:
    t: float
    err_x: float
    err_y: float
    err_z: float
    err_xy: float
    dist_to_centroid: float
    height: float
    speed: float
    in_envelope: bool

    def __post_init__(self):
        if abs(self.err_xy - math.hypot(self.err_x, self.err_y)) > 1e-12:
            raise ValidationError("err_xy must be the planar norm of (err_x, err_y)")
        if self.speed < 0:
            raise ValidationError("speed must be >= 0")


@dataclass(frozen=True)
class BoxStats:
    q1: float
    median: float
    q3: float
    whisker_lo: float
    whisker_hi: float
    outliers: tuple[float, ...]
    mean: float


@dataclass(frozen=True)
class CdfCurve:
    points: tuple[tuple[float, float], ...]

    @property
    def errors(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def _nearest(sorted_t: np.ndarray, query: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(sorted_t, query), 1, len(sorted_t) - 1)
    left = sorted_t[idx - 1]
    right = sorted_t[idx]
    return np.where(np.abs(query - left) <= np.abs(right - query), idx - 1, idx)


def truth_speed(truth: Trajectory) -> np.ndarray:
    if len(truth) < 2:
        return np.zeros(len(truth))
    vel = np.gradient(truth.xyz, truth.t, axis=0)
    return np.linalg.norm(vel, axis=1)


def _match(truth: Trajectory, estimate: Trajectory, time_shift: float, rate: float | None):
    ok = ~np.isnan(estimate.xyz).any(axis=1)
    est_t = estimate.t[ok] - time_shift
    est_xyz = estimate.xyz[ok]
    if len(truth) == 0 or len(est_t) == 0:
        raise NoOverlap("empty trajectory")
    rate = rate or estimate.rate()
    tol = 0.5 / rate
    if len(truth) == 1:
        idx = np.zeros(len(est_t), dtype=int)
    else:
        idx = _nearest(truth.t, est_t)
    keep = np.abs(truth.t[idx] - est_t) <= tol + 1e-12
    if keep.sum() < MIN_MATCHES:
        raise NoOverlap(f"only {int(keep.sum())} matched samples (need {MIN_MATCHES})")
    return idx[keep], est_t[keep], est_xyz[keep]


def compute_errors(
    truth: Trajectory,
    estimate: Trajectory,
    anchors: AnchorArray,
    time_shift: float = 0.0,
    *,
    rate: float | None = None,
    speed: np.ndarray | None = None,
) -> list[ErrorRecord]:
    """Match each estimate (at ``t - time_shift``) to the nearest truth sample.

    Pairs further apart than half an estimate period are dropped. ``rate``
    defaults to the estimate's median sample rate. ``speed`` overrides the
    finite-difference truth speed, one value per truth sample.
    """
    idx, est_t, est_xyz = _match(truth, estimate, time_shift, rate)
    spd = truth_speed(truth) if speed is None else np.asarray(speed, dtype=float)

    c = centroid(anchors).as_array()
    env = anchors.envelope()
    tru = truth.xyz[idx]
    err = est_xyz - tru
    err_xy = np.hypot(err[:, 0], err[:, 1])
    dist = np.linalg.norm(tru - c, axis=1)
    return [
        ErrorRecord(
            t=float(est_t[k]),
            err_x=float(err[k, 0]),
            err_y=float(err[k, 1]),
            err_z=float(err[k, 2]),
            err_xy=float(err_xy[k]),
            dist_to_centroid=float(dist[k]),
            height=float(tru[k, 2]),
            speed=float(spd[idx[k]]),
            in_envelope=env.contains_xy(tru[k]),
        )
        for k in range(len(idx))
    ]


class ShiftEstimate(NamedTuple):
    shift: float
    confident: bool


def auto_time_shift(truth: Trajectory, estimate: Trajectory, search_window: float) -> ShiftEstimate:
    """Grid search (10 ms) for the estimate delay minimising median planar error.

    Ties between neighbouring grid shifts resolve to the middle of the run.

    When the median does not vary over the grid the delay is unidentifiable;
    0 is returned with ``confident=False``.
    """
    if search_window <= 0:
        raise ValidationError("search_window must be > 0")
    steps = int(round(search_window / SHIFT_GRID))
    shifts = np.arange(-steps, steps + 1) * SHIFT_GRID
    rate = estimate.rate()
    medians = np.full(len(shifts), np.inf)
    for i, s in enumerate(shifts):
        try:
            idx, _, est_xyz = _match(truth, estimate, float(s), rate)
        except NoOverlap:
            continue
        diff = est_xyz[:, :2] - truth.xyz[idx, :2]
        medians[i] = np.median(np.hypot(diff[:, 0], diff[:, 1]))
    finite = np.isfinite(medians)
    if not finite.any():
        raise NoOverlap("no shift in the search window produced an overlap")
    spread = medians[finite].max() - medians[finite].min()
    if spread <= 1e-9 * max(1.0, medians[finite].max()):
        return ShiftEstimate(0.0, False)
    # Shifts finer than the sample period match the same pairs and tie; take
    # the middle of the tied run around the minimum.
    best = int(np.argmin(medians))
    tied = np.abs(medians - medians[best]) <= 1e-12 * max(1.0, medians[best])
    lo = hi = best
    while lo > 0 and tied[lo - 1]:
        lo -= 1
    while hi < len(shifts) - 1 and tied[hi + 1]:
        hi += 1
    return ShiftEstimate(float(round(shifts[(lo + hi) // 2], 6)), True)


def bin_records(
    records: Sequence[ErrorRecord], key: str, edges: Sequence[float]
) -> tuple[list[tuple[str, list[ErrorRecord]]], int]:
    """Half-open bins [e_i, e_i+1); returns (bins, dropped count)."""
    if key not in BIN_KEYS:
        raise ValidationError(f"bin key must be one of {BIN_KEYS}, got {key!r}")
    edges = [float(e) for e in edges]
    if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
        raise ValidationError("edges must be strictly increasing with at least 2 values")
    bins = [(f"{_fmt(a)}-{_fmt(b)}", []) for a, b in zip(edges, edges[1:])]
    dropped = 0
    for rec in records:
        v = getattr(rec, key)
        i = int(np.searchsorted(edges, v, side="right")) - 1
        if 0 <= i < len(bins):
            bins[i][1].append(rec)
        else:
            dropped += 1
    return bins, dropped


def _fmt(x: float) -> str:
    return f"{x:g}"


def cdf(values) -> CdfCurve:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("cdf needs at least one value")
    uniq, counts = np.unique(v, return_counts=True)
    prob = np.cumsum(counts) / v.size
    prob[-1] = 1.0
    return CdfCurve(tuple(zip(uniq.tolist(), prob.tolist())))


def box_stats(values) -> BoxStats:
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size < 4:
        raise TooFewValues(f"box_stats needs >= 4 values, got {v.size}")
    q1, med, q3 = np.percentile(v, [25, 50, 75], method=QUARTILE_METHOD)
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - WHISKER_IQR * iqr, q3 + WHISKER_IQR * iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    whisker_lo = min(float(inside.min()), float(q1)) if inside.size else float(q1)
    whisker_hi = max(float(inside.max()), float(q3)) if inside.size else float(q3)
    outliers = v[(v < whisker_lo) | (v > whisker_hi)]
    return BoxStats(
        q1=float(q1),
        median=float(med),
        q3=float(q3),
        whisker_lo=whisker_lo,
        whisker_hi=whisker_hi,
        outliers=tuple(outliers.tolist()),
        mean=float(v.mean()),
    )


@dataclass
class TrendReport:
    labels: list[str]
    counts: list[int]
    medians: list[float]
    monotone: bool
    in_median: float | None = None
    out_median: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def in_out_ratio(self) -> float | None:
        if self.in_median is None or self.out_median is None or self.out_median == 0:
            return None
        return self.in_median / self.out_median

    def to_dict(self) -> dict:
        return {
            "bins": [
                {"label": lbl, "count": n, "median_err_xy": m}
                for lbl, n, m in zip(self.labels, self.counts, self.medians)
            ],
            "monotone_non_decreasing": self.monotone,
            "in_envelope_median": self.in_median,
            "out_envelope_median": self.out_median,
            "in_out_ratio": self.in_out_ratio,
            "metadata": self.metadata,
        }


def trend_report(binned: Sequence[tuple[str, Sequence[ErrorRecord]]]) -> TrendReport:
    """Per-bin median planar error, monotonicity over the bin order, in/out split.

    Empty bins are reported with a NaN median and skipped in the
    monotonicity check.
    """
    if len(binned) < 2:
        raise ValidationError("trend_report needs >= 2 bins")
    labels, counts, medians = [], [], []
    for label, recs in binned:
        labels.append(label)
        counts.append(len(recs))
        medians.append(float(np.median([r.err_xy for r in recs])) if recs else float("nan"))
    present = [m for m in medians if not math.isnan(m)]
    monotone = all(b >= a for a, b in zip(present, present[1:]))

    all_recs = [r for _, recs in binned for r in recs]
    ins = [r.err_xy for r in all_recs if r.in_envelope]
    outs = [r.err_xy for r in all_recs if not r.in_envelope]
    return TrendReport(
        labels=labels,
        counts=counts,
        medians=medians,
        monotone=monotone,
        in_median=float(np.median(ins)) if ins else None,
        out_median=float(np.median(outs)) if outs else None,
        metadata={"whisker_convention": f"{WHISKER_IQR}*IQR", "quartile_method": QUARTILE_METHOD},
    )
