"""CSV export and ingestion for trajectories, range streams and error records.

Schemas (header row required, UTF-8):

    trajectory: t,source,tag_id,x,y,z        source in {truth, estimate, waypoint}
    ranges:     t,tag_id,anchor_id,range
    records:    t,err_x,err_y,err_z,err_xy,dist_to_centroid,height,speed,in_envelope

Floats are written with 9 significant digits.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .characterize import CdfCurve, ErrorRecord, Trajectory
from .errors import SchemaError, ValidationError
from .flightsim import TrajectoryLog
from .locate import RangeSet

CSV_SCHEMA_VERSION = 1
TRAJECTORY_HEADER = ["t", "source", "tag_id", "x", "y", "z"]
RANGES_HEADER = ["t", "tag_id", "anchor_id", "range"]
RECORDS_HEADER = [
    "t", "err_x", "err_y", "err_z", "err_xy", "dist_to_centroid", "height", "speed", "in_envelope",
]
SOURCES = ("truth", "estimate", "waypoint")


def fmt(v: float) -> str:
    return f"{v:.9g}"


def _writer(path):
    f = open(path, "w", encoding="utf-8", newline="")
    return f, csv.writer(f, lineterminator="\n")


def write_trajectory_csv(log: TrajectoryLog, path) -> None:
    """Rows ordered by tick, then truth / estimate / waypoint; failed fixes are omitted."""
    f, w = _writer(path)
    with f:
        w.writerow(TRAJECTORY_HEADER)
        for k in range(len(log)):
            t = fmt(log.t[k])
            for source, arr in (("truth", log.truth), ("estimate", log.estimate), ("waypoint", log.waypoint)):
                p = arr[k]
                if np.isnan(p).any():
                    continue
                w.writerow([t, source, log.tag_id, fmt(p[0]), fmt(p[1]), fmt(p[2])])


def write_ranges_csv(log: TrajectoryLog, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(RANGES_HEADER)
        if log.ranges is None:
            return
        for k in range(len(log)):
            t = fmt(log.t[k])
            for aid, r in zip(log.anchor_ids, log.ranges[k]):
                w.writerow([t, log.tag_id, aid, fmt(r)])


def write_records_csv(records: Iterable[ErrorRecord], path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(RECORDS_HEADER)
        for r in records:
            w.writerow([
                fmt(r.t), fmt(r.err_x), fmt(r.err_y), fmt(r.err_z), fmt(r.err_xy),
                fmt(r.dist_to_centroid), fmt(r.height), fmt(r.speed), int(r.in_envelope),
            ])


def write_cdf_csv(curve: CdfCurve, path) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["error", "cumulative_probability"])
        for e, p in curve.points:
            w.writerow([fmt(e), fmt(p)])


def _read_rows(path, header: Sequence[str]):
    path = Path(path)
    try:
        f = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise SchemaError(f"cannot open {path}: {exc.strerror}") from None
    with f:
        reader = csv.reader(f)
        try:
            first = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name}: missing header row", row=1) from None
        except UnicodeDecodeError:
            raise SchemaError(f"{path.name}: not valid UTF-8", row=1) from None
        cols = [c.strip() for c in first]
        if cols != list(header):
            raise SchemaError(f"{path.name}: header must be {','.join(header)}, got {','.join(cols)}", row=1)
        try:
            for i, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise SchemaError(f"{path.name}: expected {len(header)} columns, got {len(row)}", row=i)
                yield i, dict(zip(header, (c.strip() for c in row)))
        except UnicodeDecodeError:
            raise SchemaError(f"{path.name}: not valid UTF-8") from None


def _float(row: dict, col: str, i: int, path) -> float:
    try:
        v = float(row[col])
    except ValueError:
        raise SchemaError(f"{Path(path).name}: {col} is not a number: {row[col]!r}", row=i, column=col) from None
    if not math.isfinite(v):
        raise SchemaError(f"{Path(path).name}: {col} must be finite", row=i, column=col)
    return v


def _warn_unsorted(ts: list[float], what: str) -> None:
    if any(b < a for a, b in zip(ts, ts[1:])):
        warnings.warn(f"{what}: rows out of time order; re-sorted", stacklevel=3)


def read_trajectory_csv(path) -> dict[str, dict[str, Trajectory]]:
    """Trajectories keyed by tag_id then source."""
    groups: dict[tuple[str, str], list] = defaultdict(list)
    for i, row in _read_rows(path, TRAJECTORY_HEADER):
        t = _float(row, "t", i, path)
        if t < 0:
            raise SchemaError(f"{Path(path).name}: t must be >= 0", row=i, column="t")
        if row["source"] not in SOURCES:
            raise SchemaError(f"{Path(path).name}: source must be one of {SOURCES}", row=i, column="source")
        if not row["tag_id"]:
            raise SchemaError(f"{Path(path).name}: empty tag_id", row=i, column="tag_id")
        xyz = [_float(row, c, i, path) for c in ("x", "y", "z")]
        groups[(row["tag_id"], row["source"])].append((t, xyz))
    out: dict[str, dict[str, Trajectory]] = defaultdict(dict)
    for (tag, source), rows in groups.items():
        _warn_unsorted([r[0] for r in rows], f"{Path(path).name} [{tag}/{source}]")
        out[tag][source] = Trajectory(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
    return dict(out)


def read_ranges_csv(path) -> list[RangeSet]:
    """Range stream grouped into one RangeSet per (tag_id, t), sorted by time."""
    groups: dict[tuple[str, float], list] = defaultdict(list)
    order: list[float] = []
    for i, row in _read_rows(path, RANGES_HEADER):
        t = _float(row, "t", i, path)
        if t < 0:
            raise SchemaError(f"{Path(path).name}: t must be >= 0", row=i, column="t")
        r = _float(row, "range", i, path)
        if r <= 0:
            raise SchemaError(f"{Path(path).name}: range must be > 0, got {r}", row=i, column="range")
        key = (row["tag_id"], t)
        if any(a == row["anchor_id"] for a, _ in groups[key]):
            raise SchemaError(f"{Path(path).name}: duplicate anchor {row['anchor_id']!r} at t={t}", row=i)
        groups[key].append((row["anchor_id"], r))
        order.append(t)
    _warn_unsorted(order, Path(path).name)
    keys = sorted(groups, key=lambda k: (k[1], k[0]))
    return [RangeSet(tag, t, tuple(groups[(tag, t)])) for tag, t in keys]


def ingest_dataset(trajectory_csv, ranges_csv=None):
    """Load a recorded or exported dataset: (trajectories by tag/source, range sets)."""
    trajectories = read_trajectory_csv(trajectory_csv)
    ranges = read_ranges_csv(ranges_csv) if ranges_csv is not None else []
    return trajectories, ranges


def read_records_csv(path) -> list[ErrorRecord]:
    out = []
    for i, row in _read_rows(path, RECORDS_HEADER):
        vals = {c: _float(row, c, i, path) for c in RECORDS_HEADER if c != "in_envelope"}
        if row["in_envelope"] not in ("0", "1", "true", "false", "True", "False"):
            raise SchemaError(f"{Path(path).name}: in_envelope must be 0/1", row=i, column="in_envelope")
        try:
            # err_xy is re-derived so that 9-digit rounding cannot break the record invariant
            out.append(ErrorRecord(
                t=vals["t"], err_x=vals["err_x"], err_y=vals["err_y"], err_z=vals["err_z"],
                err_xy=math.hypot(vals["err_x"], vals["err_y"]),
                dist_to_centroid=vals["dist_to_centroid"], height=vals["height"],
                speed=vals["speed"], in_envelope=row["in_envelope"] in ("1", "true", "True"),
            ))
        except ValidationError as exc:
            raise SchemaError(f"{Path(path).name}: {exc}", row=i) from None
        if abs(out[-1].err_xy - vals["err_xy"]) > 1e-6 * max(1.0, vals["err_xy"]):
            raise SchemaError(f"{Path(path).name}: err_xy inconsistent with err_x, err_y", row=i, column="err_xy")
    return out
