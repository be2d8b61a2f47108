"""Shared Hypothesis strategies for uwb_lab tests."""

from __future__ import annotations

import numpy as np
from hypothesis import assume, strategies as st

from uwb_lab.geometry import AnchorArray, convex_hull_2d

coords = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False, allow_infinity=False)
heights = st.floats(min_value=0.0, max_value=3.0, allow_nan=False, allow_infinity=False)
seeds = st.integers(min_value=0, max_value=2**32 - 1)

points_2d = st.lists(st.tuples(coords, coords), min_size=3, max_size=25)


@st.composite
def convex_anchor_sets(draw, min_n=3, max_n=8, spread=8.0, z=0.0):
    """Anchors on the boundary of their own convex envelope, listed counter-clockwise.

    Points come from the hull of a random cloud, then edges shorter than
    0.5 m and near-flat corners are rejected so placement is well conditioned.
    """
    seed = draw(seeds)
    n = draw(st.integers(min_value=max(min_n, 3), max_value=max_n))
    rng = np.random.default_rng(seed)
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    rad = rng.uniform(0.5 * spread, spread, n)
    xy = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    hull = np.array(convex_hull_2d(xy).vertices)
    edges = np.linalg.norm(np.roll(hull, -1, axis=0) - hull, axis=1)
    assume(len(hull) >= min_n and edges.min() > 0.5)
    return AnchorArray.from_positions(np.column_stack([hull, np.full(len(hull), z)]))


def room_anchors(side: float = 8.0, height: float = 1.8) -> AnchorArray:
    h = side / 2
    return AnchorArray.from_positions([(-h, -h, height), (h, -h, height), (h, h, height), (-h, h, height)])


def anchors_3d(rng: np.random.Generator, n: int = 6) -> AnchorArray:
    """Random non-coplanar anchors (heights spread over 0-3 m)."""
    xy = rng.uniform(-5, 5, (n, 2))
    z = rng.uniform(0.0, 3.0, n)
    z[0], z[1] = 0.0, 3.0
    return AnchorArray.from_positions(np.column_stack([xy, z]))
