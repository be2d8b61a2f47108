import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwb_lab.errors import DegenerateGeometry, InsufficientRanges, NoConvergence, ValidationError
from uwb_lab.geometry import AnchorArray, Point3
from uwb_lab.locate import (
    RangeSet,
    SolveMode,
    drop_anchor_robustness,
    exact_ranges,
    fuse_height,
    levenberg_marquardt,
    linearized_position,
    multilaterate,
    residuals_and_jacobian,
)

from strategies import anchors_3d, room_anchors, seeds

ROOM = room_anchors()


def fd_jacobian(x, anchors, ranges, fixed_z=None, h=1e-7):
    cols = []
    for e in np.eye(len(x)):
        rp, _ = residuals_and_jacobian(x + h * e, anchors, ranges, fixed_z)
        rm, _ = residuals_and_jacobian(x - h * e, anchors, ranges, fixed_z)
        cols.append((rp - rm) / (2 * h))
    return np.column_stack(cols)


class TestSolveMode:
    def test_parse_aliases(self):
        assert SolveMode.parse("2d") is SolveMode.FUSED_2D
        assert SolveMode.parse("2D-fused-height") is SolveMode.FUSED_2D
        assert SolveMode.parse("3D") is SolveMode.FULL_3D
        with pytest.raises(ValidationError):
            SolveMode.parse("4d")

    def test_min_ranges(self):
        assert SolveMode.FUSED_2D.min_ranges == 3
        assert SolveMode.FULL_3D.min_ranges == 4


class TestRangeSet:
    def test_rejects_non_positive_and_duplicates(self):
        with pytest.raises(ValidationError):
            RangeSet("t", 0.0, (("a0", 0.0),))
        with pytest.raises(ValidationError):
            RangeSet("t", 0.0, (("a0", 1.0), ("a0", 2.0)))

    def test_without(self):
        rs = exact_ranges(ROOM, Point3(0, 0, 1))
        assert rs.without("a1").anchor_ids == ["a0", "a2", "a3"]


class TestJacobian:
    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_matches_central_differences_3d(self, seed):
        rng = np.random.default_rng(seed)
        anchors = rng.uniform(-5, 5, (5, 3))
        x = rng.uniform(-5, 5, 3)
        ranges = rng.uniform(0.5, 8, 5)
        _, J = residuals_and_jacobian(x, anchors, ranges)
        np.testing.assert_allclose(J, fd_jacobian(x, anchors, ranges), rtol=1e-5, atol=1e-7)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_matches_central_differences_fixed_height(self, seed):
        rng = np.random.default_rng(seed)
        anchors = rng.uniform(-5, 5, (4, 3))
        x = rng.uniform(-5, 5, 2)
        ranges = rng.uniform(0.5, 8, 4)
        _, J = residuals_and_jacobian(x, anchors, ranges, fixed_z=1.2)
        assert J.shape == (4, 2)
        np.testing.assert_allclose(J, fd_jacobian(x, anchors, ranges, 1.2), rtol=1e-5, atol=1e-7)


class TestLevenbergMarquardt:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_objective_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        anchors = ROOM.positions
        ranges = rng.uniform(1, 9, 4)
        res = levenberg_marquardt(lambda v: residuals_and_jacobian(v, anchors, ranges), rng.uniform(-3, 3, 3))
        assert all(b <= a for a, b in zip(res.costs, res.costs[1:]))
        assert res.iterations <= 50

    def test_converges_on_quadratic(self):
        target = np.array([1.0, -2.0])
        res = levenberg_marquardt(lambda v: (v - target, np.eye(2)), np.zeros(2))
        assert res.converged
        np.testing.assert_allclose(res.x, target, atol=1e-6)


class TestMultilaterate:
    @settings(max_examples=100, deadline=None)
    @given(st.floats(-6, 6), st.floats(-6, 6), st.floats(0.1, 3.0))
    def test_exact_2d_recovery(self, x, y, z):
        p = Point3(x, y, z)
        fix = multilaterate(exact_ranges(ROOM, p), ROOM, SolveMode.FUSED_2D, fixed_z=z)
        assert fix.point.distance_to(p) < 1e-6
        assert fix.rms_residual < 1e-6
        assert fix.in_envelope == ROOM.envelope().contains_xy(p)

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_exact_3d_recovery(self, seed):
        rng = np.random.default_rng(seed)
        anchors = anchors_3d(rng)
        p = Point3(*rng.uniform(-4, 4, 2), rng.uniform(0.2, 2.8))
        fix = multilaterate(exact_ranges(anchors, p), anchors, SolveMode.FULL_3D)
        assert fix.point.distance_to(p) < 1e-6

    @settings(max_examples=100, deadline=None)
    @given(seeds)
    def test_exact_2d_recovery_arbitrary_layout(self, seed):
        # includes tags far outside the envelope, where the centroid start
        # alone can end in the mirror minimum
        rng = np.random.default_rng(seed)
        k = int(rng.integers(3, 7))
        xy = rng.uniform(-8, 8, (k, 2))
        try:
            anchors = AnchorArray.from_positions(np.column_stack([xy, rng.uniform(0, 3, k)]))
        except DegenerateGeometry:
            return
        p = Point3(*rng.uniform(-10, 10, 2), rng.uniform(0, 3))
        fix = multilaterate(exact_ranges(anchors, p), anchors, SolveMode.FUSED_2D, fixed_z=p.z)
        assert fix.point.distance_to(p) < 1e-6

    def test_linearized_position_exact(self):
        rng = np.random.default_rng(3)
        anchors = anchors_3d(rng)
        p = np.array([0.3, -1.2, 1.1])
        d = np.linalg.norm(anchors.positions - p, axis=1)
        np.testing.assert_allclose(linearized_position(anchors.positions, d), p, atol=1e-9)
        np.testing.assert_allclose(linearized_position(anchors.positions, d, fixed_z=1.1), p[:2], atol=1e-9)
        flat = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
        assert linearized_position(flat, np.ones(3), fixed_z=0.0) is None

    def test_noisy_centroid_consistency(self):
        rng = np.random.default_rng(0)
        from uwb_lab.ranging import RangingNoiseModel, sample_range

        p = Point3(0.0, 0.0, 1.0)
        true_d = np.linalg.norm(ROOM.positions - p.as_array(), axis=1)
        errs = []
        for _ in range(1000):
            d = sample_range(true_d, RangingNoiseModel(), rng)
            fix = multilaterate(RangeSet("t", 0, tuple(zip(ROOM.ids, d))), ROOM, fixed_z=1.0)
            errs.append(fix.point.distance_to(p))
        assert np.mean(np.array(errs) <= 0.10) >= 0.5

    def test_insufficient_and_unknown(self):
        rs = exact_ranges(ROOM, Point3(0, 0, 1))
        with pytest.raises(InsufficientRanges):
            multilaterate(rs.without("a0").without("a1"), ROOM, SolveMode.FUSED_2D, fixed_z=1.0)
        with pytest.raises(InsufficientRanges):
            multilaterate(rs.without("a0"), ROOM, SolveMode.FULL_3D)
        with pytest.raises(ValidationError):
            multilaterate(RangeSet("t", 0, (("zz", 1.0), ("a0", 1.0), ("a1", 1.0))), ROOM, fixed_z=1.0)
        with pytest.raises(ValidationError):
            multilaterate(rs, ROOM, SolveMode.FUSED_2D)

    def test_coplanar_anchors_rejected_in_3d(self):
        with pytest.raises(DegenerateGeometry):
            multilaterate(exact_ranges(ROOM, Point3(0, 0, 1)), ROOM, SolveMode.FULL_3D)

    def test_fuse_height(self):
        fix = multilaterate(exact_ranges(ROOM, Point3(1, 1, 1)), ROOM, fixed_z=1.0)
        fused = fuse_height(fix, 1.4)
        assert (fused.point.x, fused.point.y, fused.point.z) == (fix.point.x, fix.point.y, 1.4)

    def test_drop_anchor_robustness(self):
        p = Point3(0.5, -0.3, 1.0)
        fixes = drop_anchor_robustness(exact_ranges(ROOM, p), ROOM, SolveMode.FUSED_2D, fixed_z=1.0)
        assert len(fixes) == 4
        for f in fixes:
            assert f.point.distance_to(p) < 1e-6

    def test_inconsistent_ranges_still_return_or_raise_cleanly(self):
        rs = RangeSet("t", 0.0, tuple((a, 0.1) for a in ROOM.ids))
        try:
            fix = multilaterate(rs, ROOM, fixed_z=1.0)
        except NoConvergence:
            return
        assert fix.rms_residual > 1.0
