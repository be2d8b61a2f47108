import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uwb_lab.autocalib import (
    FIXED_OVERHEAD,
    PER_RANGING_TIME,
    CalibrationConfig,
    CanonicalFrame,
    PairwiseDistanceMatrix,
    calibration_latency,
    canonicalize_positions,
    collect_pairwise,
    default_threads,
    distance_matrix,
    fit_latency,
    run_calibration_trials,
    solve_anchor_positions,
)
from uwb_lab.errors import AmbiguousPlacement, InconsistentDistances, ValidationError
from uwb_lab.geometry import AnchorArray
from uwb_lab.ranging import RangingNoiseModel
from uwb_lab.seeding import splitmix64, trial_seed

from strategies import convex_anchor_sets

RECT = AnchorArray.from_positions([(0, 0, 0), (4, 0, 0), (4, 3, 0), (0, 3, 0)])
SQUARE4 = AnchorArray.from_positions([(0, 0, 0), (4, 0, 0), (4, 4, 0), (0, 4, 0)])


def rigid_motion(anchors, angle, shift, reflect):
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    xy = anchors.positions[:, :2] @ R.T + shift
    if reflect:
        xy[:, 1] = -xy[:, 1]
    return xy


class TestMatrix:
    def test_validation(self):
        with pytest.raises(ValidationError):
            PairwiseDistanceMatrix(("a", "b"), np.array([[0, 1], [2, 0.0]]))
        with pytest.raises(ValidationError):
            PairwiseDistanceMatrix(("a", "b"), np.array([[1, 1], [1, 0.0]]))
        with pytest.raises(ValidationError):
            PairwiseDistanceMatrix(("a", "b"), np.array([[0, 0], [0, 0.0]]))

    def test_collect_zero_noise_is_exact(self):
        d = collect_pairwise(RECT, RangingNoiseModel(sigma=0.0, clip=0.0), CalibrationConfig(5), np.random.default_rng(0))
        np.testing.assert_allclose(d.d, distance_matrix(RECT).d, atol=1e-12)
        assert d.between("a0", "a2") == pytest.approx(5.0)

    def test_collect_averages_both_directions(self):
        noise = RangingNoiseModel()
        a = collect_pairwise(RECT, noise, CalibrationConfig(50), np.random.default_rng(1))
        assert np.allclose(a.d, a.d.T)
        # 100 samples per entry: standard error ~ 4 mm
        assert np.max(np.abs(a.d - distance_matrix(RECT).d)) < 0.03


class TestSolve:
    def test_rectangle_exact(self):
        est = solve_anchor_positions(distance_matrix(RECT), CanonicalFrame(("a0", "a1", "a2", "a3")), planar_z=0.5)
        np.testing.assert_allclose(est.positions, [[0, 0, 0.5], [4, 0, 0.5], [4, 3, 0.5], [0, 3, 0.5]], atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(convex_anchor_sets(min_n=3, max_n=8))
    def test_zero_noise_matches_canonicalised_truth(self, anchors):
        frame = CanonicalFrame.counter_clockwise(anchors)
        est = solve_anchor_positions(distance_matrix(anchors), frame)
        truth = canonicalize_positions(np.array([anchors.position(a).as_array() for a in frame.ordering]))
        np.testing.assert_allclose(est.positions, truth, atol=1e-9)
        # canonical-frame contract
        p = est.positions
        assert np.all(p[0, :2] == 0) and abs(p[1, 1]) <= 1e-9 and p[1, 0] > 0 and p[2, 1] > 0
        np.testing.assert_allclose(distance_matrix(est).d, distance_matrix(anchors).d[np.ix_(
            [anchors.index(a) for a in frame.ordering], [anchors.index(a) for a in frame.ordering])], atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(convex_anchor_sets(min_n=4, max_n=7), st.floats(0, 2 * np.pi), st.floats(-50, 50), st.booleans())
    def test_rigid_motion_invariance(self, anchors, angle, dx, reflect):
        moved_xy = rigid_motion(anchors, angle, np.array([dx, -dx]), reflect)
        moved = AnchorArray.from_positions(np.column_stack([moved_xy, np.zeros(len(anchors))]), ids=anchors.ids)
        # only distances and the ordering enter, so any rigid motion (reflections
        # included) leaves the output unchanged for a fixed ordering
        frame = CanonicalFrame.counter_clockwise(moved)
        ref = solve_anchor_positions(distance_matrix(anchors), frame)
        out = solve_anchor_positions(distance_matrix(moved), frame)
        np.testing.assert_allclose(out.positions, ref.positions, atol=1e-9)

    def test_output_is_counter_clockwise_for_any_boundary_ordering(self):
        d = distance_matrix(SQUARE4)
        for order in (("a0", "a1", "a2", "a3"), ("a0", "a3", "a2", "a1"), ("a2", "a1", "a0", "a3")):
            est = solve_anchor_positions(d, CanonicalFrame(order))
            x, y = est.positions[:, 0], est.positions[:, 1]
            assert np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) > 0
            assert est.positions[2, 1] > 0

    def test_triangle_inequality_gate(self):
        d = np.array([[0, 1, 5.0], [1, 0, 1.0], [5, 1, 0.0]])
        with pytest.raises(InconsistentDistances):
            solve_anchor_positions(PairwiseDistanceMatrix(("a", "b", "c"), d), CanonicalFrame(("a", "b", "c")), sigma=0.039)

    def test_residual_gate(self):
        d = distance_matrix(SQUARE4).d.copy()
        d[3, :3] += np.array([2.0, -1.5, 2.0])
        d[:3, 3] = d[3, :3]
        with pytest.raises(AmbiguousPlacement):
            solve_anchor_positions(PairwiseDistanceMatrix(tuple(SQUARE4.ids), d), CanonicalFrame(tuple(SQUARE4.ids)), sigma=0.039)

    def test_ordering_must_be_permutation(self):
        with pytest.raises(ValidationError):
            solve_anchor_positions(distance_matrix(RECT), CanonicalFrame(("a0", "a1", "a2")))


class TestLatency:
    def test_fit_reproduces_both_points(self):
        per, fixed = fit_latency()
        assert per * 600 + fixed == pytest.approx(2.5)
        assert per * 60 + fixed == pytest.approx(0.9)
        assert (per, fixed) == (PER_RANGING_TIME, FIXED_OVERHEAD)

    def test_latency_formula(self):
        assert calibration_latency(4, CalibrationConfig(50)) == pytest.approx(2.5, abs=0.1)
        assert calibration_latency(4, CalibrationConfig(5)) == pytest.approx(0.9, abs=0.05)
        assert calibration_latency(6, CalibrationConfig(10)) == pytest.approx(FIXED_OVERHEAD + 300 * PER_RANGING_TIME)
        with pytest.raises(ValidationError):
            calibration_latency(1, CalibrationConfig())

    def test_samples_bounds(self):
        with pytest.raises(ValidationError):
            CalibrationConfig(0)
        with pytest.raises(ValidationError):
            CalibrationConfig(1001)


class TestTrials:
    def test_seed_split_rule(self):
        assert trial_seed(7, 3) == splitmix64(10)
        assert len({trial_seed(0, i) for i in range(1000)}) == 1000

    def test_threads_do_not_change_results(self):
        kw = dict(noise=RangingNoiseModel(), cfg=CalibrationConfig(5), trials=12, master_seed=99)
        serial = run_calibration_trials(SQUARE4, threads=1, **kw)
        parallel = run_calibration_trials(SQUARE4, threads=4, **kw)
        assert [t.index for t in parallel] == list(range(12))
        for a, b in zip(serial, parallel):
            assert a.seed == b.seed
            assert np.array_equal(a.anchor_errors, b.anchor_errors)

    def test_env_var(self, monkeypatch):
        monkeypatch.setenv("UWB_LAB_THREADS", "3")
        assert default_threads() == 3
        monkeypatch.delenv("UWB_LAB_THREADS")
        assert default_threads() is None
        monkeypatch.setenv("UWB_LAB_THREADS", "0")
        with pytest.raises(ValidationError):
            default_threads()

    def test_more_samples_help(self):
        kw = dict(noise=RangingNoiseModel(), trials=60, master_seed=5)
        x50 = run_calibration_trials(SQUARE4, cfg=CalibrationConfig(50), **kw)
        x5 = run_calibration_trials(SQUARE4, cfg=CalibrationConfig(5), **kw)
        assert np.mean([t.mean_error for t in x50]) < np.mean([t.mean_error for t in x5])
