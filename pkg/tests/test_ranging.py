import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from uwb_lab.errors import InvalidTimestamps, ValidationError
from uwb_lab.geometry import Point3
from uwb_lab.ranging import (
    SPEED_OF_LIGHT,
    ClockModel,
    RangingNoiseModel,
    TwrTimestamps,
    ds_twr_tof,
    sample_range,
    simulate_exchange,
    ss_twr_tof,
    tof_to_distance,
)

from strategies import seeds

drift = st.floats(min_value=-100.0, max_value=100.0)
distance = st.floats(min_value=0.5, max_value=100.0)
turnaround = st.floats(min_value=50e-6, max_value=2e-3)


def ss_error_oracle(d, drift_i, drift_r, turn):
    """Closed-form SS-TWR distance error for ideal clocks with constant rates.

    Initiator measures (1+e_i)(2 tof + T), responder (1+e_r) T, so the
    ToF error is e_i tof + (e_i - e_r) T / 2.
    """
    tof = d / SPEED_OF_LIGHT
    e_i, e_r = drift_i * 1e-6, drift_r * 1e-6
    return SPEED_OF_LIGHT * (e_i * tof + 0.5 * (e_i - e_r) * turn)


def _valid(d, di, dr, turn):
    """The round-trip invariant survives drift only if 2 ToF outweighs the rate mismatch."""
    return 2 * d / SPEED_OF_LIGHT > abs(di - dr) * 1e-6 * turn * 1.01


def _pair(d, drift_i=0.0, drift_r=0.0, delay_i=0.0, delay_r=0.0, offset_r=0.0):
    return (
        (Point3(0, 0, 0), ClockModel(0.0, drift_i, delay_i)),
        (Point3(d, 0, 0), ClockModel(offset_r, drift_r, delay_r)),
    )


class TestEstimators:
    def test_ss_definition(self):
        assert ss_twr_tof(3.0, 1.0) == 1.0

    def test_ss_rejects_bad_order(self):
        with pytest.raises(InvalidTimestamps):
            ss_twr_tof(1.0, 2.0)
        with pytest.raises(InvalidTimestamps):
            ss_twr_tof(1.0, 0.0)

    def test_ds_definition(self):
        ts = TwrTimestamps(10.0, 4.0, 9.0, 5.0)
        assert ds_twr_tof(ts) == pytest.approx((10 * 9 - 4 * 5) / 28)
        assert ds_twr_tof((10.0, 4.0, 9.0, 5.0)) == ds_twr_tof(ts)

    def test_ds_rejects_non_positive(self):
        with pytest.raises(InvalidTimestamps):
            TwrTimestamps(1.0, -1.0, 1.0, 0.5)

    def test_distance_conversion(self):
        assert tof_to_distance(1e-8) == pytest.approx(2.99792458)


class TestExchange:
    @settings(max_examples=200, deadline=None)
    @given(distance, turnaround)
    def test_ideal_clocks_are_exact(self, d, turn):
        ts = simulate_exchange(*_pair(d), reply_turnaround=turn)
        assert tof_to_distance(ss_twr_tof(ts.t_round1, ts.t_reply1)) == pytest.approx(d, abs=1e-6)
        assert tof_to_distance(ds_twr_tof(ts)) == pytest.approx(d, abs=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(distance, drift, drift, turnaround)
    def test_ss_error_matches_closed_form(self, d, di, dr, turn):
        assume(_valid(d, di, dr, turn))
        ts = simulate_exchange(*_pair(d, di, dr), reply_turnaround=turn)
        err = tof_to_distance(ss_twr_tof(ts.t_round1, ts.t_reply1)) - d
        assert err == pytest.approx(ss_error_oracle(d, di, dr, turn), abs=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(distance, drift, drift, turnaround, st.floats(-1.0, 1.0))
    def test_ds_is_insensitive_to_drift_and_offset(self, d, di, dr, turn, offset):
        assume(_valid(d, di, dr, turn))
        ts = simulate_exchange(*_pair(d, di, dr, offset_r=offset), reply_turnaround=turn)
        assert abs(tof_to_distance(ds_twr_tof(ts)) - d) < 0.01

    def test_drift_beyond_round_trip_is_rejected(self):
        # 1 m, 4 ppm mismatch, 2 ms turnaround: the drifted reply outlasts the round
        with pytest.raises(InvalidTimestamps):
            simulate_exchange(*_pair(1.0, 4.0, 0.0), reply_turnaround=2e-3)

    def test_spec_drift_example(self):
        ts = simulate_exchange(*_pair(6.0, 20.0, -20.0), reply_turnaround=200e-6)
        ss = tof_to_distance(ss_twr_tof(ts.t_round1, ts.t_reply1))
        ds = tof_to_distance(ds_twr_tof(ts))
        assert ss - 6.0 == pytest.approx(ss_error_oracle(6.0, 20.0, -20.0, 200e-6), abs=1e-9)
        assert abs(ss - 6.0) == pytest.approx(1.2, rel=0.01)
        assert abs(ds - 6.0) < 0.01

    def test_ideal_example_durations(self):
        ts = simulate_exchange(*_pair(3.0), reply_turnaround=100e-6)
        assert ts.t_round1 == pytest.approx(100e-6 + 2 * 3.0 / SPEED_OF_LIGHT, abs=1e-15)
        assert ts.t_reply1 == pytest.approx(100e-6, abs=1e-15)

    def test_antenna_delay_adds_to_range(self):
        delay = 1e-9
        ts = simulate_exchange(*_pair(10.0, delay_i=delay, delay_r=delay))
        # equal delays on both nodes cancel in SS
        assert tof_to_distance(ss_twr_tof(ts.t_round1, ts.t_reply1)) == pytest.approx(10.0, abs=1e-6)
        ts2 = simulate_exchange(*_pair(10.0, delay_i=10e-9))
        assert ss_twr_tof(ts2.t_round1, ts2.t_reply1) - 10.0 / SPEED_OF_LIGHT == pytest.approx(10e-9, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValidationError):
            simulate_exchange(*_pair(10.0), reply_turnaround=0.0)
        a = (Point3(1, 1, 1), ClockModel())
        with pytest.raises(ValidationError):
            simulate_exchange(a, a)
        with pytest.raises(ValidationError):
            ClockModel(drift=150.0)

    def test_jitter_needs_rng_and_is_seeded(self):
        with pytest.raises(ValidationError):
            simulate_exchange(*_pair(5.0), timestamp_jitter=1e-10)
        a = simulate_exchange(*_pair(5.0), rng=np.random.default_rng(1), timestamp_jitter=1e-10)
        b = simulate_exchange(*_pair(5.0), rng=np.random.default_rng(1), timestamp_jitter=1e-10)
        assert a == b


class TestNoise:
    def test_clip_must_cover_sigma(self):
        with pytest.raises(ValidationError):
            RangingNoiseModel(sigma=0.1, clip=0.05)

    def test_zero_sigma_is_exact(self):
        rng = np.random.default_rng(0)
        out = sample_range(np.array([1.0, 2.0]), RangingNoiseModel(sigma=0.0, bias=0.05), rng)
        np.testing.assert_allclose(out, [1.05, 2.05])

    def test_scalar_and_shape(self):
        rng = np.random.default_rng(0)
        assert isinstance(sample_range(3.0, RangingNoiseModel(), rng), float)
        assert sample_range(3.0, RangingNoiseModel(), rng, size=7).shape == (7,)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValidationError):
            sample_range(-1.0, RangingNoiseModel(), np.random.default_rng(0))

    @settings(max_examples=50, deadline=None)
    @given(seeds, st.floats(0.0, 0.5), st.floats(-0.2, 0.2))
    def test_error_within_clip(self, seed, sigma, bias):
        noise = RangingNoiseModel(sigma=sigma, bias=bias, clip=max(sigma, 0.01) * 2.2)
        out = sample_range(np.full(500, 10.0), noise, np.random.default_rng(seed))
        assert np.all(np.abs(out - 10.0 - bias) <= noise.clip + 1e-12)

    def test_seeded_determinism(self):
        noise = RangingNoiseModel(rng_seed=42)
        a = sample_range(np.ones(10), noise, noise.make_rng())
        b = sample_range(np.ones(10), noise, noise.make_rng())
        assert np.array_equal(a, b)
