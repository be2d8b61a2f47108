"""Two-way ranging: timestamp simulation, ToF estimators and range noise.

Clocks are modelled as ``local(t) = offset + (1 + drift_ppm * 1e-6) * t``.
Every duration a node measures is read off its own clock and carries
twice that node's antenna delay (transmit plus receive path).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidTimestamps, ValidationError
from .geometry import Point3

SPEED_OF_LIGHT = 299_792_458.0  # m/s, vacuum
DEFAULT_REPLY_TURNAROUND = 200e-6
MAX_DRIFT_PPM = 100.0


@dataclass(frozen=True)
class ClockModel:
    offset: float = 0.0
    drift: float = 0.0  # ppm
    antenna_delay: float = 0.0

    def __post_init__(self):
        if abs(self.drift) > MAX_DRIFT_PPM:
            raise ValidationError(f"|drift| must be <= {MAX_DRIFT_PPM} ppm, got {self.drift}")
        if self.antenna_delay < 0:
            raise ValidationError("antenna_delay must be >= 0")

    @property
    def rate(self) -> float:
        return 1.0 + self.drift * 1e-6

    def local_time(self, t: float) -> float:
        return self.offset + self.rate * t


@dataclass(frozen=True)
class TwrTimestamps:
    """The four durations of a double-sided exchange.

    ``t_round1``/``t_reply2`` are measured by the initiator,
    ``t_reply1``/``t_round2`` by the responder.
    """

    t_round1: float
    t_reply1: float
    t_round2: float
    t_reply2: float

    def __post_init__(self):
        vals = (self.t_round1, self.t_reply1, self.t_round2, self.t_reply2)
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise InvalidTimestamps(f"all durations must be positive, got {vals}")
        if not (self.t_round1 > self.t_reply1 and self.t_round2 > self.t_reply2):
            raise InvalidTimestamps("each round trip must exceed its reply turnaround")


@dataclass(frozen=True)
class RangingNoiseModel:
    sigma: float = 0.039
    bias: float = 0.0
    clip: float = 0.086
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValidationError("sigma must be >= 0")
        if self.clip < self.sigma:
            raise ValidationError(f"clip ({self.clip}) must be >= sigma ({self.sigma})")

    def make_rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def ss_twr_tof(t_round: float, t_reply: float) -> float:
    """Single-sided estimate: half of round trip minus reply turnaround."""
    if not (t_reply > 0 and t_round > t_reply):
        raise InvalidTimestamps(f"need t_round > t_reply > 0, got {t_round}, {t_reply}")
    return 0.5 * (t_round - t_reply)


def ds_twr_tof(ts: TwrTimestamps) -> float:
    """Double-sided estimate; first-order insensitive to clock drift."""
    if not isinstance(ts, TwrTimestamps):
        ts = TwrTimestamps(*ts)
    num = ts.t_round1 * ts.t_round2 - ts.t_reply1 * ts.t_reply2
    den = ts.t_round1 + ts.t_round2 + ts.t_reply1 + ts.t_reply2
    return num / den


def tof_to_distance(tof, c: float = SPEED_OF_LIGHT):
    return tof * c


def simulate_exchange(
    initiator: tuple[Point3, ClockModel],
    responder: tuple[Point3, ClockModel],
    reply_turnaround: float = DEFAULT_REPLY_TURNAROUND,
    rng: np.random.Generator | None = None,
    *,
    timestamp_jitter: float = 0.0,
    c: float = SPEED_OF_LIGHT,
) -> TwrTimestamps:
    """Run poll / response / final between two nodes and return local durations.

    ``reply_turnaround`` is the true time each side waits before answering.
    ``timestamp_jitter`` (seconds, std) perturbs every local timestamp; it
    needs ``rng`` when non-zero.
    """
    if reply_turnaround <= 0:
        raise ValidationError("reply_turnaround must be > 0")
    p_i, clk_i = initiator
    p_r, clk_r = responder
    dist = p_i.distance_to(p_r)
    if dist == 0:
        raise ValidationError("initiator and responder positions must differ")
    tof = dist / c
    turn = reply_turnaround

    # true event times
    poll_tx = 0.0
    poll_rx = poll_tx + tof
    resp_tx = poll_rx + turn
    resp_rx = resp_tx + tof
    final_tx = resp_rx + turn
    final_rx = final_tx + tof

    def stamp(clock: ClockModel, t: float) -> float:
        local = clock.local_time(t)
        if timestamp_jitter > 0:
            if rng is None:
                raise ValidationError("timestamp_jitter requires an rng")
            local += rng.normal(0.0, timestamp_jitter)
        return local

    a_i = 2.0 * clk_i.antenna_delay
    a_r = 2.0 * clk_r.antenna_delay
    return TwrTimestamps(
        t_round1=stamp(clk_i, resp_rx) - stamp(clk_i, poll_tx) + a_i,
        t_reply1=stamp(clk_r, resp_tx) - stamp(clk_r, poll_rx) + a_r,
        t_round2=stamp(clk_r, final_rx) - stamp(clk_r, resp_tx) + a_r,
        t_reply2=stamp(clk_i, final_tx) - stamp(clk_i, resp_rx) + a_i,
    )


def sample_range(true_distance, noise: RangingNoiseModel, rng: np.random.Generator, size=None):
    """Noisy range: truth + bias + clipped Gaussian error.

    Scalar input without ``size`` returns a float; otherwise an array
    broadcast against ``true_distance``.
    """
    d = np.asarray(true_distance, dtype=float)
    if np.any(d < 0):
        raise ValidationError("true_distance must be >= 0")
    shape = d.shape if size is None else size
    if noise.sigma > 0:
        err = np.clip(rng.normal(0.0, noise.sigma, size=shape), -noise.clip, noise.clip)
    else:
        err = np.zeros(shape)
    out = d + noise.bias + err
    if np.ndim(out) == 0:
        return float(out)
    return out
