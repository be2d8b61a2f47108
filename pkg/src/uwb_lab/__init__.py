"""Simulation and analysis toolkit for UWB time-of-flight localisation of small UAVs.

Modules: ``geometry`` (points, anchor arrays, convex envelopes), ``ranging``
(two-way ranging and noise), ``autocalib`` (anchor self-calibration),
``locate`` (multilateration), ``flightsim`` (closed-loop flights and sweeps),
``characterize`` (error statistics), ``scenario`` / ``dataio`` / ``cli`` (I/O).
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    UwbLabError,
    InputError,
    NumericalError,
)
from .geometry import Point3, AnchorArray, ConvexEnvelope2D, convex_hull_2d  # noqa: E402
from .ranging import RangingNoiseModel, ClockModel, ss_twr_tof, ds_twr_tof, simulate_exchange, sample_range  # noqa: E402
from .locate import SolveMode, RangeSet, PositionFix, multilaterate  # noqa: E402
from .autocalib import CalibrationConfig, CanonicalFrame, solve_anchor_positions  # noqa: E402
from .flightsim import FlightScenario, run_flight  # noqa: E402
from .characterize import compute_errors, cdf, box_stats, trend_report  # noqa: E402
from .scenario import load_scenario  # noqa: E402

__all__ = [
    "UwbLabError", "InputError", "NumericalError",
    "Point3", "AnchorArray", "ConvexEnvelope2D", "convex_hull_2d",
    "RangingNoiseModel", "ClockModel", "ss_twr_tof", "ds_twr_tof", "simulate_exchange", "sample_range",
    "SolveMode", "RangeSet", "PositionFix", "multilaterate",
    "CalibrationConfig", "CanonicalFrame", "solve_anchor_positions",
    "FlightScenario", "run_flight",
    "compute_errors", "cdf", "box_stats", "trend_report",
    "load_scenario",
]
