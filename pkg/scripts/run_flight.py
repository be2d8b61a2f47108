"""Closed-loop circle flight: entry time, radial deviation and per-axis error quartiles."""

import argparse
from dataclasses import replace

from uwb_lab.characterize import box_stats
from uwb_lab.flightsim import entry_index, radial_deviation, run_flight
from uwb_lab.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="room-corners")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    log = run_flight(cfg.flight_scenario())
    params = cfg.trajectory.params
    k = entry_index(log, params)
    print(f"ticks={len(log)} solver_failures={log.failures} entry_tick={k}")
    if k is not None:
        print(f"max radial deviation after entry: {radial_deviation(log, params.p0.r)[k:].max():.3f} m "
              f"(band {params.epsilon} m)")
    ok = log.solved
    for axis, name in enumerate("xyz"):
        b = box_stats(log.estimate[ok, axis] - log.truth[ok, axis])
        print(f"err_{name}: q1={b.q1:+.4f} median={b.median:+.4f} q3={b.q3:+.4f} "
              f"whiskers=[{b.whisker_lo:+.4f}, {b.whisker_hi:+.4f}] outliers={len(b.outliers)}")


if __name__ == "__main__":
    main()
