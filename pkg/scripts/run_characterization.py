"""Error versus distance from the anchor centroid, with and without a common range bias.

With zero-mean noise the corner layout gives a nearly flat trend. A common
range bias cancels at the centroid and grows away from it.
"""

import argparse
from dataclasses import replace

from uwb_lab.characterize import DISTANCE_EDGES, Trajectory, bin_records, compute_errors, trend_report
from uwb_lab.flightsim import run_flight
from uwb_lab.scenario import load_scenario


def trend_for(cfg):
    log = run_flight(cfg.flight_scenario())
    recs = compute_errors(Trajectory(log.t, log.truth), Trajectory(log.t, log.estimate), cfg.anchors,
                          rate=cfg.control_rate, speed=log.speed)
    bins, _ = bin_records(recs, "dist_to_centroid", DISTANCE_EDGES)
    return trend_report(bins)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="room-corners-sweep")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()
    cfg = load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    for label, c in (("bias 0", replace(cfg, noise=replace(cfg.noise, bias=0.0))),
                     (f"bias {cfg.noise.bias:g}", cfg)):
        t = trend_for(c)
        meds = " ".join(f"{m:.3f}" for m in t.medians)
        print(f"{label:>9}: medians [{meds}] monotone={t.monotone} in={t.in_median:.3f} out={t.out_median:.3f}")


if __name__ == "__main__":
    main()
