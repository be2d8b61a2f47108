"""Single-sided vs double-sided ranging error under opposite clock drifts."""

import argparse

import numpy as np

from uwb_lab.geometry import Point3
from uwb_lab.ranging import ClockModel, ds_twr_tof, simulate_exchange, ss_twr_tof, tof_to_distance


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--distance", type=float, default=6.0)
    ap.add_argument("--ppm", type=float, default=20.0, help="drift magnitude; the two nodes get +ppm and -ppm")
    args = ap.parse_args()
    a = (Point3(0, 0, 0), ClockModel(0.0, args.ppm))
    b = (Point3(args.distance, 0, 0), ClockModel(0.0, -args.ppm))
    print(f"{'turnaround_us':>14} {'ss_err_m':>10} {'ds_err_mm':>10}")
    for turn in np.linspace(50e-6, 500e-6, 10):
        ts = simulate_exchange(a, b, reply_turnaround=turn)
        ss = tof_to_distance(ss_twr_tof(ts.t_round1, ts.t_reply1)) - args.distance
        ds = tof_to_distance(ds_twr_tof(ts)) - args.distance
        print(f"{turn * 1e6:14.0f} {ss:10.4f} {ds * 1e3:10.5f}")


if __name__ == "__main__":
    main()
