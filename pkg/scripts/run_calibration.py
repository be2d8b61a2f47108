"""Monte-Carlo anchor self-calibration: accuracy and latency for 5 and 50 samples per pair."""

import argparse

import numpy as np

from uwb_lab.autocalib import CalibrationConfig, calibration_latency, run_calibration_trials
from uwb_lab.scenario import load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default="calib-square-4m")
    ap.add_argument("--trials", type=int, default=200)
    args = ap.parse_args()
    cfg = load_scenario(args.config)
    n = len(cfg.anchors)
    for k in (5, 50):
        cal = CalibrationConfig(k)
        trials = run_calibration_trials(cfg.anchors, cfg.noise, cal, args.trials, cfg.seed, frame=cfg.frame)
        err = np.concatenate([t.anchor_errors for t in trials])
        print(f"x{k:<3} max={err.max():.4f} m  mean={err.mean():.4f} m  p95={np.percentile(err, 95):.4f} m  "
              f"latency={calibration_latency(n, cal):.3f} s")


if __name__ == "__main__":
    main()
