"""Run the synthetic twin over several seeds and print per-mode RMSE and EKF convergence times."""

import argparse

import numpy as np

from itd2d.fdm import FdGrid
from itd2d.params import PRESETS
from itd2d.twin import TwinSettings, run_twin


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", choices=sorted(PRESETS), default="config1")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--duration", type=float, default=2400.0)
    ap.add_argument("--grid", type=int, default=200)
    args = ap.parse_args()

    settings = TwinSettings(duration=args.duration, fd_grid=FdGrid(args.grid, args.grid, 0.1))
    conv = []
    for seed in args.seeds:
        res = run_twin(PRESETS[args.config], settings=settings, seed=seed)
        conv.append(res.convergence_time("ekf_z", "T1"))
        for row in res.summary():
            cols = "  ".join(f"{k}={v:.4f}" for k, v in row.items() if k.endswith("rmse"))
            print(f"seed {seed}  {row['mode']:9s}  {cols}")
    print(f"EKF T1 within 1 degC after {np.min(conv):.0f}..{np.max(conv):.0f} s")


if __name__ == "__main__":
    main()
