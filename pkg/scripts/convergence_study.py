"""Probe error of the spectral model against the finite-volume oracle as the mode count grows.

    python3 scripts/convergence_study.py --orders 2 3 4 5 6 8 --grid 200
"""

import argparse
import time

import numpy as np

from itd2d.fdm import FdGrid, solve_transient
from itd2d.model import assemble_model, discretize, output_map_for_points, simulate
from itd2d.params import PRESETS, REFERENCE_GEOMETRY, SpectralConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--orders", type=int, nargs="+", default=[2, 3, 4, 5, 6, 8, 10])
    ap.add_argument("--grid", type=int, default=200, help="oracle cells per direction")
    ap.add_argument("--power", type=float, default=15.0, help="step heat in W")
    ap.add_argument("--seconds", type=int, default=3000)
    args = ap.parse_args()

    q = np.full(args.seconds, args.power / REFERENCE_GEOMETRY.volume())
    print("config   n  states  max|dT| degC  runtime s")
    for name, params in PRESETS.items():
        fd = solve_transient(REFERENCE_GEOMETRY, params, q, 1.0, grid=FdGrid(args.grid, args.grid, 0.1))
        for n in args.orders:
            t0 = time.perf_counter()
            model = assemble_model(REFERENCE_GEOMETRY, params, SpectralConfig(n, n))
            xs = simulate(discretize(model, 1.0), q, model.uniform_state(params.t_ambient))
            err = np.abs(output_map_for_points(model)(xs) - fd.probes).max()
            print(f"{name}  {n:2d}  {n * n:6d}  {err:12.5f}  {time.perf_counter() - t0:9.3f}")


if __name__ == "__main__":
    main()
