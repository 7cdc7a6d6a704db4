"""V^h at a few states and sup-norm refinement errors as h shrinks."""

import argparse

import numpy as np

from harvest_mcam import build_grid, example_model, solve


def study(number: int, hs: list[float], upper: float = 2.0) -> None:
    model = example_model(number)
    coarse = build_grid(model.lam, upper, hs[0])
    prev = None
    print(f"example {number}")
    print(f"{'h':>10} {'V(1,1)':>12} {'V(1,2)':>12} {'e(h)':>12} {'iters':>6} {'time':>7}")
    for h in hs:
        grid = build_grid(model.lam, upper, h)
        V, _, rep = solve(model, grid, tol=1e-8)
        on_coarse = V.values[[grid.index_of(x) for x in coarse.live]]
        err = "" if prev is None else f"{np.abs(on_coarse - prev).max():12.6g}"
        print(f"{h:10.5g} {V.at(1.0, 1):12.8g} {V.at(1.0, 2):12.8g} {err:>12} {rep.iterations:6d} {rep.wall_time:7.2f}")
        prev = on_coarse


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--examples", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--h", type=float, nargs="+", default=[0.02, 0.01, 0.005, 0.0025])
    a = ap.parse_args()
    for n in a.examples:
        study(n, a.h)
