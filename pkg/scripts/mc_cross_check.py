"""Monte Carlo payoff of the computed grid policy against V^h.

    HARVEST_MCAM_THREADS=4 python scripts/mc_cross_check.py --paths 10000
"""

import argparse

from harvest_mcam import SimConfig, build_grid, example_model, solve
from harvest_mcam.verify import mc_cross_check

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--example", type=int, default=2)
    ap.add_argument("--h", type=float, default=0.005)
    ap.add_argument("--paths", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=20240601)
    ap.add_argument("--exact-clock", action="store_true")
    a = ap.parse_args()
    model = example_model(a.example)
    grid = build_grid(model.lam, 2.0, a.h)
    V, policy, _ = solve(model, grid)
    cfg = SimConfig(dt=1e-3, horizon=200.0, n_paths=a.paths, seed=a.seed, exact_clock=a.exact_clock)
    res = mc_cross_check(model, grid, V, policy, [(0.6, 1), (1.0, 1), (1.0, 2)], cfg)
    for r in res.data["rows"]:
        print(f"({r['x0']:g}, {r['alpha0']}): MC {r['mean']:.5f} +- {r['se']:.4f}   V^h {r['V']:.5f}   "
              f"gap {r['gap']:.4f} <= {r['allowed']:.4f}")
    print("PASS" if res.passed else "FAIL")
