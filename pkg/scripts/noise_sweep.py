"""Distance of V^h from the liquidation payoff as the noise intensity grows."""

import argparse

from harvest_mcam import example_model
from harvest_mcam.verify import NoiseSweepSpec, noise_sweep

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--example", type=int, default=2)
    ap.add_argument("--h", type=float, default=0.01)
    ap.add_argument("--intensities", type=float, nargs="+", default=[1, 2, 4, 8, 16, 32])
    a = ap.parse_args()
    base = example_model(a.example)
    for mode in ("multiplicative", "additive"):
        res = noise_sweep(base, NoiseSweepSpec(mode=mode, intensities=tuple(a.intensities)), h=a.h)
        print(f"{mode:>15}: {'PASS' if res.passed else 'FAIL'}")
        for n, d in zip(res.data["intensities"], res.data["distance"]):
            print(f"{n:>15g}  {d:.6g}")
