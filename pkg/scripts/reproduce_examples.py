"""Solve the three worked examples and write CSV tables and SVG figures.

    python scripts/reproduce_examples.py [--out out]
"""

import argparse
from pathlib import Path

from harvest_mcam.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path) -> int:
    status = 0
    for n in (1, 2, 3):
        cfg = ROOT / "configs" / f"example{n}.toml"
        print(f"== example {n}")
        status |= main(["solve", "--config", str(cfg), "--out", str(out / f"example{n}")])
    return status


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out", type=Path)
    raise SystemExit(run(ap.parse_args().out))
