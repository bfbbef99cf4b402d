"""Run every bundled experiment config and print where the artifacts went.

    python scripts/run_all.py [--out results] [--jobs 4] [names...]

Names are config stems under configs/ (default: all of them).
"""
import argparse
from pathlib import Path

from burstmap.cli import run
from burstmap.config import parse_config

ROOT = Path(__file__).resolve().parents[1]
COMMAND = {
    "latency_direct": "detect-latency",
    "latency_scrambling": "detect-latency",
    "per_ray": "per-ray",
    "sweep_small": "sweep",
    "sweep_ideal": "sweep",
    "sweep_windowed": "sweep",
    "remap_demo": "remap-demo",
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", default=sorted(COMMAND))
    ap.add_argument("--out", default="results")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    for name in args.names:
        cfg = parse_config(ROOT / "configs" / f"{name}.yaml")
        out = Path(args.out) / name
        written = run(COMMAND[name], cfg, out, args.jobs)
        print(f"{name}: {', '.join(sorted(written))} -> {out}")


if __name__ == "__main__":
    main()
