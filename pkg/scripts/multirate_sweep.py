"""Sampling-period sweep on the cart-pole with a 0.05 s control period.

For each T runs conventional, single-rate lifted and multi-rate lifted NMPC
(M = T / 0.05). Set LIFTED_NMPC_THREADS to run scenarios in parallel.

    python3 scripts/multirate_sweep.py [--out out/sweep] [--periods 0.1,0.25,0.5]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from lifted_nmpc.cli import cmd_sweep, format_sweep
from lifted_nmpc.scenario import preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/sweep"))
    ap.add_argument("--periods", default="0.1,0.25,0.5")
    ap.add_argument("--settle-eps", type=float, default=0.5)
    ap.add_argument("--gradient", choices=("fd", "adjoint"), default="fd")
    args = ap.parse_args()

    base = preset("cartpole-multirate")
    base = replace(base, settle_eps=args.settle_eps, config=replace(base.config, gradient=args.gradient))
    periods = [float(t) for t in args.periods.split(",")]
    table = cmd_sweep(base, periods, 0.05, args.out, svg=True)
    print(format_sweep(table))
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
