"""Cart-pole swing-up at T=0.02: conventional vs single-rate lifted NMPC.

Takes a few minutes with finite-difference gradients.

    python3 scripts/cartpole_single_rate.py [--out out/cartpole] [--horizon N]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from lifted_nmpc.cli import cmd_compare, format_comparison
from lifted_nmpc.scenario import preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/cartpole"))
    ap.add_argument("--horizon", type=int, default=None, help="override the prediction horizon N")
    ap.add_argument("--settle-eps", type=float, default=0.2)
    args = ap.parse_args()

    s = replace(preset("cartpole-single"), settle_eps=args.settle_eps)
    if args.horizon:
        s = replace(s, name=f"cartpole-N{args.horizon}", config=replace(s.config, N=args.horizon))
    oa, ob, winner = cmd_compare(s.with_controller("conventional"), s.with_controller("lifted"), args.out, svg=True)
    print(format_comparison(oa, ob, winner))
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
