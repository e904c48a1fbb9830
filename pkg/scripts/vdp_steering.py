"""Van der Pol steering: conventional vs lifted NMPC from the preset state.

    python3 scripts/vdp_steering.py [--out out/vdp] [--x0 2,0]
"""

import argparse
from dataclasses import replace
from pathlib import Path

from lifted_nmpc.cli import cmd_compare, format_comparison
from lifted_nmpc.scenario import preset


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("out/vdp"))
    ap.add_argument("--x0", default=None, help="comma-separated initial state")
    ap.add_argument("--duration", type=float, default=None)
    args = ap.parse_args()

    s = preset("vdp")
    if args.x0:
        s = replace(s, x0=tuple(float(v) for v in args.x0.split(",")))
    if args.duration:
        s = replace(s, duration=args.duration)
    oa, ob, winner = cmd_compare(s.with_controller("conventional"), s.with_controller("lifted"), args.out, svg=True)
    print(format_comparison(oa, ob, winner))
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
