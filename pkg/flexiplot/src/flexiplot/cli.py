"""Command-line figure generation from sweep CSVs."""

from __future__ import annotations

import argparse
import sys

from .render import KINDS, PlotJob, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plot", description="render figures from simulator sweep CSVs")
    parser.add_argument("--csv", required=True, help="sweep CSV input")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--detector", action="append", default=[],
                        help="sbs, map, or mapN for a specific memory (repeatable)")
    parser.add_argument("--rate", action="append", default=[], type=float,
                        help="symbol rate in Gbaud (repeatable)")
    parser.add_argument("--power", type=float, default=None,
                        help="pin one launch power [dBm]; default: best per point")
    parser.add_argument("--reference-rate", type=float, default=32.5,
                        help="reference symbol rate for delta_envelope")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    job = PlotJob(input_csv=args.csv, kind=args.kind, output_path=args.out,
                  detectors=tuple(args.detector), rates=tuple(args.rate),
                  power_dbm=args.power, reference_rate_gbaud=args.reference_rate)
    try:
        path = render(job)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
