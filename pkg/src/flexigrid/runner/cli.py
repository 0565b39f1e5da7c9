"""Command-line entry points.

Subcommands:
  simulate  <config.yaml>   full seeded sweep, CSV output
  wss-loss                  cascaded-switch power-loss table
  validate                  analytic self-check suite
  air-only  <samples> <symbols> <model>   rate estimate from dumped streams
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from ..air import estimate_air
from ..detect import AuxChannelModel
from ..filters import FilterKind, FilterSpec, cascade_power_loss
from .config import ConfigError, load_config
from .experiment import run_experiment
from . import validate as validate_mod


def _cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.output:
        from dataclasses import replace
        cfg = replace(cfg, output_path=args.output)

    def progress(power, spans, rate, rows):
        parts = ", ".join(
            f"{r.detector}{'' if r.memory is None else r.memory}: "
            f"eta={r.se:.3f}" if np.isfinite(r.se) else f"{r.detector}: failed"
            for r in rows)
        print(f"P={power:+.1f} dBm  spans={spans:3d}  R={rate:g} Gbaud  {parts}",
              flush=True)

    records, failures = run_experiment(cfg, progress=progress if not args.quiet else None)
    print(f"wrote {len(records)} rows to {cfg.output_path}"
          + (f" ({failures} failed)" if failures else ""))
    return 1 if failures else 0


def _cmd_wss_loss(args) -> int:
    wss = FilterSpec(FilterKind.SUPER_GAUSSIAN, order=args.order,
                     bandwidth_3db_hz=args.bandwidth_ghz * 1e9)
    counts = [int(c) for c in args.counts.split(",")]
    lines = ["n_wss,loss_fraction"]
    for n in counts:
        loss = cascade_power_loss(args.symbol_rate_gbaud * 1e9, args.rolloff, wss, n)
        lines.append(f"{n},{loss:.6f}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(_args) -> int:
    return 0 if validate_mod.run_all() else 1


def _cmd_air_only(args) -> int:
    samples = np.loadtxt(args.samples, delimiter=",", ndmin=2)
    symbols = np.loadtxt(args.symbols, delimiter=",", ndmin=2)
    with open(args.model) as fh:
        model = AuxChannelModel.from_text(fh.read().strip())
    if samples.shape != symbols.shape:
        print("samples and symbols must have matching shapes", file=sys.stderr)
        return 2
    res = estimate_air(samples.T, symbols.T, model, n_clusters=args.clusters)
    print(f"i_lb_bits_per_use={res.i_lb_bits_per_use:.6f}")
    print(f"ci_fraction={res.ci_fraction:.6f}")
    print(f"n_clusters={res.n_clusters}")
    print(f"symbols_per_cluster={res.symbols_per_cluster}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexigrid",
                                     description="flexi-grid WDM link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a full sweep from a YAML config")
    p_sim.add_argument("config")
    p_sim.add_argument("--output", help="override the configured CSV path")
    p_sim.add_argument("--quiet", action="store_true")
    p_sim.set_defaults(func=_cmd_simulate)

    p_wss = sub.add_parser("wss-loss", help="cascaded-switch power-loss table")
    p_wss.add_argument("--symbol-rate-gbaud", type=float, default=32.5)
    p_wss.add_argument("--rolloff", type=float, default=0.1)
    p_wss.add_argument("--order", type=int, default=3)
    p_wss.add_argument("--bandwidth-ghz", type=float, default=35.75)
    p_wss.add_argument("--counts", default="1,2,5,10,20,50,100")
    p_wss.add_argument("--out", help="write CSV here instead of stdout")
    p_wss.set_defaults(func=_cmd_wss_loss)

    p_val = sub.add_parser("validate", help="run the analytic oracle suite")
    p_val.set_defaults(func=_cmd_validate)

    p_air = sub.add_parser("air-only", help="rate estimate from dumped streams")
    p_air.add_argument("samples", help="CSV, one column per detection stream")
    p_air.add_argument("symbols", help="CSV of matching +-1 symbol levels")
    p_air.add_argument("model", help="text file: L=.. taps=.. sigma2=..")
    p_air.add_argument("--clusters", type=int, default=6)
    p_air.set_defaults(func=_cmd_air_only)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
