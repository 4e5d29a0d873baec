"""Command-line entry point: ``python -m multiairfed <command> [options]``.

Commands
--------
validate    run every analytic/Monte Carlo oracle pair, write a CSV report
psi         print the interference constants for the configuration
mse-sweep   analytic and simulated distortion over one configuration key
train       accuracy-per-round table for one algorithm and channel mode
plot-data   convert a CSV written by this tool into gnuplot-ready columns

Exit status is 0 on success, 1 when a validation check fails and 2 on usage
or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import analysis, experiments
from .config import ConfigError, parse_config
from .radio import EI_CONSTANTS

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--trials", type=int, help="Monte Carlo trials per distortion estimate")
    p.add_argument("--out", help="output file (or directory for train)")
    p.add_argument("--ei-constant", choices=EI_CONSTANTS,
                   help="truncated inverse-fading constant used in the interference power")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multiairfed", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="oracle validation report")
    _common(p)
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every tolerance (0 forces exact checks)")

    p = sub.add_parser("psi", help="interference constants")
    _common(p)
    p.add_argument("--mc", type=int, default=0, metavar="N",
                   help="also run the Monte Carlo oracle with N realizations")

    p = sub.add_parser("mse-sweep", help="distortion sweep over one key")
    _common(p)
    p.add_argument("--key", default="lambda_p_km2", help="configuration key to sweep")
    p.add_argument("--values", default="5,10,20,40,80", help="comma-separated values")
    p.add_argument("--theta", default="optimal", help="'optimal' or a fixed number")
    p.add_argument("--mode", choices=("intra", "inter"), default="intra")

    p = sub.add_parser("train", help="train and write accuracy per round")
    _common(p)
    p.add_argument("--algorithm", choices=sorted(experiments.ALGORITHMS),
                   default="multiairfed")
    p.add_argument("--mode", choices=("ideal", "ota", "orthogonal"), default="ota")
    p.add_argument("--realizations", type=int, help="number of seeds to average")

    p = sub.add_parser("plot-data", help="gnuplot-ready columns from a CSV")
    p.add_argument("csv", help="CSV written by validate, mse-sweep or train")
    p.add_argument("--out", help="output .dat path (default: next to the CSV)")
    return parser


def _config(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("out", "out"),
                      ("ei_constant", "ei_constant"),
                      ("realizations", "realizations")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    return parse_config(args.config, **overrides)


def _out_path(cfg, default_name):
    out = Path(cfg.out)
    return out / default_name if out.suffix != ".csv" else out


def cmd_validate(cfg, tolerance_scale=1.0) -> int:
    rows = experiments.run_validation(cfg, tolerance_scale)
    path = experiments.write_csv(_out_path(cfg, "validation.csv"),
                                 experiments.VALIDATION_COLUMNS,
                                 [r.as_tuple() for r in rows], experiments.VALIDATION_UNITS)
    for r in rows:
        print(f"{r.status:4s}  {r.quantity:32s} analytic={r.analytic:.6g} "
              f"mc={r.mc_estimate:.6g} +- {r.mc_stderr:.3g} (n={r.n})")
    ok = experiments.validation_passed(rows)
    print(f"report written to {path}; {'all checks passed' if ok else 'FAILED'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_psi(cfg, mc=0) -> int:
    radio = cfg.radio()
    print(f"rho   = {radio.rho:.6e}")
    for setting in EI_CONSTANTS:
        print(f"psi[{setting}] = {radio.with_(ei_constant=setting).psi:.6e} W")
    print(f"beta  = {radio.beta:.6e}")
    if mc:
        import numpy as np

        m, se = analysis.psi_monte_carlo(radio, mc, np.random.default_rng(cfg.seed),
                                         cfg.window_m)
        print(f"psi Monte Carlo = {m:.6e} +- {se:.2e} W ({mc} realizations)")
    return EXIT_OK


def cmd_mse_sweep(cfg, key, values, theta="optimal", mode="intra") -> int:
    rows = experiments.mse_sweep(cfg, key, values, theta, mode)
    path = experiments.write_csv(_out_path(cfg, f"sweep_{key}.csv"), experiments.SWEEP_COLUMNS,
                                 rows, experiments.SWEEP_UNITS)
    print(f"sweep written to {path}")
    return EXIT_OK


def cmd_train(cfg, algorithm, mode) -> int:
    results = experiments.train_runs(cfg, algorithm, mode)
    rows = experiments.train_table(results)
    path = experiments.write_csv(_out_path(cfg, f"train_{algorithm}_{mode}_C{cfg.C}.csv"),
                                 experiments.TRAIN_COLUMNS, rows, experiments.TRAIN_UNITS)
    print(f"final accuracy {rows[-1][1]:.4f} over {len(results)} realizations; "
          f"table written to {path}")
    return EXIT_OK


def _parse_values(key, text):
    from .config import parse_overrides

    return [parse_overrides({key: v})[key] for v in text.split(",") if v.strip()]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False)
                        else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot-data":
            path = experiments.emit_plot_data(args.csv, args.out)
            print(f"plot data written to {path}")
            return EXIT_OK
        cfg = _config(args)
        if args.command == "validate":
            return cmd_validate(cfg, args.tolerance_scale)
        if args.command == "psi":
            return cmd_psi(cfg, args.mc)
        if args.command == "mse-sweep":
            theta = args.theta if args.theta == "optimal" else float(args.theta)
            return cmd_mse_sweep(cfg, args.key, _parse_values(args.key, args.values), theta,
                                 args.mode)
        if args.command == "train":
            return cmd_train(cfg, args.algorithm, args.mode)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"multiairfed: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
