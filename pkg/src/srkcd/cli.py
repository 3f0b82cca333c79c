"""Command-line interface: ``srkcd sweep | converge | coeffs``.

Exit status is 0 on success, 2 for configuration errors and 1 for I/O
errors. Diverged runs are reported in the output, not as failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .experiments import (
    ConfigError,
    ConvergeConfig,
    SweepConfig,
    _json_default,
    coeffs_report,
    run_converge,
    run_sweep,
)

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2

METHOD_CHOICES = ("sgd", "srkcd", "srkcd-momentum", "rk")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with 2 as well
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _batch(text: str) -> int | None:
    if text.lower() in ("full", "none", "n"):
        return None
    return int(text)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _grid(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, count = text.split(":")
        return float(lo), float(hi), int(count)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:count, got {text!r}") from None


def _w1(text: str) -> Any:
    if "," in text:
        return _floats(text)
    return text


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with defaults; flags override it")
    p.add_argument("--method", choices=METHOD_CHOICES)
    p.add_argument("--stages", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--problem", choices=("quadratic", "nonconvex"))
    p.add_argument("--n", type=int, help="number of samples")
    p.add_argument("--dim", type=int)
    p.add_argument("--data-seed", type=int)
    p.add_argument("--batch-size", type=_batch, help="integer or 'full'")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--w1", type=_w1, help="'ones', 'zeros', a constant or a comma-separated vector")
    p.add_argument("--divergence-threshold", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output path (stdout when omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srkcd", description="Stochastic Runge-Kutta-Chebyshev descent experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sw = sub.add_parser("sweep", help="final loss against constant step size")
    _common(sw)
    sw.add_argument("--alpha", type=_floats, dest="alphas", help="comma-separated step sizes")
    sw.add_argument("--alpha-grid", type=_grid,
                    help="lo:hi:count as fractions of the stability limit (lo=0 excludes 0)")
    sw.add_argument("--epochs", type=float)
    sw.add_argument("--iterations", type=int)
    sw.add_argument("--best-so-far", action="store_true", default=None)

    cv = sub.add_parser("converge", help="convergence rate under a decreasing step size")
    _common(cv)
    cv.add_argument("--beta", type=float)
    cv.add_argument("--gamma", type=float)
    cv.add_argument("--alpha", type=float, help="constant step size instead of beta/(k+gamma)")
    cv.add_argument("--iterations", type=int)
    cv.add_argument("--points", type=int, help="number of log-spaced record points")
    cv.add_argument("--fit-from", type=int, help="first iteration used in the slope fit")

    co = sub.add_parser("coeffs", help="coefficients, tableau and step bounds")
    co.add_argument("--stages", type=int, required=True)
    co.add_argument("--epsilon", type=float, default=0.01)
    co.add_argument("--L", type=float, default=1.0)
    co.add_argument("--mu", type=float, default=1.0)
    co.add_argument("--MG", type=float, default=1.0)
    co.add_argument("--out")
    return parser


def _merge(cls, args: argparse.Namespace, file_values: dict) -> Any:
    names = {f.name for f in fields(cls)}
    values = {}
    for key, val in file_values.items():
        key = key.replace("-", "_")
        if key not in names:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = val
    for key, val in vars(args).items():
        if key in names and val is not None:
            values[key] = val
    if cls is SweepConfig:
        # an explicit list on the command line beats a grid from the file and vice versa
        if args.alphas is not None:
            values["alpha_grid"] = None
        elif args.alpha_grid is not None:
            values["alphas"] = None
        if args.iterations is not None:
            values["epochs"] = None
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _cmd_sweep(args) -> None:
    config = _merge(SweepConfig, args, _load_config(args.config))
    result = run_sweep(config)
    if config.out is None:
        sys.stdout.write(result.csv_text(config.best_so_far))
    else:
        result.write(config.out, config.best_so_far)


def _cmd_converge(args) -> None:
    config = _merge(ConvergeConfig, args, _load_config(args.config))
    report = run_converge(config)
    for msg in report.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    if config.out is None:
        sys.stdout.write(json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")
    else:
        report.write(config.out)


def _cmd_coeffs(args) -> None:
    report = coeffs_report(args.stages, args.epsilon, args.L, args.mu, args.MG)
    _emit(json.dumps(report, indent=2) + "\n", args.out)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        {"sweep": _cmd_sweep, "converge": _cmd_converge, "coeffs": _cmd_coeffs}[args.command](args)
    except ValueError as exc:  # includes ConfigError
        print(f"srkcd: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"srkcd: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
