"""Command line entry point (``strank``).

Every failure is reported as one line, ``error[CODE]: message``, on stderr
with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ArgumentError, StrankError

EXIT_ERROR = 1
EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ArgumentError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _grid(items: list[str]) -> dict[str, list[float]]:
    grid = {}
    for item in items:
        name, sep, values = item.partition("=")
        if not sep:
            raise ArgumentError(f"grid entries look like name=v1,v2 (got {item!r})")
        grid[name.strip()] = _float_list(values)
    return grid


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="strank", description="Spatial transcriptomics ranking losses: experiments and tools.")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def table_flags(p, default_preset="desk"):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--preset", choices=["paper", "desk", "smoke"], default=default_preset)
        p.add_argument("--seeds", type=int, default=None, help="number of seeds (default: from preset)")
        p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
        p.add_argument("--cache", default=None, help="directory caching finished cells")

    p = sub.add_parser("gen", help="generate a synthetic dataset from a config's synth section")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="run a configured experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("table1", help="all losses in both settings")
    table_flags(p)

    p = sub.add_parser("sweep-nk", help="ListSTRank list size sweep")
    table_flags(p)
    p.add_argument("--values", type=_int_list, default=None, help="comma-separated list sizes")

    p = sub.add_parser("sweep-downsample", help="binomial thinning sweep")
    table_flags(p)
    p.add_argument("--rates", type=_float_list, default=None, help="comma-separated rates")

    p = sub.add_parser("sweep-params", help="batch-effect and dispersion sweep")
    table_flags(p)
    p.add_argument("--grid", nargs="+", default=None, metavar="NAME=V1,V2", help="e.g. alpha2=1,10 dispersion=2")
    return parser


def _run(args) -> None:
    from .harness import experiments as ex
    from .harness.config import load_config

    if args.command in ("table1", "sweep-nk", "sweep-downsample", "sweep-params"):
        if args.seeds is not None and args.seeds < 1:
            raise ArgumentError("--seeds must be >= 1")
        if args.workers < 1:
            raise ArgumentError("--workers must be >= 1")
        common = dict(preset=args.preset, seeds=args.seeds, workers=args.workers, cache_dir=args.cache)

    if args.command == "gen":
        from .dataset import save_dataset
        from .synthgen import generate_dataset

        config = load_config(args.config)
        if config.synth is None:
            raise ArgumentError("gen needs a config with a synth section")
        for name, ds in zip(("train", "val", "test"), generate_dataset(config.synth.build())):
            save_dataset(ds, Path(args.out) / name)
    elif args.command == "train":
        config = load_config(args.config)
        agg = ex.run_experiment(config, args.out)
        print(f"mean_scc={agg['mean_scc']} std_scc={agg['std_scc']}")
    elif args.command == "eval":
        from .dataset import load_dataset
        from .model import load_params

        params = load_params(args.checkpoint)
        report = ex.evaluate_checkpoint(params, load_dataset(args.data), args.out)
        print(f"mean_scc={report.mean_scc}")
    elif args.command == "table1":
        ex.reproduce_table1(args.out, **common)
    elif args.command == "sweep-nk":
        ex.sweep_nk(args.out, values=args.values or ex.NK_VALUES, **common)
    elif args.command == "sweep-downsample":
        ex.sweep_downsample(args.out, rates=args.rates if args.rates is not None else ex.DOWNSAMPLE_RATES, **common)
    elif args.command == "sweep-params":
        ex.sweep_params(args.out, grid=_grid(args.grid) if args.grid else None, **common)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(message)s")
        _run(args)
    except ArgumentError as exc:
        print(f"error[{exc.code}]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_USAGE
    except StrankError as exc:
        print(f"error[{exc.code}]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_ERROR
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error[E_IO]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as exc:
        print(f"error[E_VALUE]: {_one_line(exc)}", file=sys.stderr)
        return EXIT_ERROR
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
