"""``advrom`` command line.

Exit codes: 0 success, 1 other library error, 2 configuration or argument
error, 3 I/O error, 4 numeric failure, 5 missing upstream artifact.
"""
import argparse
import logging
import sys

import yaml

from . import pipeline
from .alstm import MODES
from .config import load_config
from .errors import AdvromError, ConfigError

log = logging.getLogger("advrom")


def _override(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, yaml.safe_load(value)
    except yaml.YAMLError as exc:
        raise argparse.ArgumentTypeError(f"cannot parse value in {text!r}: {exc}") from exc


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned integer, got {text!r}")
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 unsigned bits, got {v}")
    return v


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="YAML run configuration")
    shared.add_argument("--out", metavar="DIR", help="output directory (overrides `output`)")
    shared.add_argument("--seed", type=_seed, metavar="U64", help="global seed (overrides `seed`)")
    shared.add_argument("--set", dest="overrides", type=_override, action="append", default=[],
                        metavar="KEY=VALUE", help="override a config scalar, e.g. aae.epochs=50")
    shared.add_argument("--quiet", action="store_true", help="only print errors")

    parser = argparse.ArgumentParser(
        prog="advrom", description="PCA + adversarial autoencoder reduced-order model with "
                                   "adversarially trained LSTM forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen-data", parents=[shared], help="synthesize (or import) the snapshot matrix")
    sub.add_parser("fit-rom", parents=[shared], help="PCA, scaling and truncation-error table")
    sub.add_parser("train-aae", parents=[shared], help="train the PC adversarial autoencoder")
    p = sub.add_parser("train-forecaster", parents=[shared], help="train a latent forecaster")
    p.add_argument("--mode", choices=MODES, required=True)
    sub.add_parser("evaluate", parents=[shared], help="ensemble forecast-error curves")
    sub.add_parser("reproduce-fig2", parents=[shared],
                   help="truncation vs autoencoder tables and forecast-error tables")
    return parser


def resolve_config(args):
    overrides = dict(args.overrides)
    if args.out is not None:
        overrides["output"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    return load_config(args.config, overrides)


def run(args):
    cfg = resolve_config(args)
    if args.command == "gen-data":
        pipeline.cmd_gen_data(cfg)
    elif args.command == "fit-rom":
        pipeline.cmd_fit_rom(cfg)
    elif args.command == "train-aae":
        pipeline.cmd_train_aae(cfg)
    elif args.command == "train-forecaster":
        pipeline.cmd_train_forecaster(cfg, args.mode)
    elif args.command == "evaluate":
        pipeline.cmd_evaluate(cfg)
    elif args.command == "reproduce-fig2":
        pipeline.cmd_reproduce_fig2(cfg)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)
    try:
        run(args)
    except ConfigError as exc:
        print(f"advrom: configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except AdvromError as exc:
        print(f"advrom {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"advrom {args.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
