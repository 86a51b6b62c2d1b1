"""``ucl`` command line: gen-data, pretrain, probe, eval, ablate, roc.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from . import pipeline
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, load_config
from .data import DataError

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2
COMMANDS = ("gen-data", "pretrain", "probe", "eval", "ablate", "roc")

log = logging.getLogger("ucl")


def _u64(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ucl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return p

    add("gen-data", "write the configured synthetic domains as train/test datasets")
    add("pretrain", "contrastive pretraining of encoder and projection head")
    p = add("probe", "train the classifier on frozen features")
    p.add_argument("--encoder", help="encoder checkpoint (default: <out>/encoder.ckpt)")
    p = add("eval", "AUC, accuracy and ROC per test domain")
    p.add_argument("--encoder", help="encoder checkpoint (default: <out>/encoder.ckpt)")
    p.add_argument("--classifier", help="classifier checkpoint (default: <out>/classifier.ckpt)")
    p.add_argument("--data-dirs", nargs="+", help="dataset directories to score instead of the configured domains")
    p = add("ablate", "run a comparative grid and write table.csv / table.txt")
    p.add_argument("--grid", required=True, choices=pipeline.GRIDS)
    p.add_argument("--rows", help="comma-separated subset of the grid rows")
    add("roc", "render <out>/eval/*.csv as an SVG plot")
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    return cfg


def _guard(path, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} already exists (use --force to overwrite)")


def run(args) -> None:
    cfg = _load(args)
    layout = pipeline.Layout.for_config(cfg, args.out)
    if args.command == "gen-data":
        summary = pipeline.run_gen_data(cfg, args.out, force=args.force)
        for name, info in summary.items():
            print(f"{name}: {info['train']} train / {info['test']} test  sha256={info['checksum']}")
    elif args.command == "pretrain":
        _guard(layout.encoder_ckpt, args.force)
        report = pipeline.run_pretrain(cfg, args.out)
        print(f"pretrain: final loss {report.losses[-1]:.4f} in {report.wall_clock:.1f}s -> {layout.encoder_ckpt}")
    elif args.command == "probe":
        _guard(layout.classifier_ckpt, args.force)
        report = pipeline.run_probe(cfg, args.out, args.encoder)
        print(f"probe: final loss {report.losses[-1]:.4f} in {report.wall_clock:.1f}s -> {layout.classifier_ckpt}")
    elif args.command == "eval":
        reports = pipeline.run_eval(cfg, args.out, args.encoder, args.classifier, args.data_dirs)
        for name, r in reports.items():
            print(f"{r.train_domain} -> {name}: AUC {r.auc:.4f}  accuracy {r.accuracy:.4f}")
    elif args.command == "ablate":
        rows = [r.strip() for r in args.rows.split(",")] if args.rows else None
        _guard(layout.ablate_dir(args.grid) / "table.csv", args.force)
        pipeline.run_ablate(cfg, args.out, args.grid, rows)
        print((layout.ablate_dir(args.grid) / "table.txt").read_text(encoding="utf-8"), end="")
    elif args.command == "roc":
        print(f"wrote {pipeline.run_roc(cfg, args.out)}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (DataError, CheckpointError, json.JSONDecodeError) as exc:
        print(f"ucl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"ucl {args.command}: invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"ucl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
