"""Command-line entry point: ``hwl4f <verb> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (non-finite loss or update).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiment
from .analysis import ConfigError as AnalysisConfigError
from .analysis import LatencyModel
from .config import ConfigError, ExperimentConfig, load_config
from .dataset import DataConfigError, IdxFormatError
from .fieldio import FieldFormatError
from .model import load_checkpoint
from .trainers import ConfigurationError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "backend", None):
        changes["backend"] = args.backend
    if getattr(args, "out", None):
        changes["output_dir"] = str(args.out)
    if changes:
        cfg = cfg.replace(**changes)
    if getattr(args, "seed", None):
        cfg = cfg.replace(data=replace(cfg.data, seeds=tuple(args.seed)))
    return cfg


def _emit(doc) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def cmd_train(args) -> int:
    cfg = _config(args)
    if args.algorithm:
        cfg = cfg.replace(algo=replace(cfg.algo, algorithm=args.algorithm))
    if args.epochs is not None:
        cfg = cfg.replace(hyper=replace(cfg.hyper, epochs=args.epochs))
    _emit(experiment.cmd_train(cfg, Path(cfg.output_dir), workers=args.workers))
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    report = experiment.cmd_compare(cfg, Path(cfg.output_dir), workers=args.workers)
    _emit({k: report[k] for k in ("accuracy_gap", "same_splits")}
          | {a: {"mean": report[a]["mean"], "std": report[a]["std"]} for a in ("bp", "pepita")})
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    params, manifest = load_checkpoint(args.checkpoint)
    seed = args.seed[0] if args.seed else manifest["seed"]
    _emit(experiment.cmd_eval(cfg, params, seed))
    return EXIT_OK


def cmd_ssim_study(args) -> int:
    cfg = _config(args)
    seed = args.seed[0] if args.seed else None
    report = experiment.cmd_ssim_study(cfg, args.kernel, args.count, seed, args.sigma)
    if args.out:
        experiment.write_atomic(Path(args.out) / f"ssim_{args.kernel}.json",
                                json.dumps(report, indent=2, sort_keys=True))
    _emit({k: v for k, v in report.items() if k != "per_image"})
    return EXIT_OK


def cmd_flops(args) -> int:
    if any(n < 2 or n % 2 for n in args.n):
        raise ConfigError(f"grid sizes must be even and >= 2: {args.n}")
    text = experiment.cmd_flops(args.n, args.K, args.C)
    if args.out:
        experiment.write_atomic(Path(args.out) / "flops.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_throughput(args) -> int:
    kernels = 1 if args.batched else args.kernels
    model = LatencyModel(args.setup_ms, args.exposure_ms, args.overhead_ms, kernels)
    _emit(experiment.cmd_throughput(model))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hwl4f", description="4f correlator HWL experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, workers=False):
        p.add_argument("--config", type=Path, help="YAML experiment config")
        p.add_argument("--seed", type=int, action="append", help="repeatable")
        p.add_argument("--backend", choices=["device", "software", "oracle"])
        p.add_argument("--out", type=Path, help="output directory")
        if workers:
            p.add_argument("--workers", type=int, default=1, help="parallel seeds")

    p = sub.add_parser("train", help="train over all seeds, write CSV/JSON records")
    common(p, workers=True)
    p.add_argument("--algorithm", choices=["bp", "pepita", "mempepita"])
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="BP vs PEPITA with identical seeds and splits")
    common(p, workers=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval", help="test accuracy of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ssim-study", help="software vs device convolution SSIM")
    common(p)
    p.add_argument("--kernel", choices=["edge_detect", "gaussian", "random"],
                   default="edge_detect")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--sigma", type=float, action="append",
                   help="camera noise level; repeat for a sweep")
    p.set_defaults(func=cmd_ssim_study)

    p = sub.add_parser("flops", help="analytic update-flop table as CSV")
    p.add_argument("--n", type=int, action="append", help="grid sizes (repeatable)")
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--C", type=int, default=10)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("throughput", help="SLM/camera latency model")
    p.add_argument("--setup-ms", type=float, default=25.0)
    p.add_argument("--exposure-ms", type=float, default=20.0)
    p.add_argument("--overhead-ms", type=float, default=0.0)
    p.add_argument("--kernels", type=int, default=8, help="sequential passes per image")
    p.add_argument("--batched", action="store_true", help="all kernels in one frame")
    p.set_defaults(func=cmd_throughput)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "n", "absent") is None:
        args.n = [16, 32, 64, 128, 256]
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, AnalysisConfigError, ValueError) as exc:
        if isinstance(exc, (DataConfigError, IdxFormatError, FieldFormatError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
