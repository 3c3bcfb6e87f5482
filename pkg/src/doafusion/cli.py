"""Command-line front end.

Subcommands:
  simulate          RMSE at a single (SNR, snapshots) point
  sweep-snr         RMSE versus the SNR grid
  sweep-snapshots   RMSE versus the snapshot grid
  sweep-iterations  RMSE versus the fusion iteration cap
  train-fusion      build a training set and fit the fusion network
  crlb              bound tables over the configured grids

Every subcommand reads the experiment configuration named by --config and
writes --out in --format (csv default). Exit code 0 on success; diagnostics
go to stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .arrays import AnalogCombiner
from .clustering import GMAXCS, GMIND
from .fusionnet import (
    TrainingConfig,
    generate_training_data,
    init_model,
    save_model,
    train,
)
from .harness import (
    crlb_table,
    emit_results,
    emit_table,
    monte_carlo_rmse,
    parse_spec,
    sweep_iterations,
)


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment configuration (JSON)")
    sub.add_argument("--out", required=True, help="output path")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--seed", type=int, default=None, help="override master_seed")
    sub.add_argument("--threads", type=int, default=1)
    sub.add_argument("--noiseless", action="store_true",
                     help="disable receiver noise (pipeline identity checks)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="doafusion", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "sweep-snr", "sweep-snapshots"):
        _add_common(subs.add_parser(name))
    it = subs.add_parser("sweep-iterations")
    _add_common(it)
    it.add_argument("--caps", default="0,1,2,3,4,5,6,7,8,9",
                    help="comma-separated iteration caps")
    tf = subs.add_parser("train-fusion")
    _add_common(tf)
    tf.add_argument("--train-config", default=None,
                    help="training configuration overrides (JSON)")
    tf.add_argument("--method", choices=(GMIND, GMAXCS), default=GMIND,
                    help="clustering rule used to build training rows")
    _add_common(subs.add_parser("crlb"))
    return parser


def _load_spec(args):
    spec = parse_spec(args.config)
    if args.seed is not None:
        spec = dataclasses.replace(spec, master_seed=args.seed)
    return spec


_TRAIN_FIELDS = {"angle_max_deg", "grid_step_deg", "snr_list_db", "epochs",
                 "batch_size", "learning_rate", "seed", "optimizer",
                 "hidden_dims", "stages"}


def _load_training_config(path, seed_override) -> TrainingConfig:
    kwargs = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        unknown = set(doc) - _TRAIN_FIELDS
        if unknown:
            raise ValueError(f"unknown field(s) in training config: {', '.join(sorted(unknown))}")
        kwargs = dict(doc)
        for key in ("snr_list_db", "hidden_dims"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if kwargs.get("stages") is not None:
            kwargs["stages"] = tuple(tuple(s) for s in kwargs["stages"])
    cfg = TrainingConfig(**kwargs)
    if seed_override is not None:
        cfg = dataclasses.replace(cfg, seed=seed_override)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _load_spec(args)
        if args.command == "simulate":
            if len(spec.snr_grid) != 1 or len(spec.snapshot_grid) != 1:
                raise ValueError("simulate expects single-point snr_grid and snapshot_grid")
            curve = monte_carlo_rmse(spec, "snr", threads=args.threads,
                                     noiseless=args.noiseless)
            emit_results(curve, args.out, args.format)
        elif args.command == "sweep-snr":
            curve = monte_carlo_rmse(spec, "snr", threads=args.threads,
                                     noiseless=args.noiseless)
            emit_results(curve, args.out, args.format)
        elif args.command == "sweep-snapshots":
            curve = monte_carlo_rmse(spec, "snapshots", threads=args.threads,
                                     noiseless=args.noiseless)
            emit_results(curve, args.out, args.format)
        elif args.command == "sweep-iterations":
            caps = [int(c) for c in args.caps.split(",") if c.strip() != ""]
            curve = sweep_iterations(spec, caps, threads=args.threads,
                                     noiseless=args.noiseless)
            emit_results(curve, args.out, args.format)
        elif args.command == "train-fusion":
            cfg = _load_training_config(args.train_config, args.seed)
            combiner = AnalogCombiner.zero_phases(spec.geometry)
            dataset = generate_training_data(
                spec.geometry, combiner, cfg, method=args.method,
                noiseless=args.noiseless, snapshots=spec.source.snapshots,
                threads=args.threads)
            dims = [spec.geometry.num_groups + 1, *cfg.hidden_dims, 1]
            model = init_model(dims, seed=cfg.seed)
            model, history = train(model, dataset, cfg)
            save_model(model, args.out)
            print(f"trained on {dataset.inputs.shape[0]} rows "
                  f"({dataset.dropped} dropped); final loss {history[-1]:.6g} deg^2")
        elif args.command == "crlb":
            emit_table(crlb_table(spec), args.out, args.format)
        else:  # pragma: no cover - argparse guards this
            raise ValueError(f"unknown command {args.command}")
    except Exception as exc:  # surface everything as a diagnostic, not a traceback
        print(f"doafusion: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
