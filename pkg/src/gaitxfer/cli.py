"""Command-line entry point: deterministic, config-driven pipeline runs.

Subcommands mirror the pipeline stages. A JSON config file supplies
defaults; flags override individual fields. Set GAITXFER_LOG_LEVEL
(DEBUG, INFO, WARNING, ...) to control logging verbosity.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

from .pipeline import (
    STAGES,
    PipelineConfig,
    PipelineError,
    apply_seed,
    config_fingerprint,
    config_to_dict,
    load_config,
    run_stage,
)
from .reduce import FEATURE_KINDS
from .sigprep import CANONICAL_SENSOR_ORDER

logger = logging.getLogger(__name__)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gaitxfer",
        description=(
            "Train an accelerometer autoencoder on daily-activity data and "
            "reuse its encoder for multi-sensor gait classification."
        ),
    )
    parser.add_argument(
        "command",
        choices=sorted(STAGES) + ["show-config"],
        help="pipeline stage to run",
    )
    parser.add_argument("--config", help="JSON config file; flags override its fields")
    parser.add_argument("--out", help="output directory for all artifacts")
    parser.add_argument("--seed", type=int, help="master seed recorded in every artifact")
    parser.add_argument(
        "--variant", choices=FEATURE_KINDS, help="feature variant to extract and evaluate"
    )
    parser.add_argument("--classifier", choices=("mlp", "svm"), help="target-task classifier")
    parser.add_argument(
        "--sensors",
        help=f"comma-separated placements (default: all of {','.join(CANONICAL_SENSOR_ORDER)})",
    )
    parser.add_argument("--pca-k", type=int, dest="pca_k", help="requested PCA components")
    parser.add_argument(
        "--splits", type=int, dest="n_splits", help="number of random subject splits"
    )
    parser.add_argument(
        "--source-manifest", dest="source_manifest", help="existing source dataset manifest"
    )
    parser.add_argument(
        "--target-manifest", dest="target_manifest", help="existing target dataset manifest"
    )
    parser.add_argument(
        "--synth-kind",
        choices=("benchmark", "probe"),
        dest="synth_kind",
        help="bundled dataset family for the synth stage",
    )
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.out is not None:
        overrides["out_dir"] = args.out
    for name in (
        "variant", "classifier", "pca_k", "n_splits",
        "source_manifest", "target_manifest", "synth_kind",
    ):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.sensors is not None:
        overrides["sensors"] = tuple(s.strip() for s in args.sensors.split(",") if s.strip())
    if overrides:
        try:
            cfg = dataclasses.replace(cfg, **overrides)
        except ValueError as exc:
            raise PipelineError(str(exc)) from exc
    if args.seed is not None:
        cfg = apply_seed(cfg, args.seed)
    return cfg


def configure_logging():
    level_name = os.environ.get("GAITXFER_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "show-config":
            payload = config_to_dict(cfg)
            payload["config_fingerprint"] = config_fingerprint(cfg)
            print(json.dumps(payload, sort_keys=True, indent=2))
            return 0
        result = run_stage(args.command, cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, sort_keys=True, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
