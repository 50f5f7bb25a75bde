"""Command-line entry point: ``ugdp <stage> --config PATH``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from . import pipeline
from .config import default_config_document, load_config
from .errors import InputError, NumericError, ProvenanceError, UgdpError

EXIT_OK, EXIT_INPUT, EXIT_PROVENANCE, EXIT_NUMERIC = 0, 2, 3, 4

STAGES = {
    "ingest": pipeline.ingest,
    "train": pipeline.train,
    "scan": pipeline.scan,
    "synthesize": pipeline.synthesize,
    "evaluate": pipeline.evaluate,
    "run-all": pipeline.run_all,
}


HELP = {
    "ingest": "read the CSV, apply the data options and write the original dataset",
    "train": "fit and calibrate both classifiers on every available dataset",
    "scan": "run the bias scan on every dataset with scan probabilities",
    "synthesize": "train the VAE and write the synthetic samples",
    "evaluate": "finish training and scanning, then write the overlap report",
    "run-all": "every stage in order, skipping finished artifacts",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ugdp", description=(
        "Compare anomalous subgroups found by bias scanning in a categorical dataset "
        "and in VAE-generated synthetic copies of it."))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", required=True, help="pipeline configuration JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--direction", choices=["over", "under"],
                       help="scan direction (overrides the config)")
    sub.add_parser("config-schema", help="print a configuration document with every default")
    return parser


def _configure(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.direction is not None:
        cfg.scan = replace(cfg.scan, direction=args.direction)
    cfg.validate()
    return pipeline.Run(cfg, args.out)


def _summary(result):
    if isinstance(result, dict) and "tables" in result:
        return result["tables"]
    if isinstance(result, dict):
        return {"/".join(k) if isinstance(k, tuple) else str(k): str(v)[:200]
                for k, v in result.items()}
    return result


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "config-schema":
        print(json.dumps(default_config_document(), indent=2, sort_keys=True))
        return EXIT_OK
    try:
        run = _configure(args)
        run.check_manifest()
        result = STAGES[args.command](run)
    except (InputError, FileNotFoundError) as exc:
        print(f"ugdp: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ProvenanceError as exc:
        print(f"ugdp: provenance error: {exc}", file=sys.stderr)
        return EXIT_PROVENANCE
    except (NumericError, FloatingPointError) as exc:
        print(f"ugdp: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except UgdpError as exc:
        print(f"ugdp: {exc}", file=sys.stderr)
        return exc.exit_code
    if args.command == "ingest":
        print(f"{result['records']} records, {result['attributes']} attributes")
    else:
        print(json.dumps(_summary(result), indent=1, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
