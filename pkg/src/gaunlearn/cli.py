"""Command-line driver.

Exit codes: 0 success, 2 invalid input, 3 solver failure or divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import dataset as dsm
from . import model as mdl
from .errors import NumericalError, ValidationError
from .experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    StageError,
    load_config,
    run_generalize,
    run_partial,
    run_pipeline,
    run_sweep,
    validate_config,
    write_sweep_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("gaunlearn")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaunlearn", description="Gradient-ascent unlearning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="master seed; overrides the config")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
        p.add_argument("--mode", choices=("plain", "thresholded"), help="multiplier recovery mode")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.seed is not None:
        cfg = ExperimentConfig(seed=args.seed)
    else:
        raise ValidationError("a master seed is required: pass --seed or a --config with 'seed'")
    cfg = replace(cfg, experiment=args.command)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.mode is not None:
        cfg = replace(cfg, mode=args.mode)
    validate_config(cfg)
    return cfg


def execute(cfg: ExperimentConfig, out: Path) -> dict:
    """Run one experiment and write its artifacts; returns a short summary."""
    out.mkdir(parents=True, exist_ok=True)
    cmd = cfg.experiment
    if cmd in ("gen", "train", "certify"):
        record, state = run_partial(cfg, cmd)
        dsm.save(state.ds, out / "dataset.json")
        if cmd == "train":
            mdl.save(state.raw, out / "params.json")
        elif cmd == "certify":
            mdl.save(state.params, out / "params.json")
    elif cmd == "sweep":
        record, rows = run_sweep(cfg)
        write_sweep_csv(rows, out)
    elif cmd == "generalize":
        record = run_generalize(cfg)
    else:
        record = run_pipeline(cfg)
    record.write(out)
    summary = {"experiment": cmd, "out": str(out)}
    if record.success:
        summary.update({key: record.success[key] for key in ("eps_measured", "delta_measured", "tau_measured")})
    return summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        summary = execute(cfg, args.out)
    except StageError as exc:
        exc.record.write(args.out)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc.cause, NumericalError) else EXIT_INVALID
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
