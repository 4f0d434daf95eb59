"""
Command-line entry point.

    python cli.py simulate --seed 42 --n 600 --out data/
    python cli.py adapt --source a.csv --target b.csv --p 5 --out results/
    python cli.py sweep --seed 42 --grid 360 --out sweep.csv
    python cli.py experiment-sim --seed 42 --out results/
    python cli.py experiment-embed --source a.csv --target b.csv --p 5 --out report.json
    python cli.py experiment-embed --seeds 10 --p full --noise-scale 0.05 --out report.json

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

import settings
from dataset_io import read_labeled_csv, write_dataset_csv, write_sweep_csv
from errors import EXIT_OK, EXIT_USAGE, ShiftCorrectionError, exit_code_for
from experiments import (
    run_adaptation,
    run_embedding_experiment,
    run_embedding_replicates,
    run_simulated_experiment,
    simulated_domains,
    whitened_sweep,
)
from simulation import count_local_minima, synthetic_embeddings

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Handlers
# ---------------------------------------------------------------------------

def _configs(args: argparse.Namespace):
    kcfg = settings.default_kernel_config(sigma_sq=getattr(args, "sigma_sq", None))
    ocfg = settings.default_optimizer_config(
        tau=getattr(args, "tau", None),
        max_iters=getattr(args, "max_iters", None),
    )
    return kcfg, ocfg, settings.default_train_config()


def cmd_simulate(args: argparse.Namespace) -> int:
    domains = simulated_domains(args.seed, args.n, args.obs_dim)
    out = Path(args.out)
    write_dataset_csv(domains.latent_source, out / "latent_source.csv")
    write_dataset_csv(domains.latent_target, out / "latent_target.csv")
    write_dataset_csv(domains.source, out / "source.csv")
    write_dataset_csv(domains.target, out / "target.csv")
    logger.info(f"Simulated {args.n} instances (seed {args.seed}) written to {out}")
    return EXIT_OK


def cmd_adapt(args: argparse.Namespace) -> int:
    kcfg, ocfg, train_cfg = _configs(args)
    report, result = run_adaptation(
        read_labeled_csv(args.source),
        read_labeled_csv(args.target),
        p=args.p,
        kcfg=kcfg,
        ocfg=ocfg,
        train_cfg=train_cfg,
        n_restarts=args.restarts,
        labeled_fraction=args.labeled_fraction,
        seed=args.seed,
        workers=args.workers,
        timing=args.timing,
        out_dir=Path(args.out),
    )
    logger.info(f"Adaptation done: MMD^2 {result.mmd_before:.6e} -> {result.mmd_after:.6e}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    kcfg, _, _ = _configs(args)
    if args.source and args.target:
        source, target = read_labeled_csv(args.source), read_labeled_csv(args.target)
    else:
        domains = simulated_domains(args.seed, args.n)
        source, target = domains.source, domains.target
    rows, _, _ = whitened_sweep(source, target, args.grid, kcfg)
    write_sweep_csv(rows, args.out)
    logger.info(f"Local minima per family: {count_local_minima(rows)}")
    return EXIT_OK


def cmd_experiment_sim(args: argparse.Namespace) -> int:
    kcfg, ocfg, train_cfg = _configs(args)
    run_simulated_experiment(
        seed=args.seed,
        out_dir=Path(args.out),
        kcfg=kcfg,
        ocfg=ocfg,
        train_cfg=train_cfg,
        n_restarts=args.restarts,
        labeled_fraction=args.labeled_fraction,
        grid_size=args.grid,
        workers=args.workers,
        timing=args.timing,
    )
    return EXIT_OK


def cmd_experiment_embed(args: argparse.Namespace) -> int:
    kcfg, ocfg, train_cfg = _configs(args)
    if args.source and args.target:
        if args.seeds > 1 or args.noise_scale:
            logger.error("--seeds and --noise-scale only apply to synthetic embeddings")
            return EXIT_USAGE
        source, target = read_labeled_csv(args.source), read_labeled_csv(args.target)
    elif args.seeds > 1:
        logger.info(f"No embedding files given; aggregating {args.seeds} synthetic embedding sets (seed {args.seed})")
        run_embedding_replicates(
            n_seeds=args.seeds,
            seed=args.seed,
            labeled_fraction=args.labeled_fraction,
            p=args.p,
            kcfg=kcfg,
            ocfg=ocfg,
            train_cfg=train_cfg,
            n_restarts=args.restarts,
            workers=args.workers,
            timing=args.timing,
            out_path=Path(args.out),
            noise_scale=args.noise_scale,
        )
        return EXIT_OK
    else:
        logger.info(f"No embedding files given; generating synthetic embeddings (seed {args.seed})")
        source, target = synthetic_embeddings(noise_scale=args.noise_scale, seed=args.seed)
    run_embedding_experiment(
        source,
        target,
        labeled_fraction=args.labeled_fraction,
        p=args.p,
        kcfg=kcfg,
        ocfg=ocfg,
        train_cfg=train_cfg,
        n_restarts=args.restarts,
        seed=args.seed,
        workers=args.workers,
        timing=args.timing,
        out_path=Path(args.out),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _at_least(minimum: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be >= {minimum}, got {value}")
        return value
    return parse


def _latent_dim(text: str):
    try:
        return settings.parse_latent_dim(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1 or 'full', got {text!r}")


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {value}")
    return value


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma-sq", type=float, default=None, help=f"Kernel bandwidth sigma^2 (default {settings.SIGMA_SQ})")
    p.add_argument("--tau", type=float, default=None, help=f"Initial Cayley step size (default {settings.TAU})")
    p.add_argument("--max-iters", type=int, default=None, help=f"Optimizer iteration cap (default {settings.MAX_ITERS})")
    p.add_argument("--restarts", type=_at_least(1), default=settings.N_RESTARTS, help="Semi-supervised restart count")
    p.add_argument("--labeled-fraction", type=_fraction, default=settings.LABELED_FRACTION,
                   help="Fraction of target instances whose labels select the restart")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper)
    common.add_argument("--workers", type=_at_least(1), default=settings.WORKERS, help="Thread pool size for restarts and tasks")
    common.add_argument("--timing", action="store_true", help="Record wall-clock runtime in reports")

    parser = argparse.ArgumentParser(
        prog="shift-correct",
        description="Correct affine domain shift by whitening and MMD-optimal orthogonal alignment.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Sample the two-domain Gaussian mixture to CSV")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=_at_least(2), default=600)
    p.add_argument("--obs-dim", type=int, default=5)
    p.add_argument("--out", required=True, help="Output directory")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("adapt", parents=[common], help="Align a target CSV onto a source CSV")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--p", type=_latent_dim, default=settings.LATENT_DIM,
                   help="Shared latent dimension, or 'full' for every shared positive eigen-direction")
    p.add_argument("--seed", type=int, default=0)
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="Output directory for report.json, z_a.csv, z_b.csv")
    p.set_defaults(handler=cmd_adapt)

    p = sub.add_parser("sweep", parents=[common], help="MMD over 2-d rotations and reflections")
    p.add_argument("--source", default=None, help="Source CSV (default: simulated data)")
    p.add_argument("--target", default=None, help="Target CSV (default: simulated data)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--n", type=_at_least(2), default=600)
    p.add_argument("--grid", type=_at_least(3), default=settings.SWEEP_GRID)
    p.add_argument("--sigma-sq", type=float, default=None)
    p.add_argument("--out", required=True, help="Output CSV path")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("experiment-sim", parents=[common], help="Run the simulated-mixture experiment")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--grid", type=_at_least(3), default=settings.SWEEP_GRID)
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="Output directory for report.json and sweep.csv")
    p.set_defaults(handler=cmd_experiment_sim)

    p = sub.add_parser("experiment-embed", parents=[common], help="Run all binary tasks on two embedding CSVs")
    p.add_argument("--source", default=None, help="Source embeddings with a label column")
    p.add_argument("--target", default=None, help="Target embeddings with a label column")
    p.add_argument("--p", type=_latent_dim, default=settings.LATENT_DIM, help="Shared latent dimension or 'full'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=_at_least(1), default=1,
                   help="Synthetic mode only: number of independently drawn embedding sets to aggregate")
    p.add_argument("--noise-scale", type=float, default=0.0,
                   help="Synthetic mode only: isotropic observation noise (gives full-rank covariances)")
    _add_solver_flags(p)
    p.add_argument("--out", required=True, help="Output JSON report path")
    p.set_defaults(handler=cmd_experiment_embed)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    logging.basicConfig(
        level=args.log_level,
        format=settings.LOG_FORMAT,
        datefmt=settings.LOG_DATEFMT,
        force=True,
    )
    if bool(getattr(args, "source", None)) != bool(getattr(args, "target", None)):
        logger.error("--source and --target must be given together")
        return EXIT_USAGE

    try:
        return args.handler(args)
    except ValidationError as exc:
        logger.error(f"Invalid configuration: {exc}")
        return EXIT_USAGE
    except ShiftCorrectionError as exc:
        logger.error(str(exc))
        return exc.exit_code
    except (OSError, ArithmeticError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}", exc_info=True)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
