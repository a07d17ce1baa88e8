"""Command-line entry point.

    python -m clipped_adp run --env cartpole --algo dhp --clip on
    python -m clipped_adp gradcheck --quick

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .algorithms import bptt_train_step, dhp_train_step, evaluate_batch, hdp_train_step
from .config import (
    ConfigError,
    ExperimentConfig,
    Settings,
    StrictParser,
    add_run_arguments,
    config_lines,
    load_settings,
    resolve_config,
)
from .envs import make_env
from .errors import AdpError, TruncationError
from .gradcheck import run_all_checks
from .mlp import mlp_init, save_snapshot

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["iteration", "seed", "mean_J", "mean_duration"]
TRUNCATION_LIMIT = 0.5
FLOAT_FORMAT = "%.12g"


def build_nets(cfg: ExperimentConfig, env, rng: np.random.Generator):
    """Actor with a tanh output, plus the critic the algorithm needs (linear output, cfg slope)."""
    actor = mlp_init(env.obs_dim, env.action_dim, 1.0, rng, output_activation="tanh")
    critic = None
    if cfg.algo == "dhp":
        critic = mlp_init(env.obs_dim, env.obs_dim, cfg.critic_slope, rng)
    elif cfg.algo == "hdp":
        critic = mlp_init(env.obs_dim, 1, cfg.critic_slope, rng)
    return actor, critic


def run_seed(cfg: ExperimentConfig, seed: int) -> pd.DataFrame:
    """Train one seed; row 0 is the untrained evaluation, row i the i-th training iteration."""
    rng = np.random.default_rng(seed)
    env = make_env(cfg.env, dt=cfg.dt, max_steps=cfg.max_steps)
    actor, critic = build_nets(cfg, env, rng)
    batch = env.draw_start_states(cfg.batch_size, rng)
    algo_cfg = cfg.algo_config(batch)
    track_duration = cfg.env == "cartpole"

    logger.info(f"Seed {seed}: {cfg.tag}, {cfg.iterations} iterations, {actor.weight_count} actor weights")
    mean_J, mean_duration, truncations = evaluate_batch(env, actor, algo_cfg)
    rows = [(0, seed, mean_J, mean_duration if track_duration else None)]
    truncated_iterations = 0

    for iteration in range(1, cfg.iterations + 1):
        if cfg.algo == "bptt":
            result = bptt_train_step(env, actor, algo_cfg, rng)
        elif cfg.algo == "dhp":
            result = dhp_train_step(env, actor, critic, algo_cfg, rng)
        else:
            result = hdp_train_step(env, actor, critic, algo_cfg, rng)
        if result.truncations:
            truncated_iterations += 1
        rows.append((iteration, seed, result.mean_return, result.mean_duration if track_duration else None))
        logger.debug(
            f"Seed {seed} iteration {iteration}: J={result.mean_return:.6f} "
            f"duration={result.mean_duration:.3f} truncated={result.truncations}"
        )

    if cfg.iterations and truncated_iterations / cfg.iterations > TRUNCATION_LIMIT:
        raise TruncationError(
            f"seed {seed}: {truncated_iterations} of {cfg.iterations} iterations hit max_steps"
        )

    if cfg.snapshot_dir:
        snapshot_dir = Path(cfg.snapshot_dir)
        save_snapshot(actor, snapshot_dir / f"{cfg.tag}_seed{seed}_actor.json")
        if critic is not None:
            save_snapshot(critic, snapshot_dir / f"{cfg.tag}_seed{seed}_critic.json")

    logger.info(f"Seed {seed}: final mean J {rows[-1][2]:.6f}")
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def run_experiment(cfg: ExperimentConfig, settings: Optional[Settings] = None) -> Path:
    """Trains every seed and writes one CSV per seed plus a combined CSV.

    Args:
        cfg: The experiment to run.
        settings: Output directory and worker count; defaults apply when omitted.

    Returns:
        The path of the combined CSV. The resolved configuration sits next to it as a .cfg file.
    """
    settings = settings or Settings()
    cfg.validate()
    out_path = Path(cfg.out_path) if cfg.out_path else Path(settings.out_dir) / f"{cfg.tag}.csv"

    if settings.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(settings.jobs, len(cfg.seeds))) as executor:
            frames = list(executor.map(run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        frames = [run_seed(cfg, seed) for seed in cfg.seeds]

    for seed, frame in zip(cfg.seeds, frames):
        _write_csv(frame, out_path.with_name(f"{out_path.stem}_seed{seed}.csv"))
    combined = pd.concat(frames, ignore_index=True).sort_values(["seed", "iteration"], kind="stable")
    _write_csv(combined, out_path)
    out_path.with_suffix(".cfg").write_text("\n".join(config_lines(cfg)) + "\n")
    logger.info(f"Wrote {len(combined)} rows to {out_path}")
    return out_path


def build_parser() -> StrictParser:
    parser = StrictParser(prog="clipped-adp", description="Clipped adaptive dynamic programming experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    commands = parser.add_subparsers(dest="command", required=True)
    add_run_arguments(commands.add_parser("run", help="train and write learning-curve CSVs"))
    check = commands.add_parser("gradcheck", help="verify analytic derivatives numerically")
    check.add_argument("--quick", action="store_true", help="fewer samples per check")
    check.add_argument("--seed", type=int, default=0)
    return parser


def _gradcheck(quick: bool, seed: int) -> int:
    reports = run_all_checks(np.random.default_rng(seed), quick=quick)
    for report in reports:
        print(report.line())
    failed = [report.name for report in reports if not report.passed]
    print(f"\n{len(reports) - len(failed)}/{len(reports)} checks passed")
    return 2 if failed else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = load_settings()
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "gradcheck":
            return _gradcheck(args.quick, args.seed)
        cfg = resolve_config(args)
        path = run_experiment(cfg, settings)
        print(f"✓ Wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1
    except (AdpError, ValueError, FloatingPointError, OSError) as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
