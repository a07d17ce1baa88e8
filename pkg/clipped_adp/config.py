"""Experiment configuration: per-experiment defaults, key=value config files and run flags.

Ambient settings come from the process environment (optionally a .env file):

    CLIPPED_ADP_LOG_LEVEL   logging level name (default INFO)
    CLIPPED_ADP_OUT_DIR     directory for CSVs when --out is not given (default results)
    CLIPPED_ADP_JOBS        worker processes for independent seeds (default 1)
"""

import argparse
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

from dotenv import dotenv_values, load_dotenv

from .algorithms import AlgoConfig
from .envs import ENVIRONMENTS
from .errors import AdpError

logger = logging.getLogger(__name__)

ALGORITHMS = ("bptt", "dhp", "hdp")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
BATCH_SIZE = 5


class ConfigError(AdpError, ValueError):
    """Malformed flags, config file entries or parameter values."""


@dataclass(frozen=True)
class Settings:
    log_level: str = "INFO"
    out_dir: str = "results"
    jobs: int = 1


def load_settings() -> Settings:
    load_dotenv()
    jobs = os.getenv("CLIPPED_ADP_JOBS", "1")
    try:
        jobs = int(jobs)
    except ValueError:
        raise ConfigError(f"CLIPPED_ADP_JOBS must be an integer, got '{jobs}'")
    if jobs < 1:
        raise ConfigError(f"CLIPPED_ADP_JOBS must be at least 1, got {jobs}")
    log_level = os.getenv("CLIPPED_ADP_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(log_level), int):
        raise ConfigError(f"CLIPPED_ADP_LOG_LEVEL is not a logging level: '{log_level}'")
    return Settings(
        log_level=log_level,
        out_dir=os.getenv("CLIPPED_ADP_OUT_DIR", "results"),
        jobs=jobs,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    algo: str
    clip: bool
    iterations: int
    seeds: Tuple[int, ...]
    alpha: float
    beta: float
    gamma: float
    sigma: float
    dt: float
    critic_slope: float
    out_path: Optional[str] = None
    max_steps: Optional[int] = None
    batch_size: int = BATCH_SIZE
    snapshot_dir: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown env '{self.env}' (expected one of {sorted(ENVIRONMENTS)})")
        if self.algo not in ALGORITHMS:
            raise ConfigError(f"unknown algo '{self.algo}' (expected one of {list(ALGORITHMS)})")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be non-negative, got {self.iterations}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {list(self.seeds)}")
        if self.alpha < 0.0 or self.beta < 0.0 or self.sigma < 0.0:
            raise ConfigError("alpha, beta and sigma must be non-negative")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not self.dt > 0.0 or not self.critic_slope > 0.0:
            raise ConfigError("dt and critic_slope must be positive")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be at least 1, got {self.max_steps}")
        return self

    @property
    def tag(self) -> str:
        return f"{self.env}_{self.algo}_{'clip' if self.clip else 'noclip'}"

    def algo_config(self, batch) -> AlgoConfig:
        return AlgoConfig(
            actor_lr=self.alpha,
            critic_lr=self.beta,
            gamma=self.gamma,
            noise_std=self.sigma if self.algo == "hdp" else 0.0,
            clip_enabled=self.clip,
            batch=list(batch),
            max_steps=self.max_steps,
        )


# Learning rates, discount, exploration and critic output slope per (env, algo).
DEFAULTS: Dict[Tuple[str, str], Dict[str, float]] = {
    ("lander", "bptt"): dict(alpha=0.01, beta=0.0, gamma=1.0, sigma=0.0, critic_slope=1.0),
    ("lander", "dhp"): dict(alpha=0.001, beta=1e-5, gamma=1.0, sigma=0.0, critic_slope=20.0),
    ("lander", "hdp"): dict(alpha=1e-5, beta=1e-5, gamma=1.0, sigma=0.1, critic_slope=10.0),
    ("cartpole", "bptt"): dict(alpha=0.1, beta=0.0, gamma=0.97, sigma=0.0, critic_slope=1.0),
    # critic rate is 100x the actor rate
    ("cartpole", "dhp"): dict(alpha=1e-4, beta=1e-2, gamma=0.97, sigma=0.0, critic_slope=0.1),
}
DEFAULT_DT = {"lander": 1.0, "cartpole": 0.02}
DEFAULT_ITERATIONS = {
    ("lander", "bptt"): 10000,
    ("lander", "dhp"): 10000,
    ("lander", "hdp"): 10000,
    ("cartpole", "bptt"): 1000,
    ("cartpole", "dhp"): 5000,
    ("cartpole", "hdp"): 5000,
}


def default_config(env: str = "lander", algo: str = "bptt", clip: bool = True) -> ExperimentConfig:
    if env not in ENVIRONMENTS:
        raise ConfigError(f"unknown env '{env}' (expected one of {sorted(ENVIRONMENTS)})")
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algo '{algo}' (expected one of {list(ALGORITHMS)})")
    rates = DEFAULTS.get((env, algo))
    if rates is None:
        logger.warning(f"No published settings for {env}/{algo}; using lander {algo} rates with gamma=0.97")
        rates = dict(DEFAULTS[("lander", algo)], gamma=0.97)
    return ExperimentConfig(
        env=env,
        algo=algo,
        clip=clip,
        iterations=DEFAULT_ITERATIONS[(env, algo)],
        seeds=DEFAULT_SEEDS,
        dt=DEFAULT_DT[env],
        **rates,
    )


def parse_bool(text: str) -> bool:
    value = str(text).strip().lower()
    if value in ("on", "true", "yes", "1"):
        return True
    if value in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got '{text}'")


def parse_seeds(text: str) -> Tuple[int, ...]:
    parts = [part.strip() for part in str(text).split(",") if part.strip()]
    if not parts:
        raise ValueError("empty seed list")
    return tuple(int(part) for part in parts)


CONVERTERS = {
    "env": str,
    "algo": str,
    "clip": parse_bool,
    "iterations": int,
    "seeds": parse_seeds,
    "alpha": float,
    "beta": float,
    "gamma": float,
    "sigma": float,
    "dt": float,
    "critic_slope": float,
    "out_path": str,
    "max_steps": int,
    "batch_size": int,
    "snapshot_dir": str,
}


def read_config_file(path: str) -> Dict[str, object]:
    """Parse a key=value file; keys are the lower-case field names."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path)
    unknown = sorted(set(raw) - set(CONVERTERS))
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    values = {}
    for key, text in raw.items():
        if text is None:
            raise ConfigError(f"{path}: key '{key}' has no value")
        try:
            values[key] = CONVERTERS[key](text)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for '{key}': {exc}")
    return values


class StrictParser(argparse.ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting on usage errors."""

    def error(self, message):
        raise ConfigError(message)


class _Once(argparse.Action):
    """Store a value, rejecting a repeated flag that disagrees with the first."""

    def __call__(self, parser, namespace, values, option_string=None):
        given = namespace.__dict__.setdefault("_given", {})
        if self.dest in given and given[self.dest] != values:
            raise ConfigError(
                f"conflicting values for {option_string}: {given[self.dest]!r} and {values!r}"
            )
        given[self.dest] = values
        setattr(namespace, self.dest, values)


def add_run_arguments(parser: argparse.ArgumentParser) -> argparse.ArgumentParser:
    parser.add_argument("--config", help="key=value experiment file")
    parser.add_argument("--env", choices=sorted(ENVIRONMENTS), action=_Once)
    parser.add_argument("--algo", choices=ALGORITHMS, action=_Once)
    parser.add_argument("--clip", type=parse_bool, action=_Once, help="on or off")
    parser.add_argument("--iterations", type=int, action=_Once)
    parser.add_argument("--seeds", type=parse_seeds, action=_Once, help="comma-separated, e.g. 0,1,2,3,4")
    parser.add_argument("--alpha", type=float, action=_Once, help="actor learning rate")
    parser.add_argument("--beta", type=float, action=_Once, help="critic learning rate")
    parser.add_argument("--gamma", type=float, action=_Once)
    parser.add_argument("--sigma", type=float, action=_Once, help="HDP exploration noise")
    parser.add_argument("--dt", type=float, action=_Once)
    parser.add_argument("--critic-slope", dest="critic_slope", type=float, action=_Once)
    parser.add_argument("--out", dest="out_path", action=_Once, help="combined CSV path")
    parser.add_argument("--max-steps", dest="max_steps", type=int, action=_Once)
    parser.add_argument("--batch-size", dest="batch_size", type=int, action=_Once)
    parser.add_argument("--snapshot-dir", dest="snapshot_dir", action=_Once,
                        help="write final network weights per seed here")
    return parser


def parse_config(argv: Sequence[str], config_file: Optional[str] = None) -> ExperimentConfig:
    """Flags override the config file, which overrides the per-experiment defaults."""
    parser = add_run_arguments(StrictParser(prog="clipped-adp run", add_help=False))
    args = parser.parse_args(list(argv))
    return resolve_config(args, config_file)


def resolve_config(args: argparse.Namespace, config_file: Optional[str] = None) -> ExperimentConfig:
    path = getattr(args, "config", None) or config_file
    file_values = read_config_file(path) if path else {}

    overrides = dict(file_values)
    for key in CONVERTERS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value

    env = overrides.pop("env", "lander")
    algo = overrides.pop("algo", "bptt")
    clip = overrides.pop("clip", True)
    cfg = replace(default_config(env, algo, clip), **overrides)
    return cfg.validate()


def config_lines(cfg: ExperimentConfig) -> List[str]:
    """key=value lines that read_config_file turns back into cfg."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if value is None:
            continue
        if isinstance(value, bool):
            value = "on" if value else "off"
        elif isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name}={value}")
    return lines
