"""Clipped adaptive dynamic programming: BPTT, DHP and HDP with terminal-boundary clipping."""

from .core import Environment, Trajectory, unroll
from .envs import CartPoleEnv, LanderEnv, make_env
from .errors import AdpError
from .mlp import MlpNet, mlp_init

__version__ = "0.1.0"

__all__ = [
    "AdpError",
    "CartPoleEnv",
    "Environment",
    "LanderEnv",
    "MlpNet",
    "Trajectory",
    "make_env",
    "mlp_init",
    "unroll",
]
