"""Environment contract, trajectory types and the (optionally clipped) trajectory unroll."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .clipping import Plane, QGradients, checked_fraction, clipped_transition, discount_power
from .errors import (
    AdpError,
    BoundaryError,
    DegeneratePlaneError,
    DimensionError,
    TruncationError,
)
from .mlp import MlpNet

logger = logging.getLogger(__name__)

__all__ = [
    "AdpError",
    "BoundaryError",
    "ClipEvent",
    "DegeneratePlaneError",
    "DimensionError",
    "Environment",
    "ModelJacobians",
    "Plane",
    "QGradients",
    "Trajectory",
    "Transition",
    "TruncationError",
    "actor_action",
    "actor_state_vjp",
    "actor_weight_vjp",
    "evaluate_return",
    "first_crossed_plane",
    "step_transition",
    "trajectory_signature",
    "unroll",
]


@dataclass
class ModelJacobians:
    """Derivatives of the model f and cost U at (x, a).

    df_dx is n x n with element (i, j) = d f^j / d x^i; df_da is m x n likewise.
    """

    df_dx: np.ndarray
    df_da: np.ndarray
    dU_dx: np.ndarray
    dU_da: np.ndarray


class Environment(ABC):
    """Deterministic environment with a terminal set bounded by planes.

    Subclasses supply the model, cost, terminal cost, terminal-set membership, the
    candidate boundary planes, and the scaling between states and network inputs.
    """

    name: str = ""
    state_dim: int
    action_dim: int
    default_gamma: float = 1.0
    default_max_steps: int = 1000
    # network input i is state[obs_index[i]] * obs_scale[i]
    obs_index: Tuple[int, ...]
    obs_scale: np.ndarray
    # action = action_offset + action_slope * network output
    action_offset: float = 0.0
    action_slope: float = 1.0

    @abstractmethod
    def step(self, x: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, float]:
        """Unclipped model and cost: (f(x, a), U(x, a))."""

    @abstractmethod
    def jacobians(self, x: np.ndarray, a: np.ndarray) -> ModelJacobians:
        ...

    @abstractmethod
    def terminal_cost(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        """(phi(x), d phi / dx)."""

    @abstractmethod
    def is_terminal(self, x: np.ndarray) -> bool:
        ...

    @abstractmethod
    def boundary_planes(self) -> Sequence[Tuple[Plane, Callable[[np.ndarray], bool]]]:
        """Pairs of (plane, breached(x) -> bool) describing the terminal set."""

    @abstractmethod
    def draw_start_states(self, count: int, rng: np.random.Generator) -> List[np.ndarray]:
        ...

    @abstractmethod
    def sample_near_boundary(self, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """A non-terminal state and an action likely to carry it across a boundary."""

    @property
    def obs_dim(self) -> int:
        return len(self.obs_index)

    def boundary(self, x_from: np.ndarray, x_to: np.ndarray) -> Plane:
        """The plane crossed first by x_from -> x_to."""
        return first_crossed_plane(x_from, x_to, self.boundary_planes(), self.name)

    def observe(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64)[list(self.obs_index)] * self.obs_scale

    def gradient_from_observed(self, g_obs: np.ndarray) -> np.ndarray:
        """Chain a gradient taken w.r.t. the network input back to the full state."""
        g = np.zeros(self.state_dim)
        g[list(self.obs_index)] = np.asarray(g_obs) * self.obs_scale
        return g

    def gradient_to_observed(self, g: np.ndarray) -> np.ndarray:
        """Express a state gradient in network-input coordinates (dropped components ignored)."""
        return np.asarray(g, dtype=np.float64)[list(self.obs_index)] / self.obs_scale

    def action_from_output(self, y: np.ndarray) -> np.ndarray:
        return self.action_offset + self.action_slope * np.asarray(y, dtype=np.float64)

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.state_dim,):
            raise DimensionError(f"{self.name} state must have length {self.state_dim}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"{self.name} state has non-finite components: {x}")
        return x


def first_crossed_plane(
    x_from: np.ndarray,
    x_to: np.ndarray,
    candidates: Sequence[Tuple[Plane, Callable[[np.ndarray], bool]]],
    name: str = "",
) -> Plane:
    """Among the planes breached by x_to, the one with the smallest clipping fraction."""
    best = None
    for plane, breached in candidates:
        if not breached(x_to):
            continue
        lam = checked_fraction(x_from, x_to, plane)
        if best is None or lam < best[0]:
            best = (lam, plane)
    if best is None:
        raise BoundaryError(f"{name}: transition {x_from} -> {x_to} crosses no terminal plane")
    return best[1]


@dataclass
class ClipEvent:
    lam: float
    plane: Plane
    penultimate_index: int


@dataclass
class Transition:
    """One step of the unroll: the state actually reached and what was charged for it."""

    state: np.ndarray
    cost: float
    terminal: bool
    raw_state: np.ndarray
    raw_cost: float
    clip: Optional[ClipEvent] = None

    @property
    def lam(self) -> float:
        return self.clip.lam if self.clip is not None else 1.0


@dataclass
class Trajectory:
    states: List[np.ndarray]
    actions: List[np.ndarray]
    step_costs: List[float]
    terminal_cost: float = 0.0
    clip: Optional[ClipEvent] = None
    return_value: float = 0.0
    raw_final_state: Optional[np.ndarray] = None
    raw_final_cost: float = 0.0
    terminated: bool = True

    @property
    def length(self) -> int:
        """Number of steps T."""
        return len(self.actions)

    @property
    def duration(self) -> float:
        """T with the final step shortened to lambda when clipped."""
        if self.length == 0:
            return 0.0
        lam = self.clip.lam if self.clip is not None else 1.0
        return (self.length - 1) + lam


def step_transition(
    env: Environment,
    x: np.ndarray,
    a: np.ndarray,
    gamma: float,
    clip_enabled: bool,
    index: int = 0,
) -> Transition:
    """Advance one step; when the successor is terminal and clipping is on, clip it to the plane.

    A crossing that lands exactly on the plane (lambda == 1) is recorded without a clip event,
    so it follows the unclipped code path bit for bit.
    """
    raw_next, raw_cost = env.step(x, a)
    if not env.is_terminal(raw_next):
        return Transition(raw_next, raw_cost, False, raw_next, raw_cost)
    if not clip_enabled:
        return Transition(raw_next, raw_cost, True, raw_next, raw_cost)

    plane = env.boundary(x, raw_next)
    lam = checked_fraction(x, raw_next, plane)
    if lam >= 1.0:
        return Transition(raw_next, raw_cost, True, raw_next, raw_cost)
    clipped, cost = clipped_transition(x, raw_next, raw_cost, plane, lam=lam)
    logger.debug(f"{env.name}: clipped step {index} at lambda={lam:.6f} on plane '{plane.label}'")
    return Transition(clipped, cost, True, raw_next, raw_cost, ClipEvent(lam, plane, index))


def actor_action(env: Environment, actor: MlpNet, x: np.ndarray) -> np.ndarray:
    """A(x, z): the actor's output on the scaled state, rescaled into the action range."""
    return env.action_from_output(actor.forward(env.observe(x)))


def actor_weight_vjp(env: Environment, actor: MlpNet, x: np.ndarray, cotangent) -> np.ndarray:
    """(dA/dz) . cotangent, including the action rescale slope."""
    return actor.grad_weights(env.observe(x), env.action_slope * np.asarray(cotangent))


def actor_state_vjp(env: Environment, actor: MlpNet, x: np.ndarray, cotangent) -> np.ndarray:
    """(dA/dx) . cotangent, including the input scaling and action rescale slope."""
    g_obs = actor.grad_input(env.observe(x), env.action_slope * np.asarray(cotangent))
    return env.gradient_from_observed(g_obs)


def evaluate_return(traj: Trajectory, gamma: float) -> float:
    """Discounted cost of a trajectory, summed forward in time.

    The last step's cost is already lambda-scaled when clipped; the terminal cost is
    discounted by gamma ** lambda from the start of that step.
    """
    total = 0.0
    T = traj.length
    for t in range(T - 1):
        total += gamma ** t * traj.step_costs[t]
    lam = traj.clip.lam if traj.clip is not None else 1.0
    final = traj.step_costs[T - 1]
    if traj.terminated:
        final += discount_power(gamma, lam) * traj.terminal_cost
    total += gamma ** (T - 1) * final
    return total


def unroll(
    env: Environment,
    actor: MlpNet,
    x0,
    gamma: float,
    clip_enabled: bool,
    max_steps: Optional[int] = None,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Trajectory:
    """Roll the actor forward from x0 until the first terminal state.

    Args:
        env: The environment whose model, costs and terminal set are used.
        actor: The policy network; it sees observations and returns actions.
        x0: A non-terminal start state.
        gamma: Discount factor in (0, 1].
        clip_enabled: Whether the crossing step is cut at the terminal boundary.
        max_steps: Step limit, defaulting to the environment's own.
        noise_std: Standard deviation of Gaussian exploration noise on the actions.
        rng: Generator for the exploration noise; required when noise_std > 0.

    Returns:
        The trajectory, with its (clipped) return evaluated.

    Raises:
        TruncationError: max_steps ran out; the partial trajectory is attached.
    """
    x = env.check_state(x0)
    if env.is_terminal(x):
        raise AdpError(f"{env.name}: start state {x} is already terminal")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"discount factor must lie in (0, 1], got {gamma}")
    if noise_std < 0.0:
        raise ValueError(f"noise_std must be non-negative, got {noise_std}")
    if noise_std > 0.0 and rng is None:
        raise ValueError("a random generator is required when noise_std > 0")
    max_steps = env.default_max_steps if max_steps is None else max_steps
    if max_steps < 1:
        raise ValueError(f"max_steps must be at least 1, got {max_steps}")

    traj = Trajectory(states=[x], actions=[], step_costs=[])
    for t in range(max_steps):
        a = actor_action(env, actor, x)
        if noise_std > 0.0:
            a = a + rng.normal(0.0, noise_std, size=a.shape)
        tr = step_transition(env, x, a, gamma, clip_enabled, index=t)
        traj.states.append(tr.state)
        traj.actions.append(a)
        traj.step_costs.append(tr.cost)
        x = tr.state
        if tr.terminal:
            traj.terminal_cost = env.terminal_cost(tr.state)[0]
            traj.clip = tr.clip
            traj.raw_final_state = tr.raw_state
            traj.raw_final_cost = tr.raw_cost
            traj.return_value = evaluate_return(traj, gamma)
            return traj

    traj.terminated = False
    traj.return_value = evaluate_return(traj, gamma)
    raise TruncationError(
        f"{env.name}: no terminal state within {max_steps} steps from {traj.states[0]}",
        partial=traj,
    )


def trajectory_signature(traj: Trajectory) -> Tuple[int, Optional[str]]:
    """(T, label of the clipping plane) identifying the trajectory's discrete structure."""
    return traj.length, (traj.clip.plane.label if traj.clip is not None else None)
