"""Learning algorithms: BPTT for control, DHP and HDP, each with optional boundary clipping.

All three drive their actor updates from the same Q-gradients. Steps that end inside the
terminal set go through terminal_q_gradients, which switches to the clipped model and cost
when the unroll clipped that step.
"""

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .clipping import QGradients, clipped_jacobians, clipped_q_gradients, discount_power
from .core import (
    Environment,
    ModelJacobians,
    Trajectory,
    Transition,
    actor_action,
    actor_state_vjp,
    actor_weight_vjp,
    evaluate_return,
    step_transition,
    unroll,
)
from .errors import AdpError, DimensionError, TruncationError
from .mlp import MlpNet

logger = logging.getLogger(__name__)


@dataclass
class AlgoConfig:
    actor_lr: float
    critic_lr: float = 0.0
    gamma: float = 1.0
    noise_std: float = 0.0
    clip_enabled: bool = True
    batch: List[np.ndarray] = field(default_factory=list)
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.actor_lr < 0.0 or self.critic_lr < 0.0:
            raise ValueError(f"learning rates must be non-negative, got {self.actor_lr}, {self.critic_lr}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"discount factor must lie in (0, 1], got {self.gamma}")
        if self.noise_std < 0.0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")
        self.batch = [np.asarray(x, dtype=np.float64) for x in self.batch]


@dataclass
class BpttAccumulator:
    """Running state of the backward pass: p = dJ/dx at the current step, and dJ/dz so far."""

    p_vec: np.ndarray
    dJ_dz: np.ndarray


class TrainStepResult(NamedTuple):
    actor: MlpNet
    critic: Optional[MlpNet]
    mean_return: float
    mean_duration: float
    truncations: int


class EpisodeResult(NamedTuple):
    actor: MlpNet
    critic: MlpNet
    return_value: float
    trajectory: Trajectory


def unclipped_q_gradients(jac: ModelJacobians, p_next, gamma: float) -> QGradients:
    p_next = np.asarray(p_next, dtype=np.float64)
    if p_next.shape != (jac.df_dx.shape[1],):
        raise DimensionError(f"p has shape {p_next.shape}, model has {jac.df_dx.shape[1]} states")
    return QGradients(
        q_x=jac.dU_dx + gamma * (jac.df_dx @ p_next),
        q_u=jac.dU_da + gamma * (jac.df_da @ p_next),
    )


def terminal_q_gradients(
    env: Environment,
    x: np.ndarray,
    a: np.ndarray,
    jac: ModelJacobians,
    tr: Transition,
    gamma: float,
) -> QGradients:
    """Q-gradients of a step whose successor is terminal, with p = d phi / dx there."""
    phi, dphi_dx = env.terminal_cost(tr.state)
    if tr.clip is None:
        return unclipped_q_gradients(jac, dphi_dx, gamma)
    cj = clipped_jacobians(x, a, tr.raw_cost, jac, tr.clip.plane, tr.clip.lam, tr.raw_state)
    return clipped_q_gradients(cj, tr.raw_cost, phi, dphi_dx, gamma, tr.clip.lam)


def _final_transition(traj: Trajectory) -> Transition:
    return Transition(
        state=traj.states[-1],
        cost=traj.step_costs[-1],
        terminal=True,
        raw_state=traj.raw_final_state,
        raw_cost=traj.raw_final_cost,
        clip=traj.clip,
    )


def bptt_gradient(traj: Trajectory, env: Environment, actor: MlpNet, cfg: AlgoConfig) -> np.ndarray:
    """dJ/dz (dJ^C/dz when the trajectory was clipped) by one backward pass.

    Args:
        traj: A noise-free trajectory that ended in the terminal set.
        env: The environment the trajectory was unrolled in.
        actor: The actor that produced the trajectory.
        cfg: Discount and clipping settings; must match the unroll.

    Returns:
        The gradient of the return with respect to the actor's flat weight vector.
    """
    if cfg.noise_std != 0.0:
        raise AdpError("BPTT is noise-free; noise_std must be 0")
    if traj.clip is not None and not cfg.clip_enabled:
        raise AdpError("trajectory was clipped but clipping is disabled in the config")
    if not traj.terminated or traj.length == 0:
        raise AdpError("BPTT needs a complete trajectory that ends in the terminal set")

    gamma = cfg.gamma
    acc = BpttAccumulator(p_vec=np.zeros(env.state_dim), dJ_dz=np.zeros(actor.weight_count))
    last = traj.length - 1
    for t in range(last, -1, -1):
        x, a = traj.states[t], traj.actions[t]
        jac = env.jacobians(x, a)
        if t == last:
            q = terminal_q_gradients(env, x, a, jac, _final_transition(traj), gamma)
        else:
            q = unclipped_q_gradients(jac, acc.p_vec, gamma)
        acc.dJ_dz += gamma ** t * actor_weight_vjp(env, actor, x, q.q_u)
        acc.p_vec = q.q_x + actor_state_vjp(env, actor, x, q.q_u)
    return acc.dJ_dz


def _unroll_batch(env, actor, cfg, rng):
    """Unroll every start state; truncated runs are logged and returned separately."""
    complete, truncated = [], []
    for x0 in cfg.batch:
        try:
            complete.append(
                unroll(env, actor, x0, cfg.gamma, cfg.clip_enabled, cfg.max_steps)
            )
        except TruncationError as exc:
            logger.warning(f"Skipping truncated trajectory: {exc}")
            truncated.append(exc.partial)
    return complete, truncated


def _summarize(trajectories: List[Trajectory]):
    if not trajectories:
        return float("nan"), float("nan")
    returns = [traj.return_value for traj in trajectories]
    durations = [traj.duration if traj.terminated else float(traj.length) for traj in trajectories]
    return float(np.mean(returns)), float(np.mean(durations))


def evaluate_batch(env: Environment, actor: MlpNet, cfg: AlgoConfig, rng=None):
    """Noise-free evaluation of the batch: (mean return, mean duration, truncations)."""
    complete, truncated = _unroll_batch(env, actor, cfg, rng)
    mean_return, mean_duration = _summarize(complete + truncated)
    return mean_return, mean_duration, len(truncated)


def bptt_train_step(env: Environment, actor: MlpNet, cfg: AlgoConfig, rng=None) -> TrainStepResult:
    """One batch iteration: z <- z - alpha * mean of the per-trajectory BPTT gradients.

    The actor is updated in place and returned; truncated trajectories contribute to the
    logged return but not to the gradient.
    """
    if not cfg.batch:
        raise AdpError("BPTT needs at least one start state in the batch")
    complete, truncated = _unroll_batch(env, actor, cfg, rng)
    if complete:
        gradient = np.mean([bptt_gradient(traj, env, actor, cfg) for traj in complete], axis=0)
        actor.weights -= cfg.actor_lr * gradient
    mean_return, mean_duration = _summarize(complete + truncated)
    return TrainStepResult(actor, None, mean_return, mean_duration, len(truncated))


def _start_state(cfg: AlgoConfig, x0):
    if x0 is not None:
        return x0
    if not cfg.batch:
        raise AdpError("an episode needs x0 or at least one start state in the batch")
    return cfg.batch[0]


def _episode(env, actor, critic, cfg, rng, x0, critic_update):
    x = env.check_state(x0)
    max_steps = env.default_max_steps if cfg.max_steps is None else cfg.max_steps
    traj = Trajectory(states=[x], actions=[], step_costs=[])
    for t in range(max_steps):
        a = actor_action(env, actor, x)
        if cfg.noise_std > 0.0:
            a = a + rng.normal(0.0, cfg.noise_std, size=a.shape)
        tr = step_transition(env, x, a, cfg.gamma, cfg.clip_enabled, index=t)
        jac = env.jacobians(x, a)

        q, critic_grad = critic_update(x, a, jac, tr)
        actor_grad = actor_weight_vjp(env, actor, x, q.q_u)
        critic.weights += cfg.critic_lr * critic_grad
        actor.weights -= cfg.actor_lr * actor_grad

        traj.states.append(tr.state)
        traj.actions.append(a)
        traj.step_costs.append(tr.cost)
        x = tr.state
        if tr.terminal:
            traj.terminal_cost = env.terminal_cost(tr.state)[0]
            traj.clip = tr.clip
            traj.raw_final_state = tr.raw_state
            traj.raw_final_cost = tr.raw_cost
            traj.return_value = evaluate_return(traj, cfg.gamma)
            return EpisodeResult(actor, critic, traj.return_value, traj)

    traj.terminated = False
    traj.return_value = evaluate_return(traj, cfg.gamma)
    raise TruncationError(f"{env.name}: episode from {traj.states[0]} ran {max_steps} steps", partial=traj)


def dhp_episode(
    env: Environment,
    actor: MlpNet,
    critic: MlpNet,
    cfg: AlgoConfig,
    rng=None,
    x0=None,
) -> EpisodeResult:
    """One online DHP episode from x0 (default: the first batch state).

    The critic G(x') estimates dJ/dx' in network-input coordinates.
    """
    if critic.n_out != env.obs_dim or critic.n_in != env.obs_dim:
        raise DimensionError(f"DHP critic must map {env.obs_dim} inputs to {env.obs_dim} outputs")
    x0 = _start_state(cfg, x0)

    def update(x, a, jac, tr):
        if tr.terminal:
            q = terminal_q_gradients(env, x, a, jac, tr, cfg.gamma)
        else:
            p = env.gradient_from_observed(critic.forward(env.observe(tr.state)))
            q = unclipped_q_gradients(jac, p, cfg.gamma)
        target = env.gradient_to_observed(q.q_x + actor_state_vjp(env, actor, x, q.q_u))
        inputs = env.observe(x)
        error = target - critic.forward(inputs)
        return q, critic.grad_weights(inputs, error)

    return _episode(env, actor, critic, cfg, rng, x0, update)


def hdp_episode(
    env: Environment,
    actor: MlpNet,
    critic: MlpNet,
    cfg: AlgoConfig,
    rng=None,
    x0=None,
) -> EpisodeResult:
    """One online HDP (TD(0)) episode with Gaussian exploration noise on the actions."""
    if critic.n_out != 1 or critic.n_in != env.obs_dim:
        raise DimensionError(f"HDP critic must map {env.obs_dim} inputs to a scalar")
    if cfg.noise_std > 0.0 and rng is None:
        raise ValueError("a random generator is required when noise_std > 0")
    x0 = _start_state(cfg, x0)
    unit = np.ones(1)

    def update(x, a, jac, tr):
        if tr.terminal:
            q = terminal_q_gradients(env, x, a, jac, tr, cfg.gamma)
            phi, _ = env.terminal_cost(tr.state)
            target = tr.cost + discount_power(cfg.gamma, tr.lam) * phi
        else:
            next_inputs = env.observe(tr.state)
            p = env.gradient_from_observed(critic.grad_input(next_inputs, unit))
            q = unclipped_q_gradients(jac, p, cfg.gamma)
            target = tr.cost + cfg.gamma * float(critic.forward(next_inputs)[0])
        inputs = env.observe(x)
        td_error = target - float(critic.forward(inputs)[0])
        return q, critic.grad_weights(inputs, np.array([td_error]))

    return _episode(env, actor, critic, cfg, rng, x0, update)


def _critic_train_step(episode_fn, env, actor, critic, cfg, rng) -> TrainStepResult:
    if not cfg.batch:
        raise AdpError("training needs at least one start state in the batch")
    trajectories, truncations = [], 0
    for x0 in cfg.batch:
        try:
            trajectories.append(episode_fn(env, actor, critic, cfg, rng, x0).trajectory)
        except TruncationError as exc:
            logger.warning(f"Skipping truncated episode: {exc}")
            trajectories.append(exc.partial)
            truncations += 1
    mean_return, mean_duration = _summarize(trajectories)
    return TrainStepResult(actor, critic, mean_return, mean_duration, truncations)


def dhp_train_step(env, actor, critic, cfg, rng=None) -> TrainStepResult:
    """One iteration: an online DHP episode from each batch start state in turn."""
    return _critic_train_step(dhp_episode, env, actor, critic, cfg, rng)


def hdp_train_step(env, actor, critic, cfg, rng=None) -> TrainStepResult:
    return _critic_train_step(hdp_episode, env, actor, critic, cfg, rng)
