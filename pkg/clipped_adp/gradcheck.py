"""Central-difference oracles for every analytic derivative in the package.

The oracles only evaluate plain function values (model, cost, clipping fraction, network
outputs, unrolled returns); none of them touch the analytic-derivative code they verify.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .algorithms import AlgoConfig, bptt_gradient
from .clipping import ClippedJacobians, clipped_jacobians, clipped_q_gradients, clipping_fraction
from .core import Environment, trajectory_signature, unroll
from .envs import make_env
from .errors import AdpError, TruncationError
from .mlp import MlpNet, mlp_init

logger = logging.getLogger(__name__)

FUNCTION_EPS = 1e-6
WEIGHT_EPS = 1e-5
ABSOLUTE_FLOOR = 1e-10
LAMBDA_RANGE = (0.05, 0.95)
MAX_TRIES_PER_SAMPLE = 50


@dataclass
class CheckReport:
    name: str
    samples: int
    max_rel_err: float
    max_abs_err: float
    passed: bool
    tolerance: float
    skipped: int = 0
    note: str = ""

    def line(self) -> str:
        status = "✓ PASS" if self.passed else "✗ FAIL"
        text = (
            f"{status}  {self.name:<34} samples={self.samples:<4d} "
            f"max_rel_err={self.max_rel_err:.3e} tol={self.tolerance:.0e}"
        )
        if self.skipped:
            text += f" skipped={self.skipped}"
        if self.note:
            text += f"  ({self.note})"
        return text


class _ErrorTracker:
    def __init__(self):
        self.max_rel = 0.0
        self.max_abs = 0.0

    def compare(self, analytic, numeric):
        analytic = np.asarray(analytic, dtype=np.float64)
        numeric = np.asarray(numeric, dtype=np.float64)
        rel, abs_err = relative_error(analytic, numeric)
        self.max_rel = max(self.max_rel, rel)
        self.max_abs = max(self.max_abs, abs_err)

    def report(self, name, samples, tolerance, skipped=0, note="") -> CheckReport:
        passed = self.max_rel <= tolerance or self.max_abs <= ABSOLUTE_FLOOR
        return CheckReport(name, samples, self.max_rel, self.max_abs, passed, tolerance, skipped, note)


def relative_error(analytic, numeric):
    """Worst entrywise |a - n| / max(1, |a|, |n|), and the worst absolute error."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(analytic - numeric)
    if diff.size == 0:
        return 0.0, 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(diff / scale)), float(np.max(diff))


def central_diff(fn: Callable[[np.ndarray], float], point, eps: float = FUNCTION_EPS) -> np.ndarray:
    if not eps > 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    point = np.asarray(point, dtype=np.float64)
    grad = np.zeros(point.shape[0])
    for i in range(point.shape[0]):
        step = np.zeros_like(point)
        step[i] = eps
        grad[i] = (fn(point + step) - fn(point - step)) / (2.0 * eps)
    return grad


def central_matrix(fn: Callable[[np.ndarray], np.ndarray], point, eps: float = FUNCTION_EPS) -> np.ndarray:
    """Numeric derivative of a vector function, element (i, j) = d fn^j / d point^i."""
    width = np.asarray(fn(np.asarray(point, dtype=np.float64))).reshape(-1).shape[0]
    columns = [
        central_diff(lambda y, j=j: float(np.asarray(fn(y)).reshape(-1)[j]), point, eps)
        for j in range(width)
    ]
    return np.stack(columns, axis=1)


def check_model_jacobians(
    env: Environment,
    n_samples: int = 20,
    eps: float = FUNCTION_EPS,
    tol: float = 1e-6,
    rng: Optional[np.random.Generator] = None,
) -> CheckReport:
    """Model, cost and terminal-cost derivatives against central differences."""
    rng = rng or np.random.default_rng(0)
    tracker = _ErrorTracker()
    for _ in range(n_samples):
        x, a = env.sample_near_boundary(rng)
        jac = env.jacobians(x, a)
        tracker.compare(jac.df_dx, central_matrix(lambda y: env.step(y, a)[0], x, eps))
        tracker.compare(jac.df_da, central_matrix(lambda b: env.step(x, b)[0], a, eps))
        tracker.compare(jac.dU_dx, central_diff(lambda y: env.step(y, a)[1], x, eps))
        tracker.compare(jac.dU_da, central_diff(lambda b: env.step(x, b)[1], a, eps))
        tracker.compare(env.terminal_cost(x)[1], central_diff(lambda y: env.terminal_cost(y)[0], x, eps))
    return tracker.report(f"{env.name}/model_jacobians", n_samples, tol)


def _crossing_samples(env: Environment, n_samples: int, rng: np.random.Generator):
    found = []
    for _ in range(n_samples * MAX_TRIES_PER_SAMPLE):
        if len(found) == n_samples:
            break
        x, a = env.sample_near_boundary(rng)
        if env.is_terminal(x):
            continue
        f_next, _ = env.step(x, a)
        if not env.is_terminal(f_next):
            continue
        plane = env.boundary(x, f_next)
        lam = clipping_fraction(x, f_next, plane)
        if LAMBDA_RANGE[0] <= lam <= LAMBDA_RANGE[1]:
            found.append((x, a, plane))
    if len(found) < n_samples:
        raise AdpError(
            f"{env.name}: found only {len(found)} of {n_samples} boundary-crossing transitions"
        )
    return found


def check_clipping_derivatives(
    env: Environment,
    n_samples: int = 100,
    eps: float = FUNCTION_EPS,
    tol: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
    tamper: Optional[Callable[[ClippedJacobians], ClippedJacobians]] = None,
) -> CheckReport:
    """Clipping-fraction, clipped-model, clipped-cost and clipped-Q derivatives.

    tamper, when given, rewrites the analytic derivatives before comparison.
    """
    rng = rng or np.random.default_rng(0)
    gamma = env.default_gamma
    tracker = _ErrorTracker()

    for x, a, plane in _crossing_samples(env, n_samples, rng):
        def lam_of(y, b):
            return clipping_fraction(y, env.step(y, b)[0], plane)

        def clipped_state(y, b):
            nxt = env.step(y, b)[0]
            return y + lam_of(y, b) * (nxt - y)

        def clipped_cost(y, b):
            return lam_of(y, b) * env.step(y, b)[1]

        def q_value(y, b):
            return clipped_cost(y, b) + gamma ** lam_of(y, b) * env.terminal_cost(clipped_state(y, b))[0]

        f_next, cost = env.step(x, a)
        lam = lam_of(x, a)
        cj = clipped_jacobians(x, a, cost, env.jacobians(x, a), plane, lam, f_next)
        if tamper is not None:
            cj = tamper(cj)
        phi, dphi_dx = env.terminal_cost(x + lam * (f_next - x))
        q = clipped_q_gradients(cj, cost, phi, dphi_dx, gamma, lam)

        tracker.compare(cj.dlam_dx, central_diff(lambda y: lam_of(y, a), x, eps))
        tracker.compare(cj.dlam_da, central_diff(lambda b: lam_of(x, b), a, eps))
        tracker.compare(cj.dfC_dx, central_matrix(lambda y: clipped_state(y, a), x, eps))
        tracker.compare(cj.dfC_da, central_matrix(lambda b: clipped_state(x, b), a, eps))
        tracker.compare(cj.dUC_dx, central_diff(lambda y: clipped_cost(y, a), x, eps))
        tracker.compare(cj.dUC_da, central_diff(lambda b: clipped_cost(x, b), a, eps))
        tracker.compare(q.q_x, central_diff(lambda y: q_value(y, a), x, eps))
        tracker.compare(q.q_u, central_diff(lambda b: q_value(x, b), a, eps))

    return tracker.report(f"{env.name}/clipping_derivatives", n_samples, tol)


def check_bptt(
    env: Environment,
    actor: MlpNet,
    cfg: AlgoConfig,
    n_inits: int = 10,
    eps: float = WEIGHT_EPS,
    tol: float = 1e-4,
    rng: Optional[np.random.Generator] = None,
    weight_range: float = 1.0,
) -> CheckReport:
    """BPTT gradients against per-weight central differences of the unrolled return.

    Each init redraws the weights of a copy of actor and a start state. Perturbations that
    change the trajectory's length or crossed plane sit on a kink of the return and are skipped.

    Args:
        env: The environment to unroll in.
        actor: Template network; its weights are left untouched.
        cfg: Discount and clipping settings for the unrolls.
        n_inits: Number of weight and start-state draws.
        eps: Central-difference step on each weight.
        tol: Relative-error tolerance.
        rng: Generator for the draws.
        weight_range: Weights are drawn uniformly from [-weight_range, weight_range].

    Returns:
        A report holding the worst errors and the skipped-perturbation count.
    """
    rng = rng or np.random.default_rng(0)
    tracker = _ErrorTracker()
    skipped = 0
    truncated = 0
    all_zero = True
    label = "clip" if cfg.clip_enabled else "noclip"

    for _ in range(n_inits):
        net = actor.copy()
        net.weights = rng.uniform(-weight_range, weight_range, size=net.weight_count)
        x0 = env.draw_start_states(1, rng)[0]
        try:
            base = unroll(env, net, x0, cfg.gamma, cfg.clip_enabled, cfg.max_steps)
        except TruncationError:
            truncated += 1
            continue
        analytic = bptt_gradient(base, env, net, cfg)
        signature = trajectory_signature(base)

        for i in range(net.weight_count):
            returns = []
            for sign in (1.0, -1.0):
                shifted = net.copy()
                shifted.weights[i] += sign * eps
                try:
                    traj = unroll(env, shifted, x0, cfg.gamma, cfg.clip_enabled, cfg.max_steps)
                except TruncationError:
                    break
                if trajectory_signature(traj) != signature:
                    break
                returns.append(traj.return_value)
            if len(returns) != 2:
                skipped += 1
                continue
            numeric = (returns[0] - returns[1]) / (2.0 * eps)
            tracker.compare(analytic[i], numeric)
            all_zero = all_zero and analytic[i] == 0.0 and numeric == 0.0

    notes = []
    if all_zero and n_inits > truncated:
        notes.append("degenerate: analytic and numeric gradients are both zero")
    if truncated:
        notes.append(f"{truncated} inits truncated")
    return tracker.report(f"{env.name}/bptt_{label}", n_inits - truncated, tol, skipped, "; ".join(notes))


def check_mlp(
    n_nets: int = 20,
    eps: float = FUNCTION_EPS,
    tol: float = 1e-6,
    rng: Optional[np.random.Generator] = None,
) -> CheckReport:
    """Weight and input gradients of random networks against central differences."""
    rng = rng or np.random.default_rng(0)
    shapes = [(3, 1, "tanh", 1.0), (4, 1, "tanh", 1.0), (3, 3, "linear", 20.0), (4, 4, "linear", 0.1),
              (3, 1, "linear", 10.0)]
    tracker = _ErrorTracker()
    for k in range(n_nets):
        n_in, n_out, activation, slope = shapes[k % len(shapes)]
        net = mlp_init(n_in, n_out, slope, rng, output_activation=activation)
        net.weights = rng.uniform(-1.0, 1.0, size=net.weight_count)
        inputs = rng.uniform(-1.0, 1.0, size=n_in)
        cotangent = rng.normal(size=n_out)
        grad_w, grad_in = net.backward(inputs, cotangent)

        def weighted_output(weights):
            shifted = net.copy()
            shifted.weights = weights
            return float(np.dot(cotangent, shifted.forward(inputs)))

        tracker.compare(grad_w, central_diff(weighted_output, net.weights, eps))
        tracker.compare(grad_in, central_diff(lambda y: float(np.dot(cotangent, net.forward(y))), inputs, eps))
    return tracker.report("mlp/gradients", n_nets, tol)


def run_all_checks(rng: Optional[np.random.Generator] = None, quick: bool = False) -> List[CheckReport]:
    """Every oracle, on both environments; quick cuts the sample counts."""
    rng = rng or np.random.default_rng(0)
    clip_samples = 20 if quick else 100
    lander_inits, cartpole_inits = (2, 1) if quick else (10, 5)

    reports = [check_mlp(5 if quick else 20, rng=rng)]
    for name in ("lander", "cartpole"):
        env = make_env(name)
        reports.append(check_model_jacobians(env, rng=rng))
        reports.append(check_clipping_derivatives(env, clip_samples, rng=rng))

        actor = mlp_init(env.obs_dim, env.action_dim, 1.0, rng, output_activation="tanh")
        n_inits = lander_inits if name == "lander" else cartpole_inits
        for clip in (True, False):
            cfg = AlgoConfig(actor_lr=0.0, gamma=env.default_gamma, clip_enabled=clip)
            reports.append(check_bptt(env, actor, cfg, n_inits, rng=rng))

    for report in reports:
        logger.info(report.line())
    return reports
