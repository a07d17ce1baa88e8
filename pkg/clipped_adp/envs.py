"""Benchmark environments: the vertical lander and the duration-cost cart-pole.

Both integrate with explicit Euler steps and expose exact model and cost derivatives,
their terminal sets, and the tangent planes of the terminal boundaries.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .clipping import Plane
from .core import Environment, ModelJacobians, first_crossed_plane
from .errors import ActionRangeError

logger = logging.getLogger(__name__)

ACTION_SANITY_LIMIT = 10.0


# --- vertical lander -------------------------------------------------------------------
# state (h, v, u): height, velocity, fuel; action a: upward acceleration


@dataclass(frozen=True)
class LanderParams:
    k_g: float = 0.2
    k_f: float = 4.0
    k_u: float = 1.0
    mass: float = 2.0
    dt: float = 1.0
    max_steps: Optional[int] = None

    def __post_init__(self):
        for name in ("k_g", "k_f", "k_u", "mass", "dt"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"lander parameter {name} must be positive, got {getattr(self, name)}")

    @property
    def step_limit(self) -> int:
        """max_steps, defaulting to 1000 steps of unit length scaled to dt."""
        if self.max_steps is not None:
            return self.max_steps
        return max(1, int(round(1000.0 / self.dt)))


LANDER_GROUND = Plane(np.zeros(3), np.array([1.0, 0.0, 0.0]), "ground")
LANDER_FUEL = Plane(np.zeros(3), np.array([0.0, 0.0, 1.0]), "fuel")


def lander_step(x, a, p: LanderParams) -> Tuple[np.ndarray, float, ModelJacobians]:
    h, v, u = np.asarray(x, dtype=np.float64)
    thrust = float(np.asarray(a, dtype=np.float64).reshape(-1)[0])
    if not abs(thrust) <= ACTION_SANITY_LIMIT:
        raise ActionRangeError(f"lander action {thrust} outside [-10, 10]")
    dt = p.dt
    nxt = np.array([h + v * dt, v + (thrust - p.k_g) * dt, p.k_u * u - thrust * dt])
    cost = p.k_f * thrust * dt

    df_dx = np.zeros((3, 3))
    df_dx[0, 0] = 1.0
    df_dx[1, 0] = dt
    df_dx[1, 1] = 1.0
    df_dx[2, 2] = p.k_u
    df_da = np.array([[0.0, dt, -dt]])
    jac = ModelJacobians(df_dx=df_dx, df_da=df_da, dU_dx=np.zeros(3), dU_da=np.array([p.k_f * dt]))
    return nxt, cost, jac


def lander_terminal(x) -> bool:
    return bool(x[0] <= 0.0 or x[2] <= 0.0)


def lander_phi(x, p: LanderParams = LanderParams()) -> Tuple[float, np.ndarray]:
    """Kinetic plus potential energy on landing: m v^2 / 2 + m k_g h."""
    h, v, _ = np.asarray(x, dtype=np.float64)
    phi = 0.5 * p.mass * v * v + p.mass * p.k_g * h
    return float(phi), np.array([p.mass * p.k_g, p.mass * v, 0.0])


_LANDER_PLANES = (
    (LANDER_GROUND, lambda x: x[0] <= 0.0),
    (LANDER_FUEL, lambda x: x[2] <= 0.0),
)


def lander_boundary(x_from, x_to) -> Plane:
    """Ground or fuel plane; when both are crossed, the one with the smaller lambda."""
    return first_crossed_plane(x_from, x_to, _LANDER_PLANES, "lander")


class LanderEnv(Environment):
    name = "lander"
    state_dim = 3
    action_dim = 1
    default_gamma = 1.0
    obs_index = (0, 1, 2)
    obs_scale = np.array([1.0 / 100.0, 1.0 / 10.0, 1.0 / 50.0])
    action_offset = 0.5
    action_slope = 0.5

    def __init__(self, params: Optional[LanderParams] = None):
        self.params = params or LanderParams()
        self.default_max_steps = self.params.step_limit

    def step(self, x, a):
        nxt, cost, _ = lander_step(x, a, self.params)
        return nxt, cost

    def jacobians(self, x, a):
        return lander_step(x, a, self.params)[2]

    def terminal_cost(self, x):
        return lander_phi(x, self.params)

    def is_terminal(self, x):
        return lander_terminal(x)

    def boundary_planes(self):
        return _LANDER_PLANES

    def draw_start_states(self, count, rng):
        return [
            np.array([rng.uniform(0.0, 100.0), rng.uniform(-10.0, 10.0), 30.0])
            for _ in range(count)
        ]

    def sample_near_boundary(self, rng):
        dt = self.params.dt
        if rng.uniform() < 0.5:
            v = rng.uniform(-10.0, -1.0)
            x = np.array([rng.uniform(0.05, 1.0) * abs(v) * dt, v, rng.uniform(5.0, 30.0)])
            return x, np.array([rng.uniform(0.1, 1.0)])
        thrust = rng.uniform(0.1, 1.0)
        x = np.array([rng.uniform(10.0, 100.0), rng.uniform(-5.0, 5.0), rng.uniform(0.05, 1.0) * thrust * dt])
        return x, np.array([thrust])


# --- cart-pole -------------------------------------------------------------------------
# state (x, theta, x_dot, theta_dot, t), t counted in steps; action: force F in newtons

X, THETA, X_DOT, THETA_DOT, TIME = range(5)


@dataclass(frozen=True)
class CartPoleParams:
    g: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force_mag: float = 10.0
    dt: float = 0.02
    angle_limit: float = math.pi / 15.0
    track_limit: float = 2.4
    horizon: int = 300

    def __post_init__(self):
        for name in ("g", "cart_mass", "pole_mass", "half_length", "force_mag", "dt",
                     "angle_limit", "track_limit", "horizon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"cart-pole parameter {name} must be positive, got {getattr(self, name)}")


def cartpole_accelerations(theta, theta_dot, force, p: CartPoleParams):
    """(x_ddot, theta_ddot) and their partials by theta, theta_dot and force."""
    total = p.cart_mass + p.pole_mass
    ml = p.pole_mass * p.half_length
    s, c = math.sin(theta), math.cos(theta)
    w2 = theta_dot * theta_dot

    temp = (force + ml * w2 * s) / total
    num = p.g * s - c * temp
    den = p.half_length * (4.0 / 3.0 - p.pole_mass * c * c / total)
    theta_acc = num / den
    x_acc = (force + ml * (w2 * s - theta_acc * c)) / total

    dtemp_dth = ml * w2 * c / total
    dtemp_dw = 2.0 * ml * theta_dot * s / total
    dnum_dth = p.g * c + s * temp - c * dtemp_dth
    dnum_dw = -c * dtemp_dw
    dnum_dF = -c / total
    dden_dth = p.half_length * 2.0 * p.pole_mass * c * s / total

    dthacc_dth = (dnum_dth * den - num * dden_dth) / (den * den)
    dthacc_dw = dnum_dw / den
    dthacc_dF = dnum_dF / den
    dxacc_dth = ml * (w2 * c - dthacc_dth * c + theta_acc * s) / total
    dxacc_dw = ml * (2.0 * theta_dot * s - dthacc_dw * c) / total
    dxacc_dF = (1.0 - ml * c * dthacc_dF) / total

    return (
        (x_acc, theta_acc),
        {
            "x_acc": (dxacc_dth, dxacc_dw, dxacc_dF),
            "theta_acc": (dthacc_dth, dthacc_dw, dthacc_dF),
        },
    )


def cartpole_step(x, F, p: CartPoleParams) -> Tuple[np.ndarray, float, ModelJacobians]:
    """Euler step; the step cost is identically zero (failure is charged by cartpole_phi)."""
    state = np.asarray(x, dtype=np.float64)
    force = float(np.asarray(F, dtype=np.float64).reshape(-1)[0])
    (x_acc, theta_acc), partials = cartpole_accelerations(state[THETA], state[THETA_DOT], force, p)
    dt = p.dt
    nxt = state + np.array([state[X_DOT], state[THETA_DOT], x_acc, theta_acc, 0.0]) * dt
    nxt[TIME] = state[TIME] + 1.0

    dxacc_dth, dxacc_dw, dxacc_dF = partials["x_acc"]
    dthacc_dth, dthacc_dw, dthacc_dF = partials["theta_acc"]
    df_dx = np.eye(5)
    df_dx[X_DOT, X] += dt
    df_dx[THETA_DOT, THETA] += dt
    df_dx[THETA, X_DOT] += dt * dxacc_dth
    df_dx[THETA_DOT, X_DOT] += dt * dxacc_dw
    df_dx[THETA, THETA_DOT] += dt * dthacc_dth
    df_dx[THETA_DOT, THETA_DOT] += dt * dthacc_dw
    df_da = np.zeros((1, 5))
    df_da[0, X_DOT] = dt * dxacc_dF
    df_da[0, THETA_DOT] = dt * dthacc_dF
    jac = ModelJacobians(df_dx=df_dx, df_da=df_da, dU_dx=np.zeros(5), dU_da=np.zeros(1))
    return nxt, 0.0, jac


def cartpole_terminal(x, p: CartPoleParams = CartPoleParams()) -> bool:
    return bool(
        abs(x[X]) >= p.track_limit or abs(x[THETA]) >= p.angle_limit or x[TIME] >= p.horizon
    )


def cartpole_phi(x, p: CartPoleParams = CartPoleParams()) -> Tuple[float, np.ndarray]:
    """Unit failure cost for a terminal state reached before the horizon, zero at the horizon."""
    return (1.0 if x[TIME] < p.horizon else 0.0), np.zeros(5)


def cartpole_planes(p: CartPoleParams = CartPoleParams()):
    def axis(index, value):
        vec = np.zeros(5)
        vec[index] = value
        return vec

    return (
        (Plane(axis(THETA, p.angle_limit), axis(THETA, -1.0), "theta+"),
         lambda x: x[THETA] >= p.angle_limit),
        (Plane(axis(THETA, -p.angle_limit), axis(THETA, 1.0), "theta-"),
         lambda x: x[THETA] <= -p.angle_limit),
        (Plane(axis(X, p.track_limit), axis(X, -1.0), "x+"),
         lambda x: x[X] >= p.track_limit),
        (Plane(axis(X, -p.track_limit), axis(X, 1.0), "x-"),
         lambda x: x[X] <= -p.track_limit),
        (Plane(axis(TIME, float(p.horizon)), axis(TIME, 1.0), "time"),
         lambda x: x[TIME] >= p.horizon),
    )


def cartpole_boundary(x_from, x_to, p: CartPoleParams = CartPoleParams()) -> Plane:
    return first_crossed_plane(x_from, x_to, cartpole_planes(p), "cartpole")


class CartPoleEnv(Environment):
    name = "cartpole"
    state_dim = 5
    action_dim = 1
    default_gamma = 0.97
    obs_index = (X, THETA, X_DOT, THETA_DOT)
    obs_scale = np.array([0.16, 15.0 / math.pi, 1.0, 4.0])
    action_offset = 0.0

    def __init__(self, params: Optional[CartPoleParams] = None):
        self.params = params or CartPoleParams()
        self.action_slope = self.params.force_mag
        self.default_max_steps = self.params.horizon + 1
        self._planes = cartpole_planes(self.params)

    def step(self, x, a):
        nxt, cost, _ = cartpole_step(x, a, self.params)
        return nxt, cost

    def jacobians(self, x, a):
        return cartpole_step(x, a, self.params)[2]

    def terminal_cost(self, x):
        return cartpole_phi(x, self.params)

    def is_terminal(self, x):
        return cartpole_terminal(x, self.params)

    def boundary_planes(self):
        return self._planes

    def draw_start_states(self, count, rng):
        p = self.params
        return [
            np.array([
                rng.uniform(-p.track_limit, p.track_limit),
                rng.uniform(-p.angle_limit, p.angle_limit),
                0.0,
                0.0,
                0.0,
            ])
            for _ in range(count)
        ]

    def sample_near_boundary(self, rng):
        p = self.params
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        theta_dot = sign * rng.uniform(0.5, 3.0)
        theta = sign * (p.angle_limit - rng.uniform(0.05, 0.95) * abs(theta_dot) * p.dt)
        x = np.array([
            rng.uniform(-1.5, 1.5),
            theta,
            rng.uniform(-1.0, 1.0),
            theta_dot,
            float(rng.integers(0, p.horizon - 1)),
        ])
        return x, np.array([rng.uniform(-p.force_mag, p.force_mag)])


ENVIRONMENTS = {"lander": LanderEnv, "cartpole": CartPoleEnv}


def make_env(name: str, dt: Optional[float] = None, max_steps: Optional[int] = None) -> Environment:
    """Build an environment by name, overriding its time step and step limit when given."""
    if name == "lander":
        params = LanderParams()
        if dt is not None:
            params = replace(params, dt=dt)
        if max_steps is not None:
            params = replace(params, max_steps=max_steps)
        logger.debug(f"lander: dt={params.dt}, step limit {params.step_limit}")
        return LanderEnv(params)
    if name == "cartpole":
        params = CartPoleParams() if dt is None else replace(CartPoleParams(), dt=dt)
        env = CartPoleEnv(params)
        if max_steps is not None:
            env.default_max_steps = max_steps
        logger.debug(f"cartpole: dt={params.dt}, horizon {params.horizon} steps")
        return env
    raise ValueError(f"unknown environment '{name}' (expected one of {sorted(ENVIRONMENTS)})")
