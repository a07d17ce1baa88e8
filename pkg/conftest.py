import numpy as np
import pytest

from clipped_adp.clipping import Plane
from clipped_adp.core import Environment, ModelJacobians

collect_ignore = ["examples"]


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="run learning-curve tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-minute training runs (enable with --run-slow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class CountdownEnv(Environment):
    """Fixed-horizon environment: s' = 0.9 s + 0.1 a, t' = t + 1, terminal once t reaches the horizon.

    With quadratic costs U = s^2 + a^2 / 2 and phi = 2 s^2; otherwise U = 1 per step and phi = 0,
    which makes the cost-to-go horizon - t.
    """

    name = "countdown"
    state_dim = 2
    action_dim = 1
    default_gamma = 0.9
    obs_index = (0, 1)
    obs_scale = np.array([1.0, 1.0])

    def __init__(self, horizon=3, quadratic=True):
        self.horizon = horizon
        self.quadratic = quadratic
        self.default_max_steps = horizon + 1
        self._planes = (
            (Plane(np.array([0.0, float(horizon)]), np.array([0.0, 1.0]), "time"),
             lambda x: x[1] >= horizon),
        )

    def step(self, x, a):
        s, t = x
        a = float(np.asarray(a).reshape(-1)[0])
        cost = s * s + 0.5 * a * a if self.quadratic else 1.0
        return np.array([0.9 * s + 0.1 * a, t + 1.0]), cost

    def jacobians(self, x, a):
        a = float(np.asarray(a).reshape(-1)[0])
        df_dx = np.array([[0.9, 0.0], [0.0, 1.0]])
        df_da = np.array([[0.1, 0.0]])
        if self.quadratic:
            return ModelJacobians(df_dx, df_da, np.array([2.0 * x[0], 0.0]), np.array([a]))
        return ModelJacobians(df_dx, df_da, np.zeros(2), np.zeros(1))

    def terminal_cost(self, x):
        if self.quadratic:
            return 2.0 * x[0] ** 2, np.array([4.0 * x[0], 0.0])
        return 0.0, np.zeros(2)

    def is_terminal(self, x):
        return bool(x[1] >= self.horizon)

    def boundary_planes(self):
        return self._planes

    def draw_start_states(self, count, rng):
        return [np.array([rng.uniform(-1.0, 1.0), 0.0]) for _ in range(count)]

    def sample_near_boundary(self, rng):
        return np.array([rng.uniform(-1.0, 1.0), self.horizon - 1.0]), np.array([rng.uniform(-1.0, 1.0)])


@pytest.fixture
def countdown_env():
    return CountdownEnv()
