import numpy as np
import pytest

from clipped_adp.core import (
    ClipEvent,
    Trajectory,
    actor_action,
    actor_state_vjp,
    actor_weight_vjp,
    evaluate_return,
    step_transition,
    trajectory_signature,
    unroll,
)
from clipped_adp.envs import LANDER_GROUND, CartPoleEnv, LanderEnv
from clipped_adp.errors import AdpError, TruncationError
from clipped_adp.gradcheck import central_diff
from clipped_adp.mlp import MlpNet, mlp_init, weight_count


def zero_actor(n_in):
    sizes = (n_in, 6, 6, 1)
    return MlpNet(sizes, np.zeros(weight_count(sizes)), output_activation="tanh")


def test_zero_actor_lands_on_the_ground():
    env = LanderEnv()
    traj = unroll(env, zero_actor(3), [100.0, -10.0, 30.0], gamma=1.0, clip_enabled=True)
    assert traj.terminated
    np.testing.assert_array_equal(traj.actions[0], [0.5])
    assert traj.clip is not None
    assert traj.clip.plane.label == "ground"
    assert 0.0 < traj.clip.lam <= 1.0
    assert abs(traj.states[-1][0]) <= 1e-9
    assert traj.duration == pytest.approx(traj.length - 1 + traj.clip.lam)
    assert traj.return_value == evaluate_return(traj, 1.0)


def test_clipping_shortens_last_cost_and_terminal_state():
    env = LanderEnv()
    clipped = unroll(env, zero_actor(3), [100.0, -10.0, 30.0], 1.0, clip_enabled=True)
    raw = unroll(env, zero_actor(3), [100.0, -10.0, 30.0], 1.0, clip_enabled=False)
    assert clipped.length == raw.length
    assert raw.clip is None
    assert raw.states[-1][0] < 0.0
    lam = clipped.clip.lam
    assert clipped.step_costs[-1] == pytest.approx(lam * raw.step_costs[-1])
    np.testing.assert_array_equal(clipped.raw_final_state, raw.states[-1])


def test_exact_landing_matches_unclipped_run():
    env = LanderEnv()
    # a = 0.5 carries h from 10 to exactly 0 in one step
    clipped = unroll(env, zero_actor(3), [10.0, -10.0, 30.0], 1.0, clip_enabled=True)
    raw = unroll(env, zero_actor(3), [10.0, -10.0, 30.0], 1.0, clip_enabled=False)
    assert clipped.clip is None
    assert clipped.length == raw.length == 1
    np.testing.assert_array_equal(clipped.states[-1], raw.states[-1])
    assert clipped.return_value == raw.return_value


def test_balanced_cartpole_runs_to_the_horizon():
    env = CartPoleEnv()
    traj = unroll(env, zero_actor(4), np.zeros(5), gamma=0.97, clip_enabled=True)
    assert traj.length == 300
    assert traj.clip is None
    assert traj.states[-1][4] == 300.0
    assert not any(traj.step_costs)
    assert traj.terminal_cost == 0.0
    assert traj.return_value == 0.0


def test_cartpole_failure_costs_discount_to_fractional_duration():
    env = CartPoleEnv()
    traj = unroll(env, zero_actor(4), [0.0, 0.15, 0.0, 0.0, 0.0], gamma=0.97, clip_enabled=True)
    assert traj.clip is not None and traj.clip.plane.label == "theta+"
    assert traj.states[-1][1] == env.params.angle_limit
    assert traj.states[-1][4] == pytest.approx(traj.duration)
    assert traj.return_value == pytest.approx(0.97 ** traj.duration, rel=1e-12)


def test_evaluate_return_sums_costs():
    traj = Trajectory(
        states=[np.zeros(2)] * 3, actions=[np.zeros(1)] * 2, step_costs=[1.0, 1.0], terminal_cost=0.0
    )
    assert evaluate_return(traj, 1.0) == 2.0


def test_evaluate_return_clipped_single_step():
    traj = Trajectory(
        states=[np.ones(3), np.zeros(3)],
        actions=[np.zeros(1)],
        step_costs=[0.5 * 0.8],
        terminal_cost=10.0,
        clip=ClipEvent(0.5, LANDER_GROUND, 0),
    )
    assert evaluate_return(traj, 1.0) == pytest.approx(10.4)
    assert traj.duration == 0.5


def test_evaluate_return_discounts_terminal_cost_by_fraction():
    traj = Trajectory(
        states=[np.ones(3)] * 3,
        actions=[np.zeros(1)] * 2,
        step_costs=[1.0, 0.25],
        terminal_cost=4.0,
        clip=ClipEvent(0.25, LANDER_GROUND, 1),
    )
    assert evaluate_return(traj, 0.9) == pytest.approx(1.0 + 0.9 * (0.25 + 0.9 ** 0.25 * 4.0))


def test_truncation_keeps_partial_trajectory():
    env = LanderEnv()
    with pytest.raises(TruncationError) as excinfo:
        unroll(env, zero_actor(3), [100.0, -10.0, 30.0], 1.0, True, max_steps=3)
    partial = excinfo.value.partial
    assert partial.length == 3
    assert not partial.terminated
    assert partial.return_value == pytest.approx(3 * 4.0 * 0.5)


def test_unroll_rejects_bad_arguments():
    env = LanderEnv()
    with pytest.raises(AdpError):
        unroll(env, zero_actor(3), [0.0, -1.0, 5.0], 1.0, True)
    with pytest.raises(ValueError):
        unroll(env, zero_actor(3), [10.0, -1.0, 5.0], 1.0, True, noise_std=0.1)
    with pytest.raises(ValueError):
        unroll(env, zero_actor(3), [10.0, -1.0, 5.0], 1.5, True)


def test_noisy_unroll_is_reproducible():
    env = LanderEnv()
    a = unroll(env, zero_actor(3), [50.0, 0.0, 30.0], 1.0, True, noise_std=0.1, rng=np.random.default_rng(4))
    b = unroll(env, zero_actor(3), [50.0, 0.0, 30.0], 1.0, True, noise_std=0.1, rng=np.random.default_rng(4))
    assert a.return_value == b.return_value
    assert trajectory_signature(a) == trajectory_signature(b)


def test_step_transition_without_clipping_keeps_raw_state():
    env = LanderEnv()
    tr = step_transition(env, np.array([1.0, -2.0, 10.0]), np.array([0.2]), 1.0, clip_enabled=False)
    assert tr.terminal and tr.clip is None and tr.lam == 1.0
    np.testing.assert_array_equal(tr.state, tr.raw_state)


def test_trajectory_signature():
    env = LanderEnv()
    traj = unroll(env, zero_actor(3), [100.0, -10.0, 30.0], 1.0, True)
    assert trajectory_signature(traj) == (traj.length, "ground")
    flat = unroll(env, zero_actor(3), [100.0, -10.0, 30.0], 1.0, False)
    assert trajectory_signature(flat) == (flat.length, None)


@pytest.mark.parametrize("env", [LanderEnv(), CartPoleEnv()], ids=["lander", "cartpole"])
def test_actor_products_include_scaling(env):
    rng = np.random.default_rng(13)
    actor = mlp_init(env.obs_dim, 1, 1.0, rng, output_activation="tanh")
    actor.weights = rng.uniform(-1.0, 1.0, size=actor.weight_count)
    x = env.draw_start_states(1, rng)[0]
    cotangent = np.array([1.7])

    def by_weights(weights):
        shifted = actor.copy()
        shifted.weights = weights
        return float(cotangent @ actor_action(env, shifted, x))

    np.testing.assert_allclose(
        actor_weight_vjp(env, actor, x, cotangent), central_diff(by_weights, actor.weights), rtol=1e-6, atol=1e-8
    )
    np.testing.assert_allclose(
        actor_state_vjp(env, actor, x, cotangent),
        central_diff(lambda y: float(cotangent @ actor_action(env, actor, y)), x),
        rtol=1e-6,
        atol=1e-8,
    )


def test_lander_action_range_follows_tanh_output():
    env = LanderEnv()
    sizes = (3, 6, 6, 1)
    actor = MlpNet(sizes, np.zeros(weight_count(sizes)), output_activation="tanh")
    x = np.array([50.0, 0.0, 30.0])
    actor.layer_matrix(3)[0, 0] = 100.0
    assert actor_action(env, actor, x)[0] == pytest.approx(1.0)
    actor.layer_matrix(3)[0, 0] = -100.0
    assert actor_action(env, actor, x)[0] == pytest.approx(0.0, abs=1e-12)
