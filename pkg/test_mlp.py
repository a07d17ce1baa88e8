import json

import numpy as np
import pytest

from clipped_adp.errors import DimensionError
from clipped_adp.gradcheck import check_mlp, central_diff, relative_error
from clipped_adp.mlp import (
    MlpNet,
    load_snapshot,
    mlp_forward,
    mlp_grad_input,
    mlp_grad_weights,
    mlp_init,
    save_snapshot,
    weight_count,
)


def reference_forward(net: MlpNet, inputs):
    """Layer-by-layer evaluation with explicit weight and bias blocks per source layer."""
    sizes = net.layer_sizes
    flat = net.weights
    offset = 0
    activations = [np.asarray(inputs, dtype=np.float64)]
    for dst in range(1, len(sizes)):
        pre = np.zeros(sizes[dst])
        for node in range(sizes[dst]):
            pre[node] += flat[offset]
            offset += 1
            for src in range(dst):
                for k in range(sizes[src]):
                    pre[node] += flat[offset] * activations[src][k]
                    offset += 1
        if dst < len(sizes) - 1:
            activations.append(np.tanh(pre))
        else:
            out = net.slope * pre
            return np.tanh(out) if net.output_activation == "tanh" else out


def test_weight_count_includes_shortcuts_and_biases():
    net = mlp_init(3, 1, 1.0, np.random.default_rng(0))
    assert net.weight_count == 100
    assert weight_count((3, 6, 6, 1)) == (3 * 6 + 6 * 6 + 3 * 6 + 6 * 1 + 6 * 1 + 3 * 1) + (6 + 6 + 1)


def test_init_range_and_determinism():
    a = mlp_init(4, 4, 0.1, np.random.default_rng(11))
    b = mlp_init(4, 4, 0.1, np.random.default_rng(11))
    assert np.all(np.abs(a.weights) <= 0.1)
    np.testing.assert_array_equal(a.weights, b.weights)


def test_zero_weights_give_zero_output_and_input_gradient():
    net = MlpNet((3, 6, 6, 2), np.zeros(weight_count((3, 6, 6, 2))))
    np.testing.assert_array_equal(mlp_forward(net, [0.3, -1.0, 2.0]), [0.0, 0.0])
    np.testing.assert_array_equal(mlp_grad_input(net, [0.3, -1.0, 2.0], [1.0, -2.0]), [0.0, 0.0, 0.0])


def test_output_scales_with_slope():
    net = mlp_init(3, 1, 1.0, np.random.default_rng(2))
    doubled = MlpNet(net.layer_sizes, net.weights, slope=2.0)
    inputs = np.array([0.5, -0.2, 0.9])
    np.testing.assert_allclose(doubled.forward(inputs), 2.0 * net.forward(inputs))


def test_forward_matches_reference_evaluation():
    rng = np.random.default_rng(5)
    for k in range(10):
        activation = "tanh" if k % 2 else "linear"
        net = mlp_init(3 + k % 2, 1 + k % 3, 0.5 + k, rng, output_activation=activation)
        net.weights = rng.uniform(-1.0, 1.0, size=net.weight_count)
        inputs = rng.uniform(-1.0, 1.0, size=net.n_in)
        np.testing.assert_allclose(net.forward(inputs), reference_forward(net, inputs), rtol=1e-12, atol=1e-14)


def test_weight_gradient_matches_central_differences():
    rng = np.random.default_rng(8)
    net = mlp_init(4, 4, 0.1, rng)
    net.weights = rng.uniform(-1.0, 1.0, size=net.weight_count)
    inputs = rng.uniform(-1.0, 1.0, size=4)
    cotangent = rng.normal(size=4)

    def weighted(weights):
        return float(np.dot(cotangent, MlpNet(net.layer_sizes, weights, net.slope).forward(inputs)))

    rel, _ = relative_error(mlp_grad_weights(net, inputs, cotangent), central_diff(weighted, net.weights))
    assert rel <= 1e-6


def test_weight_gradient_is_linear_in_cotangent():
    rng = np.random.default_rng(9)
    net = mlp_init(3, 3, 20.0, rng)
    inputs = rng.uniform(size=3)
    c1, c2 = np.array([1.0, 0.0, 0.0]), np.array([0.0, 2.0, 0.0])
    np.testing.assert_array_equal(mlp_grad_weights(net, inputs, np.zeros(3)), np.zeros(net.weight_count))
    np.testing.assert_allclose(
        mlp_grad_weights(net, inputs, c1 + c2),
        mlp_grad_weights(net, inputs, c1) + mlp_grad_weights(net, inputs, c2),
        rtol=1e-13,
        atol=1e-15,
    )


def test_single_linear_layer_input_gradient():
    W = np.array([[0.5, 1.0, -2.0], [0.0, 3.0, 0.25]])  # bias column first
    net = MlpNet((2, 2), W.reshape(-1))
    cotangent = np.array([1.5, -1.0])
    np.testing.assert_allclose(net.grad_input([0.3, 0.7], cotangent), W[:, 1:].T @ cotangent)


def test_input_jacobian_convention():
    rng = np.random.default_rng(1)
    net = mlp_init(3, 2, 1.0, rng)
    inputs = rng.uniform(size=3)
    jac = net.input_jacobian(inputs)
    assert jac.shape == (3, 2)
    np.testing.assert_allclose(jac[:, 1], net.grad_input(inputs, [0.0, 1.0]))


def test_dimension_errors():
    net = mlp_init(3, 1, 1.0, np.random.default_rng(0))
    with pytest.raises(DimensionError):
        net.forward([1.0, 2.0])
    with pytest.raises(DimensionError):
        net.grad_weights([1.0, 2.0, 3.0], [1.0, 1.0])
    with pytest.raises(DimensionError):
        MlpNet((3, 6, 6, 1), np.zeros(99))


def test_random_nets_pass_gradient_check():
    report = check_mlp(20, rng=np.random.default_rng(12))
    assert report.passed, report.line()


def test_snapshot_round_trip(tmp_path):
    net = mlp_init(4, 4, 0.1, np.random.default_rng(3))
    path = save_snapshot(net, tmp_path / "nets" / "critic.json")
    document = json.loads(path.read_text())
    assert document["format"] == "clipped_adp.mlp"
    assert document["version"] == 1

    restored = load_snapshot(path)
    assert restored.layer_sizes == net.layer_sizes
    assert restored.slope == net.slope
    np.testing.assert_array_equal(restored.weights, net.weights)


def test_snapshot_rejects_other_documents(tmp_path):
    path = tmp_path / "other.json"
    path.write_text(json.dumps({"format": "something-else", "version": 1}))
    with pytest.raises(ValueError):
        load_snapshot(path)
