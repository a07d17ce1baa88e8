"""Shortcut-connected multilayer perceptron used for actor and critic networks.

Every layer receives a bias plus the activations of all earlier layers (input included).
Weights are stored in one flat vector, ordered by destination layer, then destination node,
then source, where each destination node's sources are [bias, input nodes, hidden-1 nodes, ...].
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError

logger = logging.getLogger(__name__)

HIDDEN_LAYERS = (6, 6)
INIT_RANGE = 0.1
SNAPSHOT_FORMAT = "clipped_adp.mlp"
SNAPSHOT_VERSION = 1
OUTPUT_ACTIVATIONS = ("linear", "tanh")


def weight_count(layer_sizes: Sequence[int]) -> int:
    """Number of weights, biases included, for the all-pairs topology."""
    total = 0
    for dst in range(1, len(layer_sizes)):
        total += layer_sizes[dst] * (1 + sum(layer_sizes[:dst]))
    return total


@dataclass(eq=False)
class MlpNet:
    """A multilayer perceptron with shortcut connections between every pair of layers.

    Hidden layers use tanh. The output is act(slope * pre-activation) where act is the
    identity for "linear" and tanh for "tanh".
    """

    layer_sizes: Tuple[int, ...]
    weights: np.ndarray
    slope: float = 1.0
    output_activation: str = "linear"
    _layout: List[Tuple[int, int, int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise DimensionError(f"invalid layer sizes {self.layer_sizes}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation '{self.output_activation}'")
        self.weights = np.array(self.weights, dtype=np.float64)
        expected = weight_count(self.layer_sizes)
        if self.weights.shape != (expected,):
            raise DimensionError(
                f"layer sizes {self.layer_sizes} need {expected} weights, got {self.weights.shape}"
            )
        layout = []
        start = 0
        for dst in range(1, len(self.layer_sizes)):
            width = 1 + sum(self.layer_sizes[:dst])
            layout.append((start, self.layer_sizes[dst], width))
            start += self.layer_sizes[dst] * width
        self._layout = layout

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @property
    def weight_count(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "MlpNet":
        return MlpNet(self.layer_sizes, self.weights.copy(), self.slope, self.output_activation)

    def layer_matrix(self, dst: int, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """View of the (dst_size, 1 + sources) block feeding layer dst (1-based)."""
        start, rows, width = self._layout[dst - 1]
        flat = self.weights if weights is None else weights
        return flat[start:start + rows * width].reshape(rows, width)

    def _check(self, vector, size: int, what: str) -> np.ndarray:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.shape[0] != size:
            raise DimensionError(f"{what} has length {vector.shape[0]}, expected {size}")
        return vector

    def _trace(self, inputs: np.ndarray):
        activations = [inputs]
        last = len(self.layer_sizes) - 1
        for dst in range(1, last + 1):
            sources = np.concatenate(([1.0], *activations))
            pre = self.layer_matrix(dst) @ sources
            if dst < last:
                activations.append(np.tanh(pre))
            else:
                scaled = self.slope * pre
                out = np.tanh(scaled) if self.output_activation == "tanh" else scaled
                return activations, out
        raise AssertionError("unreachable")

    def forward(self, inputs) -> np.ndarray:
        inputs = self._check(inputs, self.n_in, "input")
        _, out = self._trace(inputs)
        return out

    def backward(self, inputs, cotangent) -> Tuple[np.ndarray, np.ndarray]:
        """Reverse pass for cotangent . output; returns (d/dweights, d/dinput)."""
        inputs = self._check(inputs, self.n_in, "input")
        cotangent = self._check(cotangent, self.n_out, "cotangent")
        activations, out = self._trace(inputs)

        grad = np.zeros_like(self.weights)
        upstream = [np.zeros(size) for size in self.layer_sizes[:-1]]
        last = len(self.layer_sizes) - 1
        for dst in range(last, 0, -1):
            if dst == last:
                delta = cotangent * self.slope
                if self.output_activation == "tanh":
                    delta = delta * (1.0 - out * out)
            else:
                delta = upstream[dst] * (1.0 - activations[dst] ** 2)
            sources = np.concatenate(([1.0], *activations[:dst]))
            self.layer_matrix(dst, grad)[:] = np.outer(delta, sources)
            back = self.layer_matrix(dst).T @ delta
            offset = 1
            for src in range(dst):
                size = self.layer_sizes[src]
                upstream[src] += back[offset:offset + size]
                offset += size
        return grad, upstream[0]

    def grad_weights(self, inputs, cotangent) -> np.ndarray:
        return self.backward(inputs, cotangent)[0]

    def grad_input(self, inputs, cotangent) -> np.ndarray:
        return self.backward(inputs, cotangent)[1]

    def input_jacobian(self, inputs) -> np.ndarray:
        """Full derivative of the outputs by the inputs, element (i, j) = d out^j / d in^i."""
        columns = [self.grad_input(inputs, basis) for basis in np.eye(self.n_out)]
        return np.stack(columns, axis=1)


def mlp_init(
    n_in: int,
    n_out: int,
    slope: float,
    rng: np.random.Generator,
    output_activation: str = "linear",
    hidden: Sequence[int] = HIDDEN_LAYERS,
) -> MlpNet:
    """New net with every weight and bias drawn uniformly from [-0.1, 0.1]."""
    if n_in < 1 or n_out < 1:
        raise DimensionError(f"network needs at least one input and output, got {n_in}, {n_out}")
    sizes = (n_in, *hidden, n_out)
    weights = rng.uniform(-INIT_RANGE, INIT_RANGE, size=weight_count(sizes))
    return MlpNet(sizes, weights, slope=slope, output_activation=output_activation)


def mlp_forward(net: MlpNet, inputs) -> np.ndarray:
    return net.forward(inputs)


def mlp_grad_weights(net: MlpNet, inputs, cotangent) -> np.ndarray:
    return net.grad_weights(inputs, cotangent)


def mlp_grad_input(net: MlpNet, inputs, cotangent) -> np.ndarray:
    return net.grad_input(inputs, cotangent)


def save_snapshot(net: MlpNet, path: Union[str, Path]) -> Path:
    """Write the net's weights in canonical order as a versioned JSON document."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "slope": net.slope,
        "output_activation": net.output_activation,
        "weights": net.weights.tolist(),
    }
    with open(path, "w") as f:
        json.dump(document, f)
    logger.debug(f"Saved {net.weight_count} weights to {path}")
    return path


def load_snapshot(path: Union[str, Path]) -> MlpNet:
    with open(path, "r") as f:
        document = json.load(f)
    if document.get("format") != SNAPSHOT_FORMAT:
        raise ValueError(f"{path} is not a {SNAPSHOT_FORMAT} snapshot")
    if document.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {document.get('version')} in {path}")
    return MlpNet(
        tuple(document["layer_sizes"]),
        np.array(document["weights"], dtype=np.float64),
        slope=float(document["slope"]),
        output_activation=document["output_activation"],
    )
