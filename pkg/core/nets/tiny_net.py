"""
Small fully connected networks with hand-written backpropagation.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

ACTIVATIONS = ("tanh", "identity")


@dataclass
class TinyNet:
    """
    Multilayer perceptron ``x -> W_L act(... act(x W_1 + b_1) ...) + b_L``.

    Hidden layers use ``activation``; the output layer is linear. Inputs are
    row-stacked, shape (n, in_dim).
    """
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation '{self.activation}'")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("TinyNet needs matching, non-empty weight and bias lists")

    @classmethod
    def initialize(cls, sizes: Sequence[int], rng: np.random.Generator,
                   activation: str = "tanh", scheme: str = "glorot") -> 'TinyNet':
        """
        Create a network with layer widths ``sizes`` (input first, output last).

        Args:
            sizes: Layer widths, at least two entries
            rng: Source of randomness
            activation: Hidden activation
            scheme: 'glorot' (uniform, zero biases) or 'truncated_normal'
                (unit truncated normal weights, U[-1, 1] biases)
        """
        if len(sizes) < 2:
            raise ValueError("A network needs at least an input and an output width")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if scheme == "glorot":
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
                biases.append(np.zeros(fan_out))
            elif scheme == "truncated_normal":
                w = truncnorm.rvs(-2.0, 2.0, size=(fan_in, fan_out), random_state=rng)
                weights.append(w / np.sqrt(fan_in))
                biases.append(rng.uniform(-1.0, 1.0, size=fan_out))
            else:
                raise ValueError(f"Unknown initialization scheme '{scheme}'")
        return cls(weights=weights, biases=biases, activation=activation)

    @property
    def sizes(self) -> List[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def _act(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z) if self.activation == "tanh" else z

    def _act_grad(self, a: np.ndarray) -> np.ndarray:
        # derivative written in terms of the activation output
        return 1.0 - a * a if self.activation == "tanh" else np.ones_like(a)

    def forward(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.forward_with_cache(x)
        return out

    def forward_with_cache(self, x: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        activations = [np.atleast_2d(np.asarray(x, dtype=float))]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            last = layer == len(self.weights) - 1
            activations.append(z if last else self._act(z))
        return activations[-1], activations

    def backward(self, cache: List[np.ndarray], grad_out: np.ndarray
                 ) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
        """
        Backpropagate ``grad_out`` (dLoss/dOutput) through a cached forward pass.

        Returns:
            Tuple of weight gradients, bias gradients and dLoss/dInput
        """
        grad_w = [np.zeros_like(w) for w in self.weights]
        grad_b = [np.zeros_like(b) for b in self.biases]
        delta = grad_out
        for layer in range(len(self.weights) - 1, -1, -1):
            grad_w[layer] = cache[layer].T @ delta
            grad_b[layer] = delta.sum(axis=0)
            delta = delta @ self.weights[layer].T
            if layer > 0:
                delta = delta * self._act_grad(cache[layer])
        return grad_w, grad_b, delta

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in optimizer order (updated in place)."""
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    @staticmethod
    def interleave(grad_w: List[np.ndarray], grad_b: List[np.ndarray]) -> List[np.ndarray]:
        return [g for pair in zip(grad_w, grad_b) for g in pair]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def copy(self) -> 'TinyNet':
        return TinyNet([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'activation': self.activation,
            'weights': [w.tolist() for w in self.weights],
            'biases': [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'TinyNet':
        return cls(
            weights=[np.asarray(w, dtype=float) for w in data['weights']],
            biases=[np.asarray(b, dtype=float) for b in data['biases']],
            activation=data.get('activation', 'tanh'),
        )
