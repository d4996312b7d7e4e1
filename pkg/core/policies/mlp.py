"""
Behavior cloning with a small tanh MLP trained by AdamW on a cosine schedule.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from core.models.reports import TrainingPoint, TrainingResult
from core.models.trajectory import Dataset
from core.nets.optim import AdamW, cosine_lr
from core.nets.tiny_net import TinyNet
from core.policies.base import MarkovPolicy
from core.utils.errors import DivergenceError, PreconditionError
from core.utils.logger import Logger


@dataclass
class MLPConfig:
    """
    Architecture and optimizer settings.

    Attributes:
        hidden: Width of every hidden layer
        layers: Number of linear layers
        activation: 'tanh' or 'identity'
        iterations: Optimizer steps
        batch_size: Minibatch size
        lr: Peak learning rate
        weight_decay: Decoupled weight decay
        eval_every: Iterations between validation evaluations
        val_fraction: Share of trajectories held out for validation
    """
    hidden: int = 16
    layers: int = 4
    activation: str = "tanh"
    iterations: int = 10000
    batch_size: int = 512
    lr: float = 1e-3
    weight_decay: float = 1e-3
    eval_every: int = 500
    val_fraction: float = 0.1


@dataclass
class Standardizer:
    """Per-feature affine normalization fitted on training data."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> 'Standardizer':
        mean = values.mean(axis=0)
        scale = values.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
        return cls(mean=mean, scale=scale)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.scale

    def invert(self, values: np.ndarray) -> np.ndarray:
        return values * self.scale + self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean.tolist(), 'scale': self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Standardizer':
        return cls(mean=np.asarray(data['mean'], dtype=float), scale=np.asarray(data['scale'], dtype=float))


class MLPPolicy(MarkovPolicy):
    """Deterministic network policy u = net(x) in standardized coordinates."""

    kind = "mlp"

    def __init__(self, net: TinyNet, x_norm: Standardizer, u_norm: Standardizer):
        self.net = net
        self.x_norm = x_norm
        self.u_norm = u_norm

    def predict(self, states: np.ndarray) -> np.ndarray:
        return self.u_norm.invert(self.net.forward(self.x_norm.apply(states)))

    def action(self, x: np.ndarray, t: int = 1, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        return self.predict(np.asarray(x, dtype=float)[None, :])[0]

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self.action(x, t)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'mlp', 'net': self.net.to_dict(),
                'x_norm': self.x_norm.to_dict(), 'u_norm': self.u_norm.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MLPPolicy':
        return cls(TinyNet.from_dict(data['net']), Standardizer.from_dict(data['x_norm']),
                   Standardizer.from_dict(data['u_norm']))


def split_pairs(dataset: Dataset, val_fraction: float, rng: np.random.Generator
                ) -> Tuple[Tuple[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Split (state, action) pairs by trajectory into train and validation sets."""
    n = dataset.n
    order = rng.permutation(n)
    n_val = int(round(val_fraction * n)) if n > 1 else 0
    n_val = min(max(n_val, 1 if val_fraction > 0 and n > 1 else 0), n - 1)
    val_ids, train_ids = order[:n_val], order[n_val:]

    def stack(ids):
        if len(ids) == 0:
            return np.zeros((0, 0)), np.zeros((0, 0))
        trajs = [dataset.trajectories[i] for i in sorted(ids)]
        return np.concatenate([t.states for t in trajs]), np.concatenate([t.targets for t in trajs])

    return stack(train_ids), stack(val_ids)


def _mse(net: TinyNet, X: np.ndarray, Y: np.ndarray) -> float:
    if X.shape[0] == 0:
        return float('nan')
    return float(np.mean((net.forward(X) - Y) ** 2))


def mlp_train(dataset: Dataset, config: Optional[MLPConfig] = None, rng: Optional[np.random.Generator] = None,
              checkpoint_callback: Optional[Callable[[int, MLPPolicy], float]] = None) -> TrainingResult:
    """
    Regress actions on states with a tanh MLP.

    Args:
        dataset: Demonstrations, n >= 1
        config: Architecture and optimizer settings
        rng: Source of randomness for initialization, split and minibatches
        checkpoint_callback: Called at every evaluation with the current policy;
            its return value is recorded as the rollout cost of that point

    Returns:
        TrainingResult: Policy and (iteration, train loss, validation loss) trace

    Raises:
        PreconditionError: If the dataset is empty
        DivergenceError: If the loss becomes non-finite
    """
    logger = Logger("MLPTrainer").logger
    config = config or MLPConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    if dataset.n == 0:
        raise PreconditionError("mlp_train needs a non-empty dataset")

    (X_train, Y_train), (X_val, Y_val) = split_pairs(dataset, config.val_fraction, rng)
    x_norm, u_norm = Standardizer.fit(X_train), Standardizer.fit(Y_train)
    X_train, Y_train = x_norm.apply(X_train), u_norm.apply(Y_train)
    if X_val.shape[0]:
        X_val, Y_val = x_norm.apply(X_val), u_norm.apply(Y_val)

    d_in, d_out = X_train.shape[1], Y_train.shape[1]
    sizes = [d_in] + [config.hidden] * (config.layers - 1) + [d_out]
    net = TinyNet.initialize(sizes, rng, activation=config.activation)
    optimizer = AdamW(lr=config.lr, weight_decay=config.weight_decay)
    policy = MLPPolicy(net, x_norm, u_norm)

    logger.info(f"Training MLP {sizes} on {X_train.shape[0]} pairs for {config.iterations} iterations")
    trace = []
    n_train = X_train.shape[0]
    batch = min(config.batch_size, n_train)
    for iteration in range(config.iterations + 1):
        if iteration % config.eval_every == 0 or iteration == config.iterations:
            train_loss = _mse(net, X_train, Y_train)
            val_loss = _mse(net, X_val, Y_val)
            if not np.isfinite(train_loss):
                logger.error(f"MLP training diverged at iteration {iteration}")
                raise DivergenceError(f"MLP training loss became non-finite at iteration {iteration}")
            rollout_cost = checkpoint_callback(iteration, policy) if checkpoint_callback else None
            trace.append(TrainingPoint(iteration, train_loss, val_loss, rollout_cost))
            logger.debug(f"iter {iteration}: train {train_loss:.3e} val {val_loss:.3e}")
        if iteration == config.iterations:
            break

        idx = rng.integers(0, n_train, size=batch)
        pred, cache = net.forward_with_cache(X_train[idx])
        grad_out = 2.0 * (pred - Y_train[idx]) / pred.size
        grad_w, grad_b, _ = net.backward(cache, grad_out)
        optimizer.step(net.parameters(), TinyNet.interleave(grad_w, grad_b),
                       lr=cosine_lr(config.lr, iteration, config.iterations))
        if not net.is_finite():
            logger.error(f"MLP parameters became non-finite at iteration {iteration}")
            raise DivergenceError(f"MLP parameters became non-finite at iteration {iteration}")

    logger.info(f"MLP training done: train {trace[-1].train_loss:.3e} val {trace[-1].val_loss:.3e}")
    return TrainingResult(policy=policy, trace=trace, errors=[], status="ok")
