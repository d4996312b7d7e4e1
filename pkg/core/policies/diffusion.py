"""
Toy DDPM policy: a conditional denoiser over actions or action chunks.

The denoiser is three linear layers of width 16 with tanh activations whose
hidden features are modulated (FiLM) by a linear map of the sinusoidal
timestep embedding concatenated with the state. Backpropagation is written
out by hand.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.models.reports import TrainingPoint, TrainingResult
from core.models.trajectory import Dataset
from core.nets.optim import AdamW, cosine_lr
from core.policies.base import MarkovPolicy
from core.policies.mlp import Standardizer
from core.utils.errors import DivergenceError, PreconditionError
from core.utils.logger import Logger


@dataclass
class DiffusionConfig:
    """
    Attributes:
        steps: Number of diffusion steps
        beta_start, beta_end: Linear noise schedule endpoints
        hidden: Denoiser width
        embed_dim: Sinusoidal timestep embedding size
        chunk_len: Actions generated per sample
        iterations, batch_size, lr, weight_decay: Optimizer settings
        eval_every: Iterations between loss evaluations
    """
    steps: int = 16
    beta_start: float = 0.01
    beta_end: float = 0.5
    hidden: int = 16
    embed_dim: int = 256
    chunk_len: int = 1
    iterations: int = 5000
    batch_size: int = 128
    lr: float = 1e-3
    weight_decay: float = 1e-3
    eval_every: int = 500


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard transformer timestep embedding, shape (len(t), dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    angles = np.asarray(t, dtype=float)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class FiLMDenoiser:
    """epsilon_hat(a_t, t, x) with FiLM conditioning on [embed(t), x]."""

    NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "Wc", "bc")

    def __init__(self, params: Dict[str, np.ndarray], embed_dim: int):
        self.params = params
        self.embed_dim = embed_dim
        self.hidden = params["W1"].shape[1]

    @classmethod
    def initialize(cls, action_dim: int, state_dim: int, hidden: int, embed_dim: int,
                   rng: np.random.Generator) -> 'FiLMDenoiser':
        def glorot(fan_in, fan_out):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        cond_dim = embed_dim + state_dim
        params = {
            "W1": glorot(action_dim, hidden), "b1": np.zeros(hidden),
            "W2": glorot(hidden, hidden), "b2": np.zeros(hidden),
            "W3": glorot(hidden, action_dim), "b3": np.zeros(action_dim),
            "Wc": glorot(cond_dim, 4 * hidden), "bc": np.zeros(4 * hidden),
        }
        return cls(params, embed_dim)

    def parameters(self) -> List[np.ndarray]:
        return [self.params[name] for name in self.NAMES]

    def _condition(self, t: np.ndarray, x: np.ndarray) -> np.ndarray:
        return np.hstack([sinusoidal_embedding(t, self.embed_dim), x])

    def forward(self, a: np.ndarray, t: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        p, h = self.params, self.hidden
        c = self._condition(t, x)
        film = c @ p["Wc"] + p["bc"]
        g1, s1, g2, s2 = film[:, :h], film[:, h:2 * h], film[:, 2 * h:3 * h], film[:, 3 * h:]
        h1 = np.tanh(a @ p["W1"] + p["b1"])
        m1 = h1 * (1.0 + g1) + s1
        h2 = np.tanh(m1 @ p["W2"] + p["b2"])
        m2 = h2 * (1.0 + g2) + s2
        out = m2 @ p["W3"] + p["b3"]
        cache = {"a": a, "c": c, "g1": g1, "g2": g2, "h1": h1, "m1": m1, "h2": h2, "m2": m2}
        return out, cache

    def backward(self, cache: Dict[str, np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
        p = self.params
        grads = {"W3": cache["m2"].T @ grad_out, "b3": grad_out.sum(axis=0)}
        dm2 = grad_out @ p["W3"].T
        dg2, ds2 = dm2 * cache["h2"], dm2
        dz2 = dm2 * (1.0 + cache["g2"]) * (1.0 - cache["h2"] ** 2)
        grads["W2"], grads["b2"] = cache["m1"].T @ dz2, dz2.sum(axis=0)
        dm1 = dz2 @ p["W2"].T
        dg1, ds1 = dm1 * cache["h1"], dm1
        dz1 = dm1 * (1.0 + cache["g1"]) * (1.0 - cache["h1"] ** 2)
        grads["W1"], grads["b1"] = cache["a"].T @ dz1, dz1.sum(axis=0)
        dfilm = np.hstack([dg1, ds1, dg2, ds2])
        grads["Wc"], grads["bc"] = cache["c"].T @ dfilm, dfilm.sum(axis=0)
        return [grads[name] for name in self.NAMES]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.params.values())

    def to_dict(self) -> Dict[str, Any]:
        return {'embed_dim': self.embed_dim, 'params': {k: v.tolist() for k, v in self.params.items()}}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FiLMDenoiser':
        return cls({k: np.asarray(v, dtype=float) for k, v in data['params'].items()}, int(data['embed_dim']))


class NoiseSchedule:
    """Linear beta schedule with the derived alpha products and posterior variances."""

    def __init__(self, steps: int, beta_start: float, beta_end: float):
        self.steps = steps
        self.betas = np.linspace(beta_start, beta_end, steps)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        self.posterior_var = self.betas * (1.0 - prev) / (1.0 - self.alpha_bars)


class ToyDiffusionPolicy(MarkovPolicy):
    """Samples an action chunk by running the reverse chain conditioned on the state."""

    kind = "toy_diffusion"
    deterministic = False
    plan_needs_rng = True

    def __init__(self, denoiser: FiLMDenoiser, schedule: NoiseSchedule, x_norm: Standardizer,
                 a_norm: Standardizer, d: int, chunk_len: int):
        self.denoiser = denoiser
        self.schedule = schedule
        self.x_norm = x_norm
        self.a_norm = a_norm
        self.d = d
        self.model_chunk_len = chunk_len

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One normalized-space reverse chain, returned as a (chunk_len, d) array."""
        sched = self.schedule
        cond = self.x_norm.apply(np.asarray(x, dtype=float))[None, :]
        a = rng.standard_normal((1, self.d * self.model_chunk_len))
        for t in range(sched.steps - 1, -1, -1):
            eps_hat, _ = self.denoiser.forward(a, np.array([t]), cond)
            coef = sched.betas[t] / np.sqrt(1.0 - sched.alpha_bars[t])
            a = (a - coef * eps_hat) / np.sqrt(sched.alphas[t])
            if t > 0:
                a = a + np.sqrt(sched.posterior_var[t]) * rng.standard_normal(a.shape)
        return self.a_norm.invert(a[0]).reshape(self.model_chunk_len, self.d)

    def plan(self, x: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
        if length > self.model_chunk_len:
            raise ValueError(f"Plan length {length} exceeds the trained chunk length {self.model_chunk_len}")
        return self.sample(x, rng)[:length]

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        return self.plan(x, 1, rng)[0]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'toy_diffusion',
            'denoiser': self.denoiser.to_dict(),
            'steps': self.schedule.steps,
            'betas': [float(self.schedule.betas[0]), float(self.schedule.betas[-1])],
            'x_norm': self.x_norm.to_dict(),
            'a_norm': self.a_norm.to_dict(),
            'd': self.d,
            'chunk_len': self.model_chunk_len,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ToyDiffusionPolicy':
        schedule = NoiseSchedule(int(data['steps']), float(data['betas'][0]), float(data['betas'][1]))
        return cls(FiLMDenoiser.from_dict(data['denoiser']), schedule, Standardizer.from_dict(data['x_norm']),
                   Standardizer.from_dict(data['a_norm']), int(data['d']), int(data['chunk_len']))


def chunk_pairs(dataset: Dataset, chunk_len: int) -> Tuple[np.ndarray, np.ndarray]:
    """(x_t, [u_t, ..., u_{t+chunk_len-1}]) for every full chunk in the dataset."""
    states, chunks = [], []
    for traj in dataset.trajectories:
        targets = traj.targets
        for t in range(traj.H - chunk_len + 1):
            states.append(traj.states[t])
            chunks.append(targets[t:t + chunk_len].reshape(-1))
    if not states:
        return np.zeros((0, 0)), np.zeros((0, 0))
    return np.stack(states), np.stack(chunks)


def toy_diffusion_train(dataset: Dataset, config: Optional[DiffusionConfig] = None,
                        rng: Optional[np.random.Generator] = None) -> TrainingResult:
    """
    Train the denoiser by noise regression.

    Args:
        dataset: Demonstrations, n >= 1
        config: Schedule, architecture and optimizer settings
        rng: Source of randomness

    Returns:
        TrainingResult: ToyDiffusionPolicy and denoising-loss trace

    Raises:
        PreconditionError: If the dataset has no full chunk
        DivergenceError: If the loss becomes non-finite
    """
    logger = Logger("ToyDiffusion").logger
    config = config or DiffusionConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    X, A = chunk_pairs(dataset, config.chunk_len)
    if X.shape[0] == 0:
        raise PreconditionError("toy_diffusion_train needs at least one full action chunk")

    d = dataset.trajectories[0].states.shape[1]
    x_norm, a_norm = Standardizer.fit(X), Standardizer.fit(A)
    X, A = x_norm.apply(X), a_norm.apply(A)
    schedule = NoiseSchedule(config.steps, config.beta_start, config.beta_end)
    denoiser = FiLMDenoiser.initialize(A.shape[1], d, config.hidden, config.embed_dim, rng)
    optimizer = AdamW(lr=config.lr, weight_decay=config.weight_decay)

    logger.info(f"Training toy diffusion on {X.shape[0]} chunks of length {config.chunk_len}")
    trace = []
    batch = min(config.batch_size, X.shape[0])
    running = []
    for iteration in range(config.iterations):
        idx = rng.integers(0, X.shape[0], size=batch)
        t = rng.integers(0, config.steps, size=batch)
        noise = rng.standard_normal((batch, A.shape[1]))
        ab = schedule.alpha_bars[t][:, None]
        noisy = np.sqrt(ab) * A[idx] + np.sqrt(1.0 - ab) * noise
        pred, cache = denoiser.forward(noisy, t, X[idx])
        loss = float(np.mean((pred - noise) ** 2))
        if not np.isfinite(loss):
            logger.error(f"Toy diffusion training diverged at iteration {iteration}")
            raise DivergenceError(f"Denoising loss became non-finite at iteration {iteration}")
        running.append(loss)
        grads = denoiser.backward(cache, 2.0 * (pred - noise) / pred.size)
        optimizer.step(denoiser.parameters(), grads, lr=cosine_lr(config.lr, iteration, config.iterations))
        if (iteration + 1) % config.eval_every == 0 or iteration + 1 == config.iterations:
            trace.append(TrainingPoint(iteration + 1, float(np.mean(running)), float('nan')))
            running = []
    if not denoiser.is_finite():
        raise DivergenceError("Denoiser parameters became non-finite")

    policy = ToyDiffusionPolicy(denoiser, schedule, x_norm, a_norm, d, config.chunk_len)
    if trace:
        logger.info(f"Toy diffusion training done: loss {trace[-1].train_loss:.3e}")
    return TrainingResult(policy=policy, trace=trace)
