"""
Local polynomial least squares over nearest neighbours.
"""

import threading
from dataclasses import dataclass
from math import comb
from typing import Callable, Optional

import numpy as np
from sklearn.neighbors import NearestNeighbors
from sklearn.preprocessing import PolynomialFeatures

from core.matkit.sampling import sample_unit_ball
from core.models.reports import MonteCarloEstimate
from core.utils.errors import PreconditionError


@dataclass
class RegressionSample:
    """Noiseless regression data: labels == g(inputs)."""
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("RegressionSample needs one label per input")

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def k(self) -> int:
        return int(self.inputs.shape[1])

    @classmethod
    def draw(cls, g: Callable, k: int, n: int, rng: np.random.Generator) -> 'RegressionSample':
        """n inputs uniform on the unit ball of R^k, labelled by g."""
        inputs = sample_unit_ball(k, n, rng)
        return cls(inputs=inputs, labels=np.asarray(g(inputs), dtype=float).reshape(-1))


def n_coefficients(k: int, degree: int) -> int:
    return comb(k + degree, degree)


class LocalEstimator:
    """
    Predicts with a degree-``degree`` polynomial fitted by least squares to the
    ``neighborhood_size`` nearest training points of each query.

    Queries that coincide with a training input return its label, and
    rank-deficient local systems fall back to the nearest label. The
    ``fallbacks`` counter is safe to update from concurrent predictions.
    """

    def __init__(self, sample: RegressionSample, degree: int, neighborhood_size: int, batch_size: int = 4096):
        self.sample = sample
        self.degree = degree
        self.neighborhood_size = neighborhood_size
        self.batch_size = batch_size
        self.n_coef = n_coefficients(sample.k, degree)
        self.fallbacks = 0
        self._fallback_lock = threading.Lock()

        self._nn = NearestNeighbors(n_neighbors=neighborhood_size, algorithm="kd_tree").fit(sample.inputs)
        self._basis = PolynomialFeatures(degree=degree, include_bias=True).fit(np.zeros((1, sample.k)))

    def __call__(self, z) -> np.ndarray:
        return self.predict(z)

    def predict(self, z) -> np.ndarray:
        """
        Predict at one point (k,) or a batch (m, k).

        Returns:
            float for a single point, otherwise an (m,) array
        """
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        queries = z.reshape(-1, self.sample.k)
        out = np.empty(queries.shape[0])
        for start in range(0, queries.shape[0], self.batch_size):
            stop = start + self.batch_size
            out[start:stop] = self._predict_batch(queries[start:stop])
        return float(out[0]) if single else out

    def _predict_batch(self, queries: np.ndarray) -> np.ndarray:
        dist, idx = self._nn.kneighbors(queries)
        labels = self.sample.labels[idx]
        nearest = labels[:, 0].copy()

        # local coordinates scaled to the neighbourhood radius
        scale = np.maximum(dist[:, -1], 1e-300)[:, None, None]
        disp = (self.sample.inputs[idx] - queries[:, None, :]) / scale
        m, nb, k = disp.shape
        design = self._basis.transform(disp.reshape(m * nb, k)).reshape(m, nb, self.n_coef)

        ranks = np.linalg.matrix_rank(design)
        full = ranks == self.n_coef
        preds = nearest
        if np.any(full):
            coef = np.linalg.pinv(design[full]) @ labels[full][:, :, None]
            preds[full] = coef[:, 0, 0]
        with self._fallback_lock:
            self.fallbacks += int(np.sum(~full))

        exact = dist[:, 0] == 0.0
        preds[exact] = labels[exact, 0]
        return preds


def fit_local_estimator(sample: RegressionSample, degree: int = 1,
                        neighborhood_size: Optional[int] = None) -> LocalEstimator:
    """
    Fit a local polynomial estimator.

    Args:
        sample: Training data
        degree: Polynomial degree (s - 1 for smoothness order s)
        neighborhood_size: Neighbours per fit; defaults to 4 x number of coefficients

    Returns:
        LocalEstimator: The fitted predictor

    Raises:
        PreconditionError: If the sample is empty or too small for the neighbourhood
    """
    if sample.n == 0:
        raise PreconditionError("Cannot fit a local estimator on an empty sample")
    n_coef = n_coefficients(sample.k, degree)
    if neighborhood_size is None:
        neighborhood_size = 4 * n_coef
    if not (sample.n >= neighborhood_size >= n_coef):
        raise PreconditionError(
            f"Need n >= neighborhood_size >= {n_coef} coefficients, "
            f"got n={sample.n}, neighborhood_size={neighborhood_size}"
        )
    return LocalEstimator(sample, degree, neighborhood_size)


def fit_local_estimator_clamped(sample: RegressionSample, degree: int,
                                neighborhood_size: Optional[int] = None) -> LocalEstimator:
    """Like :func:`fit_local_estimator` but shrinks degree and neighbourhood for small samples."""
    if sample.n == 0:
        raise PreconditionError("Cannot fit a local estimator on an empty sample")
    while degree > 0 and n_coefficients(sample.k, degree) > sample.n:
        degree -= 1
    n_coef = n_coefficients(sample.k, degree)
    size = 4 * n_coef if neighborhood_size is None else neighborhood_size
    size = max(n_coef, min(size, sample.n))
    return LocalEstimator(sample, degree, size)


def regression_risk(est: Callable, g: Callable, m_queries: int, rng: np.random.Generator,
                    k: Optional[int] = None) -> MonteCarloEstimate:
    """
    Monte Carlo L2 risk E_z[|est(z) - g(z)|^2]^(1/2), z uniform on the unit ball.

    The standard error is propagated from the squared errors by the delta method.
    """
    if m_queries < 1:
        raise PreconditionError(f"m_queries must be >= 1, got {m_queries}")
    if k is None:
        k = est.sample.k
    queries = sample_unit_ball(k, m_queries, rng)
    sq = (np.asarray(est(queries)) - np.asarray(g(queries))) ** 2
    mse = MonteCarloEstimate.from_samples(sq)
    rmse = float(np.sqrt(max(mse.value, 0.0)))
    stderr = mse.stderr / (2.0 * rmse) if rmse > 0 else 0.0
    return MonteCarloEstimate(value=rmse, stderr=stderr, samples=m_queries)
