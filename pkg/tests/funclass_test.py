import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from core.funclass.hard_function import (SmoothFunction, amplitude_for, sample_hard_function, target_from_dict,
                                         zero_function)
from core.funclass.local_estimator import (RegressionSample, fit_local_estimator, fit_local_estimator_clamped,
                                           regression_risk)
from core.funclass.rates import log_log_slopes, rate_sweep
from core.matkit.sampling import sample_unit_ball
from core.utils.errors import PreconditionError


def test_hard_function_peaks_at_centers():
    g = sample_hard_function(2, 2, 0.25, np.random.default_rng(5))
    assert g.centers.shape[0] >= 1
    values = np.asarray(g(g.centers))
    assert np.allclose(values, g.signs * g.amplitude)
    assert g.amplitude == pytest.approx(amplitude_for(0.25, 2))


def test_hard_function_is_bounded():
    g = sample_hard_function(3, 2, 0.3, np.random.default_rng(6))
    z = sample_unit_ball(3, 2000, np.random.default_rng(8))
    assert np.max(np.abs(g(z))) <= g.amplitude + 1e-12


def test_hard_function_rejects_bad_eps():
    with pytest.raises(PreconditionError):
        sample_hard_function(2, 2, 1.5, np.random.default_rng(0))
    with pytest.raises(PreconditionError):
        sample_hard_function(2, 0, 0.5, np.random.default_rng(0))


def test_target_serialization_preserves_values():
    g = sample_hard_function(2, 1, 0.5, np.random.default_rng(9))
    restored = target_from_dict(g.to_dict())
    assert isinstance(restored, SmoothFunction)
    z = sample_unit_ball(2, 50, np.random.default_rng(10))
    assert np.array_equal(restored(z), g(z))


def test_zero_function_vanishes():
    g = zero_function(2)
    assert np.all(np.asarray(g(np.zeros((5, 2)))) == 0.0)


def test_local_linear_recovers_affine_target():
    def affine(z):
        z = np.atleast_2d(z)
        return 1.0 + 2.0 * z[:, 0] - z[:, 1]

    rng = np.random.default_rng(12)
    sample = RegressionSample.draw(affine, 2, 400, rng)
    est = fit_local_estimator(sample, degree=1)
    risk = regression_risk(est, affine, 500, rng)
    assert risk.value < 1e-8


def test_local_estimator_interpolates_training_points():
    rng = np.random.default_rng(13)
    g = sample_hard_function(2, 2, 0.25, rng)
    sample = RegressionSample.draw(g, 2, 200, rng)
    est = fit_local_estimator(sample, degree=1)
    assert np.allclose(est(sample.inputs[:20]), sample.labels[:20])


def test_local_estimator_is_linear_in_labels():
    rng = np.random.default_rng(14)
    g1 = sample_hard_function(2, 2, 0.25, rng)
    g2 = sample_hard_function(2, 2, 0.25, rng)
    inputs = sample_unit_ball(2, 300, rng)
    averaged = 0.5 * (g1(inputs) + g2(inputs))
    assert np.all(np.abs(averaged) <= 1.0)

    est1 = fit_local_estimator(RegressionSample(inputs, g1(inputs)), degree=1)
    est2 = fit_local_estimator(RegressionSample(inputs, g2(inputs)), degree=1)
    est_avg = fit_local_estimator(RegressionSample(inputs, averaged), degree=1)
    queries = sample_unit_ball(2, 500, rng)
    assert np.allclose(est_avg(queries), 0.5 * (est1(queries) + est2(queries)), atol=1e-10)


def test_fallback_count_under_concurrent_predictions():
    # identical inputs make every local system rank deficient
    est = fit_local_estimator(RegressionSample(np.zeros((8, 1)), np.ones(8)), degree=1)
    queries = np.full((10, 1), 0.5)
    with ThreadPoolExecutor(max_workers=8) as executor:
        results = list(executor.map(lambda _: est.predict(queries), range(100)))
    assert all(np.all(r == 1.0) for r in results)
    assert est.fallbacks == 1000


def test_local_estimator_size_checks():
    sample = RegressionSample(np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(PreconditionError):
        fit_local_estimator(sample, degree=1)
    est = fit_local_estimator_clamped(sample, degree=1)
    assert est.degree == 0
    with pytest.raises(PreconditionError):
        fit_local_estimator(RegressionSample(np.zeros((0, 2)), np.zeros(0)))


def test_log_log_slopes_exact_power_law():
    n_grid = [64, 128, 256, 512]
    risks = {(n, j): 3.0 * n ** -1.0 for n in n_grid for j in range(2)}
    slopes = log_log_slopes(risks, n_grid, 2)
    assert slopes == pytest.approx([-1.0, -1.0])


def test_log_log_slopes_skips_incomplete_seeds():
    n_grid = [64, 128, 256, 512]
    risks = {(n, 0): float(n) ** -0.5 for n in n_grid}
    risks[(64, 1)] = 0.1
    assert len(log_log_slopes(risks, n_grid, [0, 1])) == 1


def test_rate_sweep_constant_target_skips():
    result = rate_sweep(2, 2, [16, 32, 64, 128], 1, np.random.default_rng(0), constant_target=True)
    assert result.status == "skipped"
    assert np.isnan(result.slope)


def test_rate_sweep_rejects_short_grid():
    with pytest.raises(PreconditionError):
        rate_sweep(2, 2, [16, 32], 1, np.random.default_rng(0))


@pytest.mark.slow
def test_rate_sweep_slope_near_minus_s_over_k():
    result = rate_sweep(2, 2, [64, 128, 256, 512, 1024, 2048], 4, np.random.default_rng(1))
    assert result.status == "ok"
    assert -1.5 <= result.slope <= -0.5
