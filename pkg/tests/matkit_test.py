import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import numpy as np
import pytest

from core.matkit.bump import bump, bump_radial, bump_value, smooth_step
from core.matkit.linalg import (balancing_gain, challenging_pair, cross_instability, embed_top_left,
                                spectral_radius, stability_constants)
from core.matkit.sampling import greedy_packing, random_orthogonal, sample_unit_ball
from core.utils.errors import PreconditionError, UnstableMatrixError


def test_pair_spectra_at_quarter():
    pair = challenging_pair(0.25)
    # the discriminant of A1 is exactly zero here, so the closed form is exact
    assert spectral_radius(pair.A1) == pytest.approx(0.875, abs=1e-9)
    assert spectral_radius(pair.A2) == pytest.approx(0.9375, abs=1e-9)
    for i in (1, 2):
        assert spectral_radius(pair.A(i) + pair.K(i)) == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("mu", [0.05, 0.125, 0.5])
def test_pair_spectra_general(mu):
    pair = challenging_pair(mu)
    assert spectral_radius(pair.A1) == pytest.approx(1 - mu / 2, abs=1e-6)
    assert spectral_radius(pair.A2) == pytest.approx(max(1 - mu / 4, 1 - 2 * mu), abs=1e-12)
    assert np.allclose(pair.K1[:, 1], pair.K2[:, 1])


@pytest.mark.parametrize("mu", [0.0, -0.1, 0.75])
def test_pair_rejects_mu(mu):
    with pytest.raises(PreconditionError):
        challenging_pair(mu)


@pytest.mark.parametrize("mu", [0.125, 0.25])
def test_cross_instability_lower_bound(mu):
    pair = challenging_pair(mu)
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.uniform(-3.0, 3.0, size=2)
        Khat = np.array([[a, -pair.c_mu], [b, 0.0]])
        for H in (1, 5, 12):
            assert cross_instability(pair, Khat, H) >= (1 + mu / 4) ** H * (1 - 1e-9)


def test_balancing_gain_shares_e2_column():
    pair = challenging_pair(0.25)
    assert cross_instability(pair, balancing_gain(pair), 10) >= (1 + 0.25 / 4) ** 10 * (1 - 1e-9)


def test_cross_instability_rejects_wrong_column():
    pair = challenging_pair(0.25)
    with pytest.raises(PreconditionError):
        cross_instability(pair, np.eye(2), 3)


def test_stability_constants_envelope():
    A = challenging_pair(0.25).A2
    est = stability_constants(A, 30)
    assert 0.9375 < est.rho < 1.0
    assert est.C >= 1.0
    power = np.eye(2)
    for s in range(1, 31):
        power = power @ A
        assert np.linalg.norm(power, 2) <= est.C * est.rho ** s * (1 + 1e-9)


def test_stability_constants_rejects_unstable():
    with pytest.raises(UnstableMatrixError):
        stability_constants(np.diag([1.1, 0.2]), 10)


def test_spectral_radius_large_matrix():
    A = embed_top_left(challenging_pair(0.25).A2, 5)
    assert spectral_radius(A) == pytest.approx(0.9375, abs=1e-9)
    with pytest.raises(PreconditionError):
        spectral_radius(np.zeros((2, 3)))


def test_bump_profile():
    assert bump_value(np.zeros(3)) == 1.0
    assert bump_value(np.array([0.5, 0.5])) == 1.0
    assert bump_value(np.array([2.0, 0.0])) == 0.0
    middle = bump_value(np.array([1.5, 0.0]))
    assert 0.0 < middle < 1.0
    radii = np.linspace(1.0, 2.0, 50)
    assert np.all(np.diff(bump_radial(radii)) <= 0.0)
    assert bump(np.zeros((4, 2))).shape == (4,)


def test_smooth_step_limits():
    assert np.array_equal(smooth_step(np.array([-1.0, 0.0, 1.0, 2.0])), [0.0, 0.0, 1.0, 1.0])


def test_random_orthogonal_is_orthogonal():
    Q = random_orthogonal(6, np.random.default_rng(1))
    assert np.allclose(Q.T @ Q, np.eye(6), atol=1e-12)


def test_unit_ball_samples():
    z = sample_unit_ball(3, 500, np.random.default_rng(2))
    assert z.shape == (500, 3)
    assert np.all(np.linalg.norm(z, axis=1) <= 1.0)


def test_greedy_packing_is_valid():
    packing = greedy_packing(2, 0.5, 1.0, 40, np.random.default_rng(4))
    assert packing.size >= 2
    assert packing.is_valid()
    dists = np.linalg.norm(packing.centers[:, None] - packing.centers[None], axis=-1)
    assert np.min(dists[np.triu_indices(packing.size, 1)]) >= 0.5 * (1 - 1e-9)
