import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import numpy as np
import pytest

from core.instances.gambler import GamblerSystem
from core.matkit.linalg import embed_top_left
from core.models.trajectory import InitState
from core.policies.simple import ExpertPolicy, LinearPolicy, ZeroPolicy, gaussian_wrap
from core.simkit.dataset import sample_dataset
from core.simkit.probes import (GreedyCancelController, RotationController, ZeroController, calibrate_eiiss,
                                compounding_probe, eiiss_check, growth_bound, orthogonal_compounding_mc)
from core.simkit.risks import RiskEvaluator, evaluate_policy
from core.simkit.rollout import e1_cost_curve, rollout, rollout_batch
from core.utils.errors import PreconditionError


def test_rollout_single_step(stable_inst):
    init = stable_inst.sample_init(np.random.default_rng(0))
    traj = rollout(ExpertPolicy(stable_inst), stable_inst, init, 1, np.random.default_rng(0))
    assert traj.H == 1
    assert np.array_equal(traj.states[0], init.x1)
    with pytest.raises(PreconditionError):
        rollout(ExpertPolicy(stable_inst), stable_inst, init, 0, np.random.default_rng(0))


def test_rollout_stops_at_blowup():
    system = GamblerSystem(2.0, xi=1, eps0=0.01)
    traj = rollout(ZeroPolicy(1), system, system.sample_init(np.random.default_rng(0)), 40,
                   np.random.default_rng(0))
    assert traj.status == "blowup"
    assert traj.blowup_t == 28
    assert traj.H == 27
    assert system.traj_cost(traj.states, traj.inputs, blown_up=True) == 1.0
    curve = e1_cost_curve(traj, 40)
    assert curve.shape == (40,)
    assert np.all(curve[27:] == curve[26])


def test_rollout_is_reproducible(stable_inst):
    policy = gaussian_wrap(ExpertPolicy(stable_inst), 0.05, stable_inst.d)
    init = stable_inst.sample_init(np.random.default_rng(1))
    a = rollout(policy, stable_inst, init, 10, np.random.default_rng(5))
    b = rollout(policy, stable_inst, init, 10, np.random.default_rng(5))
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.inputs, b.inputs)


def test_rollout_batch_shapes(gambler):
    states, inputs = rollout_batch(ZeroPolicy(1), gambler, np.full(7, 0.01), 5, np.random.default_rng(0))
    assert states.shape == (5, 7)
    assert inputs.shape == (4, 7)
    assert np.allclose(states[4], 1.5 ** 4 * 0.01)


def test_empty_dataset(stable_inst):
    dataset = sample_dataset(stable_inst, 0, 4, np.random.default_rng(0))
    assert dataset.n == 0
    assert dataset.branch_counts() == {}
    with pytest.raises(PreconditionError):
        sample_dataset(stable_inst, -1, 4, np.random.default_rng(0))


def test_expert_has_zero_risk(stable_inst):
    report = evaluate_policy(ExpertPolicy(stable_inst), stable_inst, 8, 32, np.random.default_rng(2), max_workers=1)
    assert report.expert_l2.value == 0.0
    assert report.cost_risk.value == 0.0
    assert report.traj_l1.value == 0.0
    assert report.quantile == (0.1, 0.0)
    assert report.errors == []


def test_gaussian_expert_l2_scales_with_horizon(stable_inst):
    sigma, H = 0.05, 6
    policy = gaussian_wrap(ExpertPolicy(stable_inst), sigma, stable_inst.d)
    report = evaluate_policy(policy, stable_inst, H, 40, np.random.default_rng(3), noise_samples=16, max_workers=1)
    assert report.expert_l2.value == pytest.approx(H * sigma * np.sqrt(stable_inst.d), rel=0.05)
    assert report.traj_l1.value > 0.0
    rows = report.rows(n=0, seed=0)
    assert {row['metric'] for row in rows} >= {'expert_l2', 'cost_risk', 'traj_l1'}


def test_estimates_do_not_depend_on_workers(stable_inst):
    policy = gaussian_wrap(ExpertPolicy(stable_inst), 0.05, stable_inst.d)
    serial = RiskEvaluator(policy, stable_inst, 5, noise_samples=2, max_workers=1).collect(12, np.random.default_rng(4))
    threaded = RiskEvaluator(policy, stable_inst, 5, noise_samples=2, max_workers=4).collect(12, np.random.default_rng(4))
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.sq_errors, b.sq_errors)
        assert a.cost_learner == b.cost_learner
        assert a.traj_l1 == b.traj_l1


def test_blowups_are_reported():
    system = GamblerSystem(2.0, xi=1, eps0=0.01)
    report = evaluate_policy(ZeroPolicy(1), system, 40, 4, np.random.default_rng(0), max_workers=1)
    assert report.errors
    assert report.cost_risk.value == pytest.approx(0.99)
    assert report.quantile[1] == 1.0


def test_quantile_rejects_bad_delta(stable_inst):
    pairs = RiskEvaluator(ExpertPolicy(stable_inst), stable_inst, 3, max_workers=1).collect(4, np.random.default_rng(0))
    with pytest.raises(PreconditionError):
        RiskEvaluator.quantile(pairs, 1.5)


def test_eiiss_identity_is_tight():
    report = eiiss_check(lambda x, u, t: u, 1.0, 0.0, 10, 50, np.random.default_rng(0), d=3)
    assert report.passed
    assert report.max_ratio == pytest.approx(1.0, abs=1e-9)
    assert calibrate_eiiss(lambda x, u, t: u, 0.0, 10, 20, np.random.default_rng(1), d=3) == pytest.approx(2.0)


def test_eiiss_detects_expanding_system():
    report = eiiss_check(lambda x, u, t: 1.1 * x + u, 1.0, 0.9, 16, 20, np.random.default_rng(0), d=2)
    assert not report.passed
    assert report.max_violation > 0.0
    with pytest.raises(PreconditionError):
        eiiss_check(lambda x, u, t: u, 1.0, 0.5, 1, 5, np.random.default_rng(0))


def test_compounding_probe_zero_perturbation(stable_inst):
    curve = compounding_probe(ExpertPolicy(stable_inst), stable_inst, 6, 0.0, np.random.default_rng(0))
    assert np.array_equal(curve.curve, np.zeros(6))


def test_cross_gain_probe_grows_geometrically(stable_inst):
    inst = stable_inst.with_index(2)
    policy = LinearPolicy(embed_top_left(inst.pair.K1, inst.d))
    result = compounding_probe(policy, inst, 10, 1e-6, np.random.default_rng(0), init=InitState(x1=np.zeros(inst.d)))
    factor = 2.0 + 3.0 * inst.mu / 4.0
    assert result.status == "ok"
    assert np.allclose(result.curve, factor ** np.arange(10), rtol=1e-6)


def test_growth_bound_values():
    assert growth_bound(64, 1.5, 8) == pytest.approx(1.0 - 8.0 * np.exp(-64.0 / 18.0))
    assert growth_bound(1, 1.5, 8) == 0.0


def test_rotation_growth_high_dimension():
    result = orthogonal_compounding_mc(64, 1.5, 8, GreedyCancelController(), 1000, np.random.default_rng(0))
    assert result.frequency >= result.analytic_bound
    assert result.ci_low <= result.frequency <= result.ci_high


def test_rotation_growth_without_control_is_certain():
    result = orthogonal_compounding_mc(8, 1.5, 8, ZeroController(), 200, np.random.default_rng(1))
    assert result.frequency == 1.0


def test_sign_adaptive_control_in_one_dimension():
    result = orthogonal_compounding_mc(1, 1.5, 8, GreedyCancelController(), 2000, np.random.default_rng(2))
    assert result.frequency <= 0.02


def test_exact_rotations_agree_with_sphere_sampling():
    result = orthogonal_compounding_mc(4, 1.5, 4, ZeroController(), 20, np.random.default_rng(3), exact_rotations=True)
    assert result.frequency == 1.0
    with pytest.raises(PreconditionError):
        orthogonal_compounding_mc(4, 1.0, 4, ZeroController(), 20, np.random.default_rng(3))


def test_rotation_controller_needs_a_control_law():
    with pytest.raises(TypeError):
        RotationController()

    class Damped(RotationController):
        name = "damped"

        def __call__(self, history, t, rho):
            return -0.5 * rho * history.current

    result = orthogonal_compounding_mc(2, 1.5, 4, Damped(), 50, np.random.default_rng(5))
    assert result.controller == "damped"
    assert 0.0 <= result.frequency <= 1.0
