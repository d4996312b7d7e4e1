import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import numpy as np
import pytest

from core.instances.gambler import GamblerSystem
from core.models.trajectory import Dataset
from core.nets.tiny_net import TinyNet
from core.policies.anticoncentration import anti_concentration_estimate
from core.policies.base import History
from core.policies.bc import bc_learn, fit_linear_gain
from core.policies.chunking import LinearModel, chunk_wrap
from core.policies.diffusion import DiffusionConfig, toy_diffusion_train
from core.policies.mlp import MLPConfig, mlp_train
from core.policies.nonsimple import concentric_policy, gamblers_ruin_policy, interval_index, switching_policy
from core.policies.registry import policy_from_dict
from core.policies.simple import (ExpertPolicy, LinearPolicy, MixturePolicy, RandomNoisePolicy, ZeroPolicy,
                                  gaussian_wrap, is_simple)
from core.simkit.dataset import sample_dataset
from core.simkit.rollout import rollout, rollout_batch
from core.utils.errors import PreconditionError
from core.utils.rng import derive_rng


@pytest.mark.parametrize("rho", [1.25, 1.5, 2.0])
@pytest.mark.parametrize("xi", [-1, 1])
def test_concentric_reaches_zero_by_fourth_state(rho, xi):
    x1 = np.random.default_rng(3).uniform(-1.0, 1.0, size=500)
    states, _ = rollout_batch(concentric_policy(rho), GamblerSystem(rho, xi=xi), x1, 8, np.random.default_rng(0))
    assert np.all(states[3:] == 0.0)
    peak = np.max(np.abs(states), axis=0)
    assert np.all(peak <= (2.0 * rho) ** 2 * np.abs(x1) * (1 + 1e-12))


def test_interval_index_edges():
    rho = 1.5
    q = (2.0 * rho) ** 2
    assert interval_index(np.array([1.0]), rho)[0] == 1
    assert interval_index(np.array([1.0 / q]), rho)[0] == 2
    assert interval_index(np.array([0.0]), rho)[0] == 0


@pytest.mark.parametrize("xi", [-1, 1])
def test_switching_zeroes_third_state(xi):
    x1 = np.random.default_rng(4).uniform(-1.0, 1.0, size=500)
    states, _ = rollout_batch(switching_policy(1.5), GamblerSystem(1.5, xi=xi), x1, 6, np.random.default_rng(0))
    assert np.all(states[2:] == 0.0)


@pytest.mark.parametrize("xi", [-1, 1])
def test_history_switching_identifies_sign(xi):
    x1 = np.random.default_rng(5).uniform(0.1, 1.0, size=200)
    policy = switching_policy(1.5, history_dependent=True)
    states, _ = rollout_batch(policy, GamblerSystem(1.5, xi=xi), x1, 6, np.random.default_rng(0))
    assert np.allclose(states[2:], 0.0, atol=1e-12)


@pytest.mark.slow
def test_gamblers_ruin_laws():
    system = GamblerSystem(1.5, xi=1, eps0=0.01)
    runs = 100_000
    states, _ = rollout_batch(gamblers_ruin_policy(1.5), system, np.full(runs, 0.01), 11, np.random.default_rng(9))
    for t in range(1, 11):
        x = states[t]
        law = 2.0 ** (-t)
        band = 4.0 * np.sqrt(law * (1.0 - law) / runs)
        assert abs(np.mean(x != 0.0) - law) <= band
        surviving = np.abs(x[x != 0.0])
        assert np.allclose(surviving, (2.0 * 1.5) ** t * 0.01)


def test_gamblers_ruin_anti_concentration():
    est = anti_concentration_estimate(gamblers_ruin_policy(1.5), "independent", [1.0], [1.0], 2000,
                                      np.random.default_rng(6))
    assert est.alpha_hat == 1.0
    assert est.p_hat == pytest.approx(0.5, abs=0.05)


def test_deterministic_policy_is_fully_anti_concentrated():
    est = anti_concentration_estimate(ZeroPolicy(3), "shared_noise", np.zeros(3), np.ones(3), 10,
                                      np.random.default_rng(0))
    assert (est.alpha_hat, est.p_hat) == (1.0, 1.0)
    with pytest.raises(ValueError):
        anti_concentration_estimate(ZeroPolicy(3), "bogus", np.zeros(3), np.ones(3), 10, np.random.default_rng(0))


def test_simple_policy_classification(stable_inst):
    assert is_simple(ExpertPolicy(stable_inst))
    assert is_simple(gaussian_wrap(ExpertPolicy(stable_inst), 0.1, stable_inst.d))
    assert is_simple(RandomNoisePolicy(4))
    assert not is_simple(gamblers_ruin_policy(1.5))
    assert not is_simple(concentric_policy(1.5))


def test_mixture_simplicity(stable_inst):
    same = MixturePolicy([ExpertPolicy(stable_inst), ExpertPolicy(stable_inst)], [0.3, 0.7])
    assert is_simple(same)
    assert is_simple(MixturePolicy([RandomNoisePolicy(2)]))
    assert is_simple(MixturePolicy([ZeroPolicy(1), gamblers_ruin_policy(1.5)], [1.0, 0.0]))
    assert not is_simple(MixturePolicy([ZeroPolicy(1), gamblers_ruin_policy(1.5)]))

    gains = MixturePolicy([LinearPolicy(np.eye(2)), LinearPolicy(-np.eye(2))])
    assert not is_simple(gains)
    # the spread around the mean grows with the state
    rng = np.random.default_rng(4)
    near = np.array([gains.action(np.array([0.1, 0.0]), 1, rng) for _ in range(200)])
    far = np.array([gains.action(np.array([1.0, 0.0]), 1, rng) for _ in range(200)])
    assert np.std(far[:, 0]) > 5.0 * np.std(near[:, 0])


def test_gaussian_wrap_requires_deterministic_base():
    with pytest.raises(ValueError):
        gaussian_wrap(RandomNoisePolicy(2), 0.1, 2)


def test_fit_linear_gain_recovers_exact_gain():
    rng = np.random.default_rng(1)
    K = rng.standard_normal((3, 3))
    X = rng.standard_normal((50, 3))
    K_hat, residual = fit_linear_gain(X, X @ K.T)
    assert np.allclose(K_hat, K, atol=1e-10)
    assert residual < 1e-10
    K_empty, res_empty = fit_linear_gain(np.zeros((0, 3)), np.zeros((0, 3)))
    assert np.all(K_empty == 0.0) and res_empty == 0.0


def test_bc_matches_expert_near_origin(stable_inst, stable_data):
    policy = bc_learn(stable_data, stable_inst)
    assert policy.status == "ok"
    assert not policy.fit.identified_e1
    assert np.all(policy.fit.K_hat[:, 0] == 0.0)
    for traj in stable_data.trajectories:
        if traj.branch != "Z1":
            continue
        for x, u in zip(traj.states, traj.inputs):
            assert np.allclose(policy.action(x), u, atol=1e-10)


def test_bc_assume_i_completion_recovers_gain(stable_inst, stable_data):
    policy = bc_learn(stable_data, stable_inst, completion="assume_i")
    assert np.allclose(policy.fit.K_hat[:, 0], stable_inst.Kbar[:, 0])
    adversarial = bc_learn(stable_data, stable_inst, completion="adversarial")
    assert np.allclose(adversarial.fit.K_hat[:, 0], stable_inst.Kbar2[:, 0])


def test_bc_with_exploration_identifies_first_column(stable_inst):
    dataset = sample_dataset(stable_inst, 64, 8, np.random.default_rng(2), explore_sigma=0.01)
    policy = bc_learn(dataset, stable_inst)
    assert policy.fit.identified_e1
    assert np.allclose(policy.fit.K_hat, stable_inst.Kbar, atol=1e-7)


def test_bc_on_empty_dataset_is_degraded(stable_inst):
    policy = bc_learn(sample_dataset(stable_inst, 0, 8, np.random.default_rng(0)), stable_inst)
    assert policy.status == "degraded"
    assert len(policy.fit.errors) == 2
    assert np.all(policy.action(np.ones(stable_inst.d)) == 0.0)


def test_bc_rejects_unknown_completion(stable_inst, stable_data):
    with pytest.raises(PreconditionError):
        bc_learn(stable_data, stable_inst, completion="magic")


def test_chunked_policy_observes_at_chunk_starts(stable_inst, stable_data):
    chunked = chunk_wrap(bc_learn(stable_data, stable_inst, chunk_len=4), 4)
    assert [chunked.observes(t) for t in range(1, 10)] == [True, False, False, False,
                                                          True, False, False, False, True]
    with pytest.raises(ValueError):
        chunked.clone().act(None, 1, np.random.default_rng(0))


def test_chunked_bc_replays_expert_on_origin_branch(stable_inst, stable_data):
    policy = chunk_wrap(bc_learn(stable_data, stable_inst, completion="assume_i", chunk_len=4), 4)
    expert = ExpertPolicy(stable_inst)
    for j in range(20):
        init = stable_inst.sample_init(derive_rng(8, j))
        if init.branch != "Z1":
            continue
        a = rollout(policy, stable_inst, init, 8, np.random.default_rng(0))
        b = rollout(expert, stable_inst, init, 8, np.random.default_rng(0))
        assert np.allclose(a.states, b.states, atol=1e-9)


def test_model_mode_chunking_uses_fitted_dynamics(stable_inst, stable_data):
    model = LinearModel.fit(stable_data)
    chunked = chunk_wrap(ExpertPolicy(stable_inst), 3, mode="model", model=model)
    plan = chunked.clone().act(History(states=[np.zeros(stable_inst.d)]), 1, np.random.default_rng(0))
    assert np.all(plan == 0.0)
    with pytest.raises(ValueError):
        chunk_wrap(ExpertPolicy(stable_inst), 3, mode="model")


def test_tiny_net_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    net = TinyNet.initialize([3, 5, 2], rng)
    X = rng.standard_normal((4, 3))
    G = rng.standard_normal((4, 2))
    _, cache = net.forward_with_cache(X)
    grad_w, grad_b, _ = net.backward(cache, G)

    def loss():
        return float(np.sum(net.forward(X) * G))

    h = 1e-6
    for layer, (i, j) in ((0, (1, 2)), (1, (4, 1))):
        original = net.weights[layer][i, j]
        net.weights[layer][i, j] = original + h
        up = loss()
        net.weights[layer][i, j] = original - h
        down = loss()
        net.weights[layer][i, j] = original
        assert grad_w[layer][i, j] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)
    original = net.biases[0][3]
    net.biases[0][3] = original + h
    up = loss()
    net.biases[0][3] = original - h
    down = loss()
    net.biases[0][3] = original
    assert grad_b[0][3] == pytest.approx((up - down) / (2 * h), rel=1e-5, abs=1e-8)


def test_mlp_learns_linear_expert(stable_data):
    origin = Dataset(trajectories=[t for t in stable_data.trajectories if t.branch == "Z1"], H=stable_data.H,
                     instance_id=stable_data.instance_id)
    config = MLPConfig(hidden=8, layers=2, activation="identity", iterations=2000, batch_size=128,
                       lr=1e-2, weight_decay=0.0, eval_every=500, val_fraction=0.1)
    result = mlp_train(origin, config, np.random.default_rng(3))
    assert result.status == "ok"
    assert [p.iteration for p in result.trace] == [0, 500, 1000, 1500, 2000]
    assert result.trace[-1].train_loss < 0.1 * result.trace[0].train_loss
    restored = policy_from_dict(result.policy.to_dict())
    x = origin.trajectories[0].states[0]
    assert np.allclose(restored.action(x), result.policy.action(x))


def test_mlp_rejects_empty_dataset(stable_inst):
    with pytest.raises(PreconditionError):
        mlp_train(sample_dataset(stable_inst, 0, 4, np.random.default_rng(0)))


def test_toy_diffusion_plans_match_actions(stable_data):
    config = DiffusionConfig(steps=8, hidden=16, embed_dim=32, chunk_len=2, iterations=400, batch_size=64,
                             lr=5e-3, eval_every=100)
    result = toy_diffusion_train(stable_data, config, np.random.default_rng(4))
    policy = result.policy
    assert len(result.trace) == 4
    assert all(np.isfinite(p.train_loss) for p in result.trace)
    assert result.trace[-1].train_loss < result.trace[0].train_loss
    x = stable_data.trajectories[0].states[0]
    plan = policy.plan(x, 2, np.random.default_rng(7))
    assert plan.shape == (2, x.shape[0])
    assert np.array_equal(policy.action(x, 1, np.random.default_rng(7)), plan[0])
    with pytest.raises(ValueError):
        policy.plan(x, 3, np.random.default_rng(7))
