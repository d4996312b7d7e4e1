import os
import sys
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
sys.path.append(project_root)

import numpy as np
import pytest

from core.funclass.hard_function import sample_hard_function
from core.instances.gambler import GamblerSystem, gambler_step
from core.instances.registry import instance_from_dict
from core.instances.stable import StableInstance
from core.instances.unstable import make_unstable_instance
from core.matkit.sampling import sample_unit_ball
from core.policies.simple import ExpertPolicy
from core.simkit.dataset import expert_trajectory, sample_dataset
from core.simkit.rollout import rollout
from core.utils.errors import PreconditionError
from core.utils.rng import derive_rng


def test_stable_expert_trajectories_cost_nothing(stable_inst):
    expert = ExpertPolicy(stable_inst)
    for j in range(200):
        init = stable_inst.sample_init(derive_rng(1, j))
        traj = rollout(expert, stable_inst, init, 16, derive_rng(2, j))
        assert traj.status == "ok"
        assert np.all(traj.states[:, 0] == 0.0)
        assert stable_inst.traj_cost(traj.states, traj.inputs) == 0.0


def test_patch_branch_lands_on_origin(stable_inst):
    for j in range(50):
        init = stable_inst.sample_init(derive_rng(3, j))
        if init.branch != "Z0":
            continue
        x2 = stable_inst.step(init.x1, stable_inst.expert_action(init.x1, 1), 1)
        assert np.all(x2 == 0.0)


def test_initial_branch_frequencies(stable_inst):
    rng = np.random.default_rng(21)
    draws = [stable_inst.sample_init(rng) for _ in range(4000)]
    z0 = np.mean([d.branch == "Z0" for d in draws])
    level0 = np.mean([d.branch == "Z1" and d.y_level == 0 for d in draws])
    assert z0 == pytest.approx(0.5, abs=0.04)
    assert level0 == pytest.approx(0.25, abs=0.04)
    for d in draws:
        if d.branch == "Z1":
            assert d.x1[0] == 0.0
            assert np.linalg.norm(d.x1) <= stable_inst.delta * 2.0 ** (-d.y_level) + 1e-15


def test_level_probabilities_sum_to_one(stable_inst):
    assert np.sum(stable_inst.level_probs) == pytest.approx(1.0)
    assert np.all(stable_inst.level_probs > 0.0)


def test_sibling_instances_produce_identical_data(stable_inst):
    sibling = stable_inst.with_index(2, omega=-1)
    a = sample_dataset(stable_inst, 40, 10, np.random.default_rng(5))
    b = sample_dataset(sibling, 40, 10, np.random.default_rng(5))
    for ta, tb in zip(a.trajectories, b.trajectories):
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ta.inputs, tb.inputs)
    assert stable_inst.instance_id != sibling.instance_id


def test_stable_instance_validation(hard_g):
    with pytest.raises(PreconditionError):
        StableInstance(hard_g, i=3)
    with pytest.raises(PreconditionError):
        StableInstance(hard_g, omega=0)
    with pytest.raises(PreconditionError):
        StableInstance(hard_g, mu=0.6)


def test_instance_round_trip_keeps_identity(stable_inst):
    restored = instance_from_dict(stable_inst.to_dict())
    assert restored.instance_id == stable_inst.instance_id
    x = stable_inst.sample_init(np.random.default_rng(2)).x1
    assert np.array_equal(restored.expert_action(x), stable_inst.expert_action(x))


def test_expert_trajectory_is_seeded(stable_inst):
    a = expert_trajectory(stable_inst, 6, 1234)
    b = expert_trajectory(stable_inst, 6, 1234)
    assert np.array_equal(a.states, b.states)


def test_exploration_keeps_expert_labels(stable_inst):
    traj = expert_trajectory(stable_inst, 6, 99, explore_sigma=0.01)
    assert traj.labels is not None
    for t in range(traj.H):
        assert np.allclose(traj.labels[t], stable_inst.expert_action(traj.states[t], t + 1))


def test_gambler_expert_zeroes_state(gambler):
    x1 = np.array([0.01])
    x2 = gambler.step(x1, gambler.expert_action(x1))
    assert np.all(x2 == 0.0)
    flipped = gambler.flipped()
    assert flipped.xi == -gambler.xi
    assert np.all(flipped.step(x1, flipped.expert_action(x1)) == 0.0)


def test_gambler_step_takes_the_system(gambler):
    x = np.array([0.2, -0.4])
    u = np.array([0.1, 0.0])
    assert np.allclose(gambler_step(gambler, x, u), 1.5 * x + u)
    assert np.allclose(gambler_step(gambler.flipped(), x, u), -1.5 * x + u)
    assert np.array_equal(gambler.step(x, u), gambler_step(gambler, x, u))


def test_gambler_rejects_contraction():
    with pytest.raises(PreconditionError):
        GamblerSystem(1.0)


def test_time_varying_rotation_expands_by_rho():
    g = sample_hard_function(2, 2, 0.5, np.random.default_rng(3))
    inst = make_unstable_instance(g, 1.5, 6, k=2)
    x = np.random.default_rng(4).standard_normal(6)
    for t in range(2, 8):
        nxt = inst.step(x, np.zeros(6), t)
        assert np.linalg.norm(nxt) == pytest.approx(1.5 * np.linalg.norm(x), rel=1e-12)
        x = nxt
    assert np.allclose(inst.rotation(3) @ inst.rotation(3).T, np.eye(6))


def test_time_varying_expert_costs_nothing_after_first_step():
    g = sample_hard_function(2, 2, 0.5, np.random.default_rng(3))
    inst = make_unstable_instance(g, 1.5, 4, k=2)
    traj = rollout(ExpertPolicy(inst), inst, inst.sample_init(np.random.default_rng(0)), 8,
                   np.random.default_rng(1))
    assert np.all(traj.states[1:] == 0.0)
    assert inst.traj_cost(traj.states, traj.inputs) == 0.0


def test_time_invariant_expert_walks_the_centers():
    g = sample_hard_function(2, 2, 0.5, np.random.default_rng(3))
    inst = make_unstable_instance(g, 1.5, 4, k=2, variant="time_invariant", packing_seed=2)
    H = min(6, inst.packing.size)
    traj = rollout(ExpertPolicy(inst), inst, inst.sample_init(np.random.default_rng(0)), H,
                   np.random.default_rng(1))
    for t in range(1, H):
        assert np.allclose(traj.states[t], inst.packing.centers[t])
    assert inst.traj_cost(traj.states, traj.inputs) == pytest.approx(0.0, abs=1e-12)


def test_unstable_validation():
    g = sample_hard_function(3, 2, 0.5, np.random.default_rng(3))
    with pytest.raises(PreconditionError):
        make_unstable_instance(g, 0.9, 4)
    with pytest.raises(PreconditionError):
        make_unstable_instance(g, 1.5, 2)


def test_stable_cost_is_one_lipschitz(stable_inst):
    rng = np.random.default_rng(17)
    n, d = 10_000, stable_inst.d
    centers = np.where(rng.random(n)[:, None] < 0.5, 0.0, stable_inst.x_offset[None, :])
    x = centers + sample_unit_ball(d, n, rng, radius=2.5)
    x_prime = x + sample_unit_ball(d, n, rng, radius=0.5)
    u = sample_unit_ball(d, n, rng, radius=0.5)
    u_prime = sample_unit_ball(d, n, rng, radius=0.5)
    worst = 0.0
    for j in range(n):
        gap = np.sqrt(np.sum((x[j] - x_prime[j]) ** 2) + np.sum((u[j] - u_prime[j]) ** 2))
        diff = abs(stable_inst.cost(x[j], u[j]) - stable_inst.cost(x_prime[j], u_prime[j]))
        assert diff <= gap + 1e-12
        worst = max(worst, diff / gap)
    assert worst > 0.0
