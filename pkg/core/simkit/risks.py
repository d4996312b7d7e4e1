"""
Monte Carlo risk estimators.

Every estimator draws m initial states and couples the expert and learner
rollouts through a shared initial state. Rollout j uses generators derived
from (base, j), so estimates do not depend on the worker count.
"""

from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from core.instances.base import Instance
from core.models.reports import MonteCarloEstimate, RiskReport
from core.models.trajectory import Trajectory
from core.policies.base import History, Policy
from core.policies.simple import ExpertPolicy
from core.simkit.rollout import rollout
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.rng import derive_rng, draw_seed
from core.utils.settings import load_constants


@dataclass
class RolloutPair:
    """Per-init quantities shared by every estimator."""
    sq_errors: np.ndarray
    cost_learner: float
    cost_expert: float
    traj_l1: float
    blowup: bool


class RiskEvaluator:
    """
    Estimates expert-distribution, execution-cost, trajectory and quantile
    risks of one policy on one instance.
    """

    def __init__(self, policy: Policy, inst: Instance, H: int, noise_samples: Optional[int] = None,
                 max_workers: Optional[int] = None, progress_callback: Optional[Callable[[str], None]] = None):
        if H < 1:
            raise PreconditionError(f"H must be >= 1, got {H}")
        self.policy = policy
        self.inst = inst
        self.H = H
        self.noise_samples = load_constants().noise_samples if noise_samples is None else noise_samples
        self.max_workers = max_workers
        self.progress_callback = progress_callback
        self.expert = ExpertPolicy(inst)
        self.logger = Logger("RiskEvaluator").logger

    def _update_progress(self, message: str) -> None:
        if self.progress_callback:
            self.progress_callback(message)

    def _expert_errors(self, expert_traj: Trajectory, base: int, j: int) -> np.ndarray:
        """Squared action errors along the expert trajectory, averaged over policy noise."""
        draws = 1 if self.policy.deterministic else self.noise_samples
        total = np.zeros(self.H)
        for k in range(draws):
            actor = self.policy.clone()
            rng = derive_rng(base, j, 2, k)
            history = History()
            for t in range(1, self.H + 1):
                x = expert_traj.states[t - 1]
                history.push(x)
                u_hat = np.asarray(actor.act(history if actor.observes(t) else None, t, rng), dtype=float)
                history.record(expert_traj.inputs[t - 1])
                total[t - 1] += float(np.sum((u_hat.reshape(-1) - expert_traj.inputs[t - 1]) ** 2))
        return total / draws

    def pair(self, base: int, j: int, with_expert_errors: bool = True) -> RolloutPair:
        init = self.inst.sample_init(derive_rng(base, j, 0))
        expert_traj = rollout(self.expert, self.inst, init, self.H, derive_rng(base, j, 3), seed=j)
        learner_traj = rollout(self.policy, self.inst, init, self.H, derive_rng(base, j, 1), seed=j)
        blowup = learner_traj.status == "blowup"

        steps = learner_traj.H
        gaps = (np.linalg.norm(learner_traj.states - expert_traj.states[:steps], axis=1)
                + np.linalg.norm(learner_traj.inputs - expert_traj.inputs[:steps], axis=1))
        traj_l1 = float(np.sum(np.minimum(gaps, 1.0))) + float(self.H - steps)

        return RolloutPair(
            sq_errors=self._expert_errors(expert_traj, base, j) if with_expert_errors else np.zeros(self.H),
            cost_learner=self.inst.traj_cost(learner_traj.states, learner_traj.inputs, blown_up=blowup),
            cost_expert=self.inst.traj_cost(expert_traj.states, expert_traj.inputs),
            traj_l1=traj_l1,
            blowup=blowup,
        )

    def collect(self, m: int, rng: np.random.Generator, with_expert_errors: bool = True) -> List[RolloutPair]:
        if m < 1:
            raise PreconditionError(f"m must be >= 1, got {m}")
        base = draw_seed(rng)
        results: Dict[int, RolloutPair] = {}
        if self.max_workers == 1:
            for j in range(m):
                results[j] = self.pair(base, j, with_expert_errors)
        else:
            with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
                futures = {executor.submit(self.pair, base, j, with_expert_errors): j for j in range(m)}
                for done, future in enumerate(as_completed(futures), start=1):
                    j = futures[future]
                    try:
                        results[j] = future.result()
                    except Exception as e:
                        self.logger.error(f"Rollout {j} failed: {str(e)}")
                        raise RuntimeError(f"Rollout {j} of {self.inst.instance_id} failed: {str(e)}") from e
                    if done % 100 == 0:
                        self._update_progress(f"{done}/{m} rollouts")
        pairs = [results[j] for j in range(m)]
        expert_cost = float(np.mean([p.cost_expert for p in pairs]))
        if expert_cost > 1e-12:
            self.logger.warning(f"Expert cost does not vanish on {self.inst.instance_id}: {expert_cost:.3e}")
        blowups = sum(p.blowup for p in pairs)
        if blowups:
            self.logger.warning(f"{blowups}/{m} learner rollouts blew up on {self.inst.instance_id}")
        return pairs

    @staticmethod
    def expert_l2(pairs: List[RolloutPair]) -> MonteCarloEstimate:
        sq = np.stack([p.sq_errors for p in pairs])
        value, stderr = 0.0, 0.0
        for t in range(sq.shape[1]):
            est = MonteCarloEstimate.from_samples(sq[:, t])
            rms = float(np.sqrt(max(est.value, 0.0)))
            value += rms
            if rms > 0:
                stderr += est.stderr / (2.0 * rms)
        return MonteCarloEstimate(value=value, stderr=stderr, samples=len(pairs))

    @staticmethod
    def cost(pairs: List[RolloutPair]) -> MonteCarloEstimate:
        return MonteCarloEstimate.from_samples(np.array([p.cost_learner - p.cost_expert for p in pairs]))

    @staticmethod
    def traj_l1(pairs: List[RolloutPair]) -> MonteCarloEstimate:
        return MonteCarloEstimate.from_samples(np.array([p.traj_l1 for p in pairs]))

    @staticmethod
    def quantile(pairs: List[RolloutPair], delta: float) -> float:
        if not (0.0 < delta < 1.0):
            raise PreconditionError(f"delta must lie in (0, 1), got {delta}")
        return float(np.quantile([p.cost_learner for p in pairs], 1.0 - delta, method="higher"))

    def evaluate(self, m: int, rng: np.random.Generator, delta: float = 0.1,
                 config: Optional[Dict] = None) -> RiskReport:
        pairs = self.collect(m, rng)
        errors = []
        blowups = sum(p.blowup for p in pairs)
        if blowups:
            errors.append(f"{blowups} of {m} learner rollouts blew up")
        report = RiskReport(
            instance_id=self.inst.instance_id,
            policy_kind=self.policy.kind,
            H=self.H,
            m_rollouts=m,
            expert_l2=self.expert_l2(pairs),
            cost_risk=self.cost(pairs),
            traj_l1=self.traj_l1(pairs),
            quantile=(delta, self.quantile(pairs, delta)),
            config=dict(config or {}),
            errors=errors,
        )
        self.logger.info(f"Evaluated {self.policy.kind} on {self.inst.instance_id} H={self.H} m={m}: "
                         f"expert_l2={report.expert_l2.value:.3e} cost={report.cost_risk.value:.3e}")
        return report


def expert_l2_risk(policy: Policy, inst: Instance, H: int, m: int, rng: np.random.Generator,
                   noise_samples: Optional[int] = None) -> MonteCarloEstimate:
    """sum_t E[||u_hat_t - pi*(x_t)||^2]^(1/2) along expert trajectories."""
    return RiskEvaluator.expert_l2(RiskEvaluator(policy, inst, H, noise_samples).collect(m, rng))


def cost_risk(policy: Policy, inst: Instance, H: int, m: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """E[traj_cost under the policy] - E[traj_cost under the expert], paired by initial state."""
    return RiskEvaluator.cost(RiskEvaluator(policy, inst, H).collect(m, rng, with_expert_errors=False))


def quantile_risk(policy: Policy, inst: Instance, H: int, m: int, rng: np.random.Generator,
                  delta: float = 0.1) -> float:
    """Empirical (1 - delta)-quantile of the policy's trajectory cost."""
    return RiskEvaluator.quantile(RiskEvaluator(policy, inst, H).collect(m, rng, with_expert_errors=False), delta)


def traj_l1_risk(policy: Policy, inst: Instance, H: int, m: int, rng: np.random.Generator) -> MonteCarloEstimate:
    """E[sum_t min(1, ||x_t - x*_t|| + ||u_t - u*_t||)] with the expert coupled through x_1."""
    return RiskEvaluator.traj_l1(RiskEvaluator(policy, inst, H).collect(m, rng, with_expert_errors=False))


def evaluate_policy(policy: Policy, inst: Instance, H: int, m: int, rng: np.random.Generator,
                    delta: float = 0.1, noise_samples: Optional[int] = None, max_workers: Optional[int] = None,
                    config: Optional[Dict] = None) -> RiskReport:
    """All four risks from one shared set of rollouts."""
    evaluator = RiskEvaluator(policy, inst, H, noise_samples=noise_samples, max_workers=max_workers)
    return evaluator.evaluate(m, rng, delta=delta, config=config)
