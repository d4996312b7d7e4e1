"""
Invariant suite behind ``bench verify``.

Every check returns a CheckResult carrying a short claim of what it
establishes; a check that raises is reported as failed with the error as
detail instead of aborting the suite.
"""

from typing import Callable, List, Optional, Tuple

import numpy as np

from core.bench.builders import build_instance
from core.bench.config import BenchConfig, with_overrides
from core.funclass.hard_function import sample_hard_function
from core.funclass.rates import rate_sweep
from core.instances.gambler import GamblerSystem
from core.instances.stable import StableInstance
from core.instances.unstable import make_unstable_instance
from core.matkit.bump import bump_value
from core.matkit.linalg import challenging_pair, cross_instability, embed_top_left, spectral_radius, stability_constants
from core.models.reports import CheckResult, MonteCarloEstimate
from core.models.trajectory import InitState
from core.policies.bc import bc_learn
from core.policies.nonsimple import concentric_policy, gamblers_ruin_policy, switching_policy
from core.policies.simple import ExpertPolicy, LinearPolicy
from core.simkit.dataset import sample_dataset
from core.simkit.probes import (GreedyCancelController, ZeroController, calibrate_eiiss, closed_loop_step,
                                compounding_probe, eiiss_check, open_loop_step, orthogonal_compounding_mc)
from core.simkit.risks import RiskEvaluator, evaluate_policy
from core.simkit.rollout import rollout, rollout_batch
from core.utils.logger import Logger
from core.utils.rng import derive_rng

Outcome = Tuple[bool, str, Optional[float]]


class VerificationSuite:
    """
    Args:
        config: Run configuration; the stable checks use its construction
        mu: Pair parameter for the matrix checks, taken unvalidated so a bad
            value surfaces as a failed check
        full: Also run the slow regression-rate and compounding-ratio checks
    """

    def __init__(self, config: BenchConfig, mu: Optional[float] = None, full: bool = False,
                 progress_callback: Optional[Callable[[str], None]] = None):
        self.config = config
        self.mu = config.construction.mu if mu is None else mu
        self.full = full
        self.progress_callback = progress_callback
        self.logger = Logger("Verification").logger

    def _update_progress(self, message: str) -> None:
        if self.progress_callback:
            self.progress_callback(message)

    def _rng(self, key: int) -> np.random.Generator:
        return derive_rng(self.config.seed, 100, key)

    def _stable(self) -> StableInstance:
        cfg = self.config if self.config.construction.kind == "stable" else \
            with_overrides(self.config, {'construction': {'kind': 'stable', 'd': self.config.construction.k + 2}})
        return build_instance(cfg)

    # matrix checks

    def check_pair_spectra(self) -> Outcome:
        mu = self.mu
        pair = challenging_pair(mu)
        expected = {
            'A1': (pair.A1, 1.0 - mu / 2.0),
            'A2': (pair.A2, max(1.0 - mu / 4.0, 1.0 - 2.0 * mu)),
            'A1+K1': (pair.A1 + pair.K1, 1.0 - 2.0 * mu),
            'A2+K2': (pair.A2 + pair.K2, 1.0 - 2.0 * mu),
        }
        worst = max(abs(spectral_radius(M) - value) for M, value in expected.values())
        stable = all(spectral_radius(M) < 1.0 for M, _ in expected.values())
        return worst <= 1e-6 and stable, f"mu={mu}: max deviation {worst:.2e}", worst

    def check_cross_instability(self) -> Outcome:
        rng = self._rng(1)
        worst_margin = np.inf
        for mu in (0.125, 0.25):
            pair = challenging_pair(mu)
            for _ in range(100):
                Khat = pair.K1.copy()
                Khat[:, 0] = rng.uniform(-3.0, 3.0, size=2)
                for H in range(1, 31):
                    margin = cross_instability(pair, Khat, H) / (1.0 + mu / 4.0) ** H
                    worst_margin = min(worst_margin, margin)
        return worst_margin >= 1.0, f"min growth over (1 + mu/4)^H: {worst_margin:.4f}", float(worst_margin)

    def check_bump(self) -> Outcome:
        inner, mid, outer = bump_value(np.zeros(3)), bump_value(np.array([1.5, 0, 0])), bump_value(np.array([2.0, 0, 0]))
        ok = inner == 1.0 and 0.0 < mid < 1.0 and outer == 0.0
        return ok, f"bump(0)={inner}, bump(1.5 e1)={mid:.4f}, bump(2 e1)={outer}", mid

    # stable construction

    def check_expert_cost(self, rollouts: int = 2000) -> Outcome:
        inst = self._stable()
        expert = ExpertPolicy(inst)
        worst = 0.0
        for j in range(rollouts):
            traj = rollout(expert, inst, inst.sample_init(derive_rng(self.config.seed, 101, j)),
                           self.config.data.H, self._rng(2))
            worst = max(worst, inst.traj_cost(traj.states, traj.inputs))
        return worst <= 1e-12, f"max expert trajectory cost over {rollouts} rollouts: {worst:.2e}", worst

    def check_expert_risk(self) -> Outcome:
        inst = self._stable()
        report = evaluate_policy(ExpertPolicy(inst), inst, self.config.data.H, 64, self._rng(3))
        worst = max(abs(report.expert_l2.value), abs(report.cost_risk.value), abs(report.traj_l1.value))
        return worst <= 1e-12, f"largest expert risk {worst:.2e}", worst

    def check_cross_gain_probe(self) -> Outcome:
        inst = self._stable().with_index(2)
        policy = LinearPolicy(embed_top_left(inst.pair.K1, inst.d))
        H = 12
        curve = compounding_probe(policy, inst, H, 1e-6, self._rng(4), init=InitState(x1=np.zeros(inst.d))).curve
        floor = (1.0 + inst.mu / 4.0) ** np.arange(len(curve))
        ratio = float(np.min(curve / floor))
        return ratio >= 1.0, f"min curve over (1 + mu/4)^(t-1) for t <= {H}: {ratio:.3f}", ratio

    # incremental stability

    def check_eiiss(self) -> Outcome:
        identity = eiiss_check(lambda x, u, t: u, 1.0, 0.0, 16, 200, self._rng(5), d=3)

        inst = self._stable()
        H = self.config.data.H
        results = [identity.passed]
        details = [f"f(x,u)=u ratio {identity.max_ratio:.6f}"]
        for name, step, A in (("open loop", open_loop_step(inst), inst.Abar),
                              ("closed loop", closed_loop_step(inst), inst.Abar + inst.Kbar)):
            rho = stability_constants(A, H).rho

            def sampler(rng: np.random.Generator) -> np.ndarray:
                return inst.sample_init(rng).x1

            C = calibrate_eiiss(step, rho, H, 200, self._rng(6), d=inst.d, sample_x1=sampler)
            report = eiiss_check(step, C, rho, H, 500, self._rng(7), d=inst.d, sample_x1=sampler)
            results.append(report.passed)
            details.append(f"{name} (C={C:.3g}, rho={rho:.3g}) ratio {report.max_ratio:.3f}")

        unstable = eiiss_check(lambda x, u, t: 1.1 * x + u, 1.0, 0.9, 16, 50, self._rng(8), d=2)
        results.append(not unstable.passed and unstable.max_violation > 0)
        details.append(f"radius 1.1 violation {unstable.max_violation:.3g}")
        return all(results), "; ".join(details), identity.max_ratio

    # scalar strategies

    def check_gambler_laws(self, runs: int = 100_000, horizon: int = 10) -> Outcome:
        system = GamblerSystem(1.5, xi=1, eps0=0.01)
        states, _ = rollout_batch(gamblers_ruin_policy(system.rho), system, np.full(runs, system.eps0),
                                  horizon + 1, self._rng(9))
        worst = 0.0
        for t in range(1, horizon + 1):
            x = states[t]
            survive = MonteCarloEstimate.from_samples((x != 0.0).astype(float))
            clipped = MonteCarloEstimate.from_samples(np.minimum(1.0, np.abs(x)))
            for est, law in ((survive, 2.0 ** (-t)),
                             (clipped, 2.0 ** (-t) * min(1.0, (2.0 * system.rho) ** t * system.eps0))):
                band = 3.0 * max(est.stderr, np.sqrt(law * (1.0 - law) / runs))
                worst = max(worst, abs(est.value - law) / band if band > 0 else 0.0)
        return worst <= 1.0, f"largest deviation {worst:.2f} of the 3-stderr band", worst

    def check_concentric(self, runs: int = 1000) -> Outcome:
        rng = self._rng(10)
        worst_tail, worst_peak = 0.0, 0.0
        for rho in (1.25, 1.5, 2.0):
            for xi in (-1, 1):
                x1 = rng.uniform(-1.0, 1.0, size=runs)
                states, _ = rollout_batch(concentric_policy(rho), GamblerSystem(rho, xi=xi), x1, 8, rng)
                worst_tail = max(worst_tail, float(np.max(np.abs(states[3:]))))
                peak = np.max(np.abs(states), axis=0) / np.maximum(np.abs(x1), 1e-300)
                worst_peak = max(worst_peak, float(np.max(peak)) / (2.0 * rho) ** 2)
        ok = worst_tail == 0.0 and worst_peak <= 1.0
        return ok, f"max |x_t| for t > 3: {worst_tail}; peak over (2 rho)^2 |x_1|: {worst_peak:.3f}", worst_tail

    def check_switching(self, runs: int = 1000) -> Outcome:
        rng = self._rng(11)
        worst = 0.0
        for xi in (-1, 1):
            x1 = rng.uniform(-1.0, 1.0, size=runs)
            states, _ = rollout_batch(switching_policy(1.5), GamblerSystem(1.5, xi=xi), x1, 3, rng)
            worst = max(worst, float(np.max(np.abs(states[2]))))
        return worst == 0.0, f"max |x_3| over both signs: {worst}", worst

    # rotations

    def check_rotation_norms(self) -> Outcome:
        rho, d = 1.5, 8
        inst = make_unstable_instance(sample_hard_function(2, 2, 0.5, self._rng(12)), rho, d, k=2,
                                      rotation_seed=self.config.seed)
        x = self._rng(13).standard_normal(d)
        ratios = []
        for t in range(2, 12):
            nxt = inst.step(x, np.zeros(d), t)
            ratios.append(np.linalg.norm(nxt) / np.linalg.norm(x))
            x = nxt
        ratios = np.asarray(ratios)
        worst = float(np.max(np.abs(ratios - rho)))
        return worst <= 1e-10, f"max | ||x_(t+1)|| / ||x_t|| - rho | = {worst:.2e}", worst

    def check_rotation_growth(self, trials: int = 2000) -> Outcome:
        high = orthogonal_compounding_mc(64, 1.5, 8, GreedyCancelController(), trials, self._rng(15))
        zero = orthogonal_compounding_mc(64, 1.5, 8, ZeroController(), 200, self._rng(16))
        scalar = orthogonal_compounding_mc(1, 1.5, 8, GreedyCancelController(), trials, self._rng(17))
        ok = high.frequency >= high.analytic_bound and zero.frequency == 1.0 and scalar.frequency <= 0.02
        detail = (f"d=64 greedy {high.frequency:.3f} (bound {high.analytic_bound:.3f}); "
                  f"zero control {zero.frequency:.3f}; d=1 sign-adaptive {scalar.frequency:.4f}")
        return ok, detail, high.frequency

    # slow checks

    def check_regression_rate(self) -> Outcome:
        result = rate_sweep(2, 2, [64, 128, 256, 512, 1024, 2048, 4096], 10, self._rng(18))
        ok = result.status == "ok" and -1.35 <= result.slope <= -0.65
        return ok, f"log-log slope {result.slope:.3f}", result.slope

    def check_compounding_gap(self) -> Outcome:
        base = self._stable()
        ratios = {}
        for completion in ("adversarial", "assume_i"):
            dataset = sample_dataset(base, 256, 32, self._rng(19))
            policy = bc_learn(dataset, base, completion=completion)
            evaluator = RiskEvaluator(policy, base, 32, max_workers=self.config.workers)
            pairs = evaluator.collect(200, self._rng(20))
            expert_l2 = RiskEvaluator.expert_l2(pairs).value
            cost = RiskEvaluator.cost(pairs).value
            ratios[completion] = cost / max(expert_l2, 1e-12)
        ok = ratios["adversarial"] >= 20.0 and ratios["assume_i"] <= 5.0
        return ok, f"cost / expert risk: adversarial {ratios['adversarial']:.1f}, assume_i {ratios['assume_i']:.2f}", \
            ratios["adversarial"]

    def checks(self) -> List[Tuple[str, str, Callable[[], Outcome]]]:
        suite = [
            ("pair_spectra", "each gain stabilizes its own system at rate 1 - 2 mu", self.check_pair_spectra),
            ("cross_instability", "any gain matching the experts on e2 grows like (1 + mu/4)^H on one system",
             self.check_cross_instability),
            ("bump", "the bump is 1 on the unit ball and 0 from radius 2", self.check_bump),
            ("expert_cost", "the expert's trajectory cost vanishes", self.check_expert_cost),
            ("expert_risk", "every risk of the expert is zero", self.check_expert_risk),
            ("cross_gain_probe", "the other system's gain compounds an e1 perturbation",
             self.check_cross_gain_probe),
            ("eiiss", "incremental stability envelopes hold and fail where they should", self.check_eiiss),
            ("gambler_laws", "gambler's ruin survives with probability 2^-t", self.check_gambler_laws),
            ("concentric", "concentric stabilization zeroes the state after three steps", self.check_concentric),
            ("switching", "action switching zeroes the state at t = 3", self.check_switching),
            ("rotation_norms", "uncontrolled rotated dynamics scale norms by exactly rho",
             self.check_rotation_norms),
            ("rotation_growth", "no causal controller cancels random rotations in high dimension",
             self.check_rotation_growth),
        ]
        if self.full:
            suite += [
                ("regression_rate", "local polynomial risk decays like n^(-s/k)", self.check_regression_rate),
                ("compounding_gap", "cloning with a wrong e1 column compounds, the right one does not",
                 self.check_compounding_gap),
            ]
        return suite

    def run(self) -> List[CheckResult]:
        results = []
        for name, claim, check in self.checks():
            self._update_progress(f"Running check {name}")
            try:
                passed, detail, value = check()
            except Exception as e:
                self.logger.error(f"Check {name} raised: {str(e)}")
                passed, detail, value = False, f"{type(e).__name__}: {str(e)}", None
            result = CheckResult(name=name, claim=claim, passed=bool(passed), detail=detail,
                                 value=None if value is None else float(value))
            (self.logger.info if result.passed else self.logger.warning)(
                f"{'PASS' if result.passed else 'FAIL'} {name}: {detail}")
            results.append(result)
        return results


def run_verification(config: BenchConfig, mu: Optional[float] = None, full: bool = False) -> List[CheckResult]:
    return VerificationSuite(config, mu=mu, full=full).run()
