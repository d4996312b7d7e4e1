"""
Empirical check of the n^(-s/k) regression rate on hard functions.
"""

import os
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.funclass.hard_function import sample_hard_function, zero_function
from core.funclass.local_estimator import RegressionSample, fit_local_estimator, regression_risk
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.rng import derive_rng, draw_seed


@dataclass
class RateSweepResult:
    """
    Attributes:
        slope: Mean over seeds of the least-squares slope of log risk on log n
        per_seed_slopes: One slope per seed
        risks: Mean risk per n
        cells: (n, seed index, risk) for every fitted cell
        status: 'ok' or 'skipped' (risk numerically zero)
    """
    slope: float
    per_seed_slopes: List[float]
    risks: Dict[int, float]
    cells: List[Tuple[int, int, float]]
    status: str = "ok"
    errors: List[str] = field(default_factory=list)


def log_log_slopes(risks: Dict[Tuple[int, int], float], n_grid: Sequence[int],
                   seeds: Union[int, Sequence[int]]) -> List[float]:
    """Least-squares slope of log risk on log n for every seed with a complete row."""
    n_grid = sorted(n_grid)
    seeds = range(seeds) if isinstance(seeds, int) else seeds
    log_n = np.log(np.asarray(n_grid, dtype=float))
    slopes = []
    for j in seeds:
        if all((n, j) in risks for n in n_grid):
            log_r = np.log([risks[(n, j)] for n in n_grid])
            slopes.append(float(np.polyfit(log_n, log_r, 1)[0]))
    return slopes


class RateSweep:
    """Fits the local estimator on hard functions over an (n, seed) grid."""

    def __init__(self, k: int, s: int, m_queries: int = 4096, max_workers: Optional[int] = None,
                 progress_callback: Optional[Callable[[str], None]] = None):
        self.k = k
        self.s = s
        self.m_queries = m_queries
        self.max_workers = max_workers or os.cpu_count() or 4
        self.progress_callback = progress_callback
        self.logger = Logger("RateSweep").logger

    def _update_progress(self, message: str) -> None:
        if self.progress_callback:
            self.progress_callback(message)
        self.logger.debug(message)

    def risk_cell(self, n: int, base: int, seed_index: int, constant_target: bool = False) -> float:
        """Risk of one fit with eps = n^(-1/k), independent of every other cell."""
        rng = derive_rng(base, n, seed_index)
        eps = min(1.0, n ** (-1.0 / self.k))
        g = zero_function(self.k, self.s, eps) if constant_target else sample_hard_function(self.k, self.s, eps, rng)
        sample = RegressionSample.draw(g, self.k, n, rng)
        est = fit_local_estimator(sample, degree=self.s - 1)
        return regression_risk(est, g, self.m_queries, rng).value

    def run(self, n_grid: Sequence[int], seeds: int, rng: np.random.Generator,
            constant_target: bool = False) -> RateSweepResult:
        """
        Sweep the grid in parallel and fit the log-log slope per seed.

        Args:
            n_grid: At least four geometrically spaced sample sizes
            seeds: Number of independent repetitions per n
            rng: Source of the base seed
            constant_target: Use g == 0, for which the slope is undefined

        Returns:
            RateSweepResult: Slopes, mean risks and per-cell risks
        """
        n_grid = sorted(int(n) for n in n_grid)
        if len(n_grid) < 4:
            raise PreconditionError(f"n_grid needs at least 4 points, got {len(n_grid)}")
        if seeds < 1:
            raise PreconditionError(f"seeds must be >= 1, got {seeds}")
        base = draw_seed(rng)

        risks: Dict[Tuple[int, int], float] = {}
        errors: List[str] = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            futures = {
                executor.submit(self.risk_cell, n, base, j, constant_target): (n, j)
                for n in n_grid for j in range(seeds)
            }
            for future in as_completed(futures):
                n, j = futures[future]
                try:
                    risks[(n, j)] = future.result()
                    self._update_progress(f"Rate cell n={n} seed={j}: risk={risks[(n, j)]:.3e}")
                except Exception as e:
                    error_msg = f"Rate cell n={n} seed={j} failed: {str(e)}"
                    self.logger.error(error_msg)
                    errors.append(error_msg)

        cells = sorted((n, j, r) for (n, j), r in risks.items())
        mean_risks = {n: float(np.mean([r for (m, _), r in risks.items() if m == n])) for n in n_grid
                      if any(m == n for (m, _) in risks)}

        if constant_target or min(risks.values(), default=0.0) <= 1e-14:
            self.logger.warning("Risk is numerically zero; slope test skipped")
            return RateSweepResult(slope=float("nan"), per_seed_slopes=[], risks=mean_risks,
                                   cells=cells, status="skipped", errors=errors)

        slopes = log_log_slopes(risks, n_grid, seeds)
        slope = float(np.mean(slopes)) if slopes else float("nan")
        self.logger.info(f"Rate sweep k={self.k} s={self.s}: slope {slope:.3f} (target {-self.s / self.k:.3f})")
        return RateSweepResult(slope=slope, per_seed_slopes=slopes, risks=mean_risks, cells=cells,
                               status="ok" if slopes else "failed", errors=errors)


def rate_sweep(k: int, s: int, n_grid: Sequence[int], seeds: int, rng: np.random.Generator,
               m_queries: int = 4096, constant_target: bool = False) -> RateSweepResult:
    """Functional entry point for :class:`RateSweep`."""
    return RateSweep(k, s, m_queries=m_queries).run(n_grid, seeds, rng, constant_target=constant_target)
