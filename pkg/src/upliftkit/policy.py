"""Budgeted treatment allocation.

Selecting which users get the treatment under a total-cost budget is a 0-1
knapsack: maximize the summed revenue gains subject to summed engagement
losses staying within budget. Per-item costs are tiny relative to the
budget, so the greedy value/cost-ratio rule is near-optimal (within one
item's value of the optimum). A linear score ``tau_r - lambda * tau_e`` with
a searched multiplier avoids the noise amplification of the raw ratio, and
1-d clustering of scores trades within-cluster ranking for variance
reduction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kmeans
from .errors import ValidationError

COST_FLOOR = 1e-6


@dataclass(frozen=True)
class AllocationProblem:
    """Per-user gain/cost estimates plus the total budget.

    Costs are floored at ``COST_FLOOR`` so estimated engagement *gains*
    (non-positive costs) become effectively free: those users carry an
    enormous value/cost ratio and are admitted first.
    """

    tau_r: np.ndarray
    tau_e: np.ndarray
    budget: float

    def __post_init__(self):
        tau_r = np.asarray(self.tau_r, dtype=float)
        tau_e = np.asarray(self.tau_e, dtype=float)
        if tau_r.ndim != 1 or tau_r.shape != tau_e.shape:
            raise ValidationError("tau_r and tau_e must be equal-length vectors")
        if not (np.isfinite(tau_r).all() and np.isfinite(tau_e).all()):
            raise ValidationError("effect estimates must be finite")
        if not self.budget > 0:
            raise ValidationError(f"budget must be positive, got {self.budget}")
        raw = tau_e.copy()
        tau_e = np.maximum(tau_e, COST_FLOOR)
        tau_r = tau_r.copy()
        for arr in (tau_r, tau_e, raw):
            arr.setflags(write=False)
        object.__setattr__(self, "tau_r", tau_r)
        object.__setattr__(self, "tau_e", tau_e)
        object.__setattr__(self, "_raw_tau_e", raw)

    @property
    def n(self) -> int:
        return self.tau_r.shape[0]

    @property
    def raw_tau_e(self) -> np.ndarray:
        return self._raw_tau_e


@dataclass(frozen=True)
class AllocationResult:
    z: np.ndarray
    total_value: float
    total_cost: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.int64)
        if not np.isin(z, (0, 1)).all():
            raise ValidationError("z must be a 0/1 vector")
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n_selected(self) -> int:
        return int(self.z.sum())


def _result_from_selection(problem: AllocationProblem, z: np.ndarray) -> AllocationResult:
    return AllocationResult(
        z=z,
        total_value=float(problem.tau_r @ z),
        total_cost=float(problem.tau_e @ z),
    )


def greedy_ratio_allocate(problem: AllocationProblem) -> AllocationResult:
    """Admit users by descending value/cost ratio while the budget holds.

    Users whose raw cost estimate was non-positive are placed ahead of the
    ratio ordering (their floored cost is negligible); remaining ties break
    to the lower index. Guarantees value >= optimum - max(tau_r).
    """
    free = np.flatnonzero(problem.raw_tau_e <= 0.0)
    paid = np.flatnonzero(problem.raw_tau_e > 0.0)
    ratios = problem.tau_r[paid] / problem.tau_e[paid]
    # argsort is stable, so equal ratios keep ascending index order.
    order = np.concatenate([free, paid[np.argsort(-ratios, kind="stable")]])
    z = np.zeros(problem.n, dtype=np.int64)
    spent = 0.0
    for i in order:
        cost = problem.tau_e[i]
        if spent + cost <= problem.budget:
            z[i] = 1
            spent += cost
    return _result_from_selection(problem, z)


def lagrangian_scores(tau_r: np.ndarray, tau_e: np.ndarray, lam: float) -> np.ndarray:
    """Linear selection scores ``tau_r - lambda * tau_e``."""
    tau_r = np.asarray(tau_r, dtype=float)
    tau_e = np.asarray(tau_e, dtype=float)
    if tau_r.shape != tau_e.shape:
        raise ValidationError("tau_r and tau_e must have equal length")
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    return tau_r - lam * tau_e


@dataclass(frozen=True)
class LambdaSweepResult:
    lambda_star: float
    allocation: AllocationResult
    feasible: bool


def sweep_lambda_for_budget(
    problem: AllocationProblem, lambda_grid: np.ndarray
) -> LambdaSweepResult:
    """Pick the multiplier whose positive-score selection best uses the budget.

    For each grid value, select ``{i : S_i > 0}``; among selections whose
    cost fits the budget, return the value-maximizing one (ties to the
    smaller multiplier). If no grid point is feasible the result is the
    empty selection with ``feasible=False``.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size == 0:
        raise ValidationError("lambda grid must be nonempty")
    if (grid < 0).any():
        raise ValidationError("lambda values must be >= 0")
    best: tuple[float, np.ndarray] | None = None
    best_value = -np.inf
    for lam in sorted(set(grid.tolist())):
        scores = lagrangian_scores(problem.tau_r, problem.tau_e, lam)
        z = (scores > 0.0).astype(np.int64)
        cost = float(problem.tau_e @ z)
        if cost > problem.budget:
            continue
        value = float(problem.tau_r @ z)
        if value > best_value:
            best_value = value
            best = (lam, z)
    if best is None:
        empty = _result_from_selection(problem, np.zeros(problem.n, dtype=np.int64))
        return LambdaSweepResult(lambda_star=float(grid.max()), allocation=empty, feasible=False)
    lam, z = best
    return LambdaSweepResult(
        lambda_star=float(lam),
        allocation=_result_from_selection(problem, z),
        feasible=True,
    )


def default_lambda_grid(
    tau_r: np.ndarray, tau_e: np.ndarray, n_points: int = 50
) -> np.ndarray:
    """Log-spaced grid spanning the observed quantile range of the ratios."""
    tau_e = np.maximum(np.asarray(tau_e, dtype=float), COST_FLOOR)
    ratios = np.asarray(tau_r, dtype=float) / tau_e
    positive = ratios[ratios > 0]
    if positive.size == 0:
        return np.linspace(0.0, 1.0, n_points)
    lo = max(float(np.quantile(positive, 0.01)), 1e-9)
    hi = max(float(np.quantile(positive, 0.99)) * 2.0, lo * 10.0)
    return np.concatenate([[0.0], np.geomspace(lo, hi, n_points - 1)])


def threshold_lambda_grid(tau_r: np.ndarray, tau_e: np.ndarray) -> np.ndarray:
    """Exact multiplier grid: midpoints between consecutive distinct ratios.

    The positive-score selection under ``S = tau_r - lambda * tau_e`` only
    changes when ``lambda`` crosses a value/cost ratio, so this grid reaches
    every selection any multiplier can produce. Sized for small problems
    (one point per distinct ratio); use the log-spaced default grid at scale.
    """
    tau_e = np.maximum(np.asarray(tau_e, dtype=float), COST_FLOOR)
    ratios = np.unique(np.asarray(tau_r, dtype=float) / tau_e)
    mids = (ratios[:-1] + ratios[1:]) / 2.0
    grid = np.concatenate([[0.0], mids, [ratios[-1] + 1.0]])
    return grid[grid >= 0.0]


def cluster_scores(scores: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Replace each score with its 1-d k-means cluster mean.

    Collapses within-cluster ordering by design while preserving the order
    between clusters.
    """
    scores = np.asarray(scores, dtype=float)
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > scores.shape[0]:
        raise ValidationError(f"k={k} exceeds the number of scores n={scores.shape[0]}")
    if k == scores.shape[0]:
        return scores.copy()
    centroids, labels = kmeans.kmeans_fit(scores[:, None], k, seed)
    return centroids[labels, 0]
