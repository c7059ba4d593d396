"""Ranking-quality metrics for effect models.

Uplift curve / AUUC for single-objective data and cost curve / AUCC for
dual-objective data. Both use the cumulative-gain construction: rank rows by
score descending (ties stable by original index), and for each evaluated
population fraction ``t`` compute the arm-mean outcome difference within the
top-``t`` set times its size. Curves are normalized by their full-population
endpoint so that a random ranking traces the diagonal and scores near 0.5,
and areas are trapezoidal, clamped into [0, 1].

Only ranks matter: both metrics are invariant under strictly monotone score
transformations.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .data import RctDataset, SyntheticGroundTruth
from .errors import MetricUndefinedError, ValidationError

GRID_POINTS = 100


@dataclass(frozen=True)
class CurveReport:
    """Curve points plus the scalar area.

    ``points`` are ``(x, y)`` pairs with non-decreasing ``x`` starting at
    the origin; ``fractions`` carries the population fraction behind each
    point; ``flagged`` lists indices of points where an empty treatment or
    control cell forced carrying the previous estimate.
    """

    points: tuple[tuple[float, float], ...]
    area: float
    kind: str
    n_evaluated: int
    fractions: tuple[float, ...]
    flagged: tuple[int, ...] = ()

    def __post_init__(self):
        xs = [p[0] for p in self.points]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValidationError("curve x coordinates must be non-decreasing")


def _area_under(points) -> float:
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    return float(min(max(np.trapezoid(ys, xs), 0.0), 1.0))


def _rank_descending(scores: np.ndarray) -> np.ndarray:
    # Stable sort on the negated scores keeps ties in original index order.
    return np.argsort(-scores, kind="stable")


def _top_k_sizes(n: int) -> list[int]:
    # k = ceil(i * n / GRID_POINTS) in exact integer arithmetic, so grid
    # fractions map to the same prefixes on every platform.
    return [-((-i * n) // GRID_POINTS) for i in range(1, GRID_POINTS + 1)]


def _cumulative_gains(
    order: np.ndarray, y: np.ndarray, w: np.ndarray
) -> tuple[np.ndarray, list[int]]:
    """Arm-mean difference times prefix size at each grid prefix.

    Returns the per-grid-point gains and the indices where an empty arm
    forced carrying the previous difference estimate (0.0 before the first
    valid one).
    """
    n = y.shape[0]
    y_sorted = y[order]
    w_sorted = w[order]
    cum_yt = np.cumsum(y_sorted * w_sorted)
    cum_yc = np.cumsum(y_sorted * (1 - w_sorted))
    cum_nt = np.cumsum(w_sorted)
    cum_nc = np.cumsum(1 - w_sorted)

    gains = np.empty(GRID_POINTS)
    flagged: list[int] = []
    last_diff = 0.0
    have_valid = False
    for gi, k in enumerate(_top_k_sizes(n)):
        nt, nc = cum_nt[k - 1], cum_nc[k - 1]
        if nt > 0 and nc > 0:
            last_diff = cum_yt[k - 1] / nt - cum_yc[k - 1] / nc
            have_valid = True
        else:
            flagged.append(gi)
            if not have_valid:
                last_diff = 0.0
        gains[gi] = last_diff * k
    return gains, flagged


def _validate_scores(scores, dataset: RctDataset) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (dataset.n,):
        raise ValidationError(
            f"scores must have length n={dataset.n}, got shape {scores.shape}"
        )
    treated = dataset.treatment == 1
    if not treated.any() or treated.all():
        raise ValidationError("dataset must contain both treatment arms")
    return scores


def uplift_curve(scores, dataset: RctDataset, outcome: str) -> CurveReport:
    """Normalized cumulative-gain curve over the targeted-fraction grid."""
    scores = _validate_scores(scores, dataset)
    y = dataset.outcome(outcome)
    order = _rank_descending(scores)
    gains, flagged = _cumulative_gains(order, y, dataset.treatment)
    total = gains[-1]
    if total == 0.0:
        raise MetricUndefinedError(
            "full-population gain is zero; the uplift curve has no normalization"
        )
    fractions = [i / GRID_POINTS for i in range(1, GRID_POINTS + 1)]
    points = [(0.0, 0.0)] + [
        (t, g / abs(total)) for t, g in zip(fractions, gains)
    ]
    return CurveReport(
        points=tuple(points),
        area=_area_under(points),
        kind="uplift",
        n_evaluated=dataset.n,
        fractions=(0.0, *fractions),
        flagged=tuple(i + 1 for i in flagged),
    )


def auuc(scores, dataset: RctDataset, outcome: str) -> float:
    """Area under the normalized uplift curve."""
    return uplift_curve(scores, dataset, outcome).area


def cost_curve(
    scores,
    dataset: RctDataset,
    revenue_outcome: str = "revenue",
    engagement_outcome: str = "engagement",
) -> CurveReport:
    """Incremental revenue against incremental engagement loss.

    Both axes use the same cumulative-gain construction and are normalized
    by their full-population values. The x axis is forced non-decreasing
    with a running maximum (noisy effect estimates can make raw incremental
    cost wiggle); the area then reads as ranking efficiency with 0.5 for a
    random ordering.
    """
    scores = _validate_scores(scores, dataset)
    order = _rank_descending(scores)
    rev_gains, rev_flagged = _cumulative_gains(
        order, dataset.outcome(revenue_outcome), dataset.treatment
    )
    eng_gains, eng_flagged = _cumulative_gains(
        order, dataset.outcome(engagement_outcome), dataset.treatment
    )
    if eng_gains[-1] <= 0.0:
        raise MetricUndefinedError(
            "aggregate engagement cost is not positive; the cost curve is undefined"
        )
    if rev_gains[-1] == 0.0:
        raise MetricUndefinedError(
            "aggregate revenue gain is zero; the cost curve has no normalization"
        )
    xs = np.maximum.accumulate(np.maximum(eng_gains / eng_gains[-1], 0.0))
    ys = rev_gains / abs(rev_gains[-1])
    fractions = [i / GRID_POINTS for i in range(1, GRID_POINTS + 1)]
    points = [(0.0, 0.0)] + list(zip(xs.tolist(), ys.tolist()))
    flagged = sorted(set(rev_flagged) | set(eng_flagged))
    return CurveReport(
        points=tuple(points),
        area=_area_under(points),
        kind="cost",
        n_evaluated=dataset.n,
        fractions=(0.0, *fractions),
        flagged=tuple(i + 1 for i in flagged),
    )


def aucc(
    scores,
    dataset: RctDataset,
    revenue_outcome: str = "revenue",
    engagement_outcome: str = "engagement",
) -> float:
    """Area under the normalized cost curve."""
    return cost_curve(scores, dataset, revenue_outcome, engagement_outcome).area


def single_feature_auuc(
    dataset: RctDataset, outcome: str, feature_index: int, n_bins: int = 10
) -> float:
    """AUUC of ranking users by their feature-bin's empirical uplift.

    Users are binned by feature quantiles; each bin's arm-mean outcome
    difference becomes the score of its members. Used to screen feature
    candidates: informative features score above 0.5. A constant feature is
    degenerate and returns exactly 0.5 (with a warning).
    """
    if n_bins < 2:
        raise ValidationError(f"n_bins must be >= 2, got {n_bins}")
    if not (0 <= feature_index < dataset.d):
        raise ValidationError(f"feature_index out of range: {feature_index}")
    x = dataset.features[:, feature_index]
    if np.all(x == x[0]):
        warnings.warn(
            f"feature {feature_index} is constant; single-feature AUUC is degenerate",
            RuntimeWarning,
            stacklevel=2,
        )
        return 0.5
    edges = np.quantile(x, np.linspace(0.0, 1.0, n_bins + 1))
    bins = np.clip(np.searchsorted(edges[1:-1], x, side="right"), 0, n_bins - 1)
    y = dataset.outcome(outcome)
    w = dataset.treatment
    scores = np.zeros(dataset.n)
    for b in range(n_bins):
        rows = bins == b
        if not rows.any():
            continue
        treated = rows & (w == 1)
        control = rows & (w == 0)
        if treated.any() and control.any():
            scores[rows] = y[treated].mean() - y[control].mean()
    return auuc(scores, dataset, outcome)


def cate_rmse(model, truth: SyntheticGroundTruth, X: np.ndarray, outcome: str) -> float:
    """Root-mean-square error of the model against the true per-row effects."""
    tau_true = truth.tau[outcome]
    X = np.asarray(X, dtype=float)
    if X.shape[0] != tau_true.shape[0]:
        raise ValidationError(
            f"X has {X.shape[0]} rows but the ground truth has {tau_true.shape[0]}"
        )
    err = model.estimate_cate(X) - tau_true
    return float(np.sqrt(np.mean(err * err)))


def write_curve_csv(report: CurveReport, path) -> None:
    """Write ``t,x,y`` rows preceded by comment lines with the summary."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# kind={report.kind}\n")
        fh.write(f"# n={report.n_evaluated}\n")
        fh.write(f"# area={report.area!r}\n")
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y"])
        for t, (x, y) in zip(report.fractions, report.points):
            writer.writerow([repr(float(t)), repr(float(x)), repr(float(y))])
