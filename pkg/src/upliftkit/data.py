"""Randomized-trial datasets: ingestion, synthesis, bias injection, splits.

The central type is :class:`RctDataset`, an immutable bundle of features,
binary treatment assignment, one or more named outcome vectors, and the
known scalar propensity of the randomized collection. Everything downstream
(learners, the doubly robust pipeline, metrics) consumes this type.

Synthetic generators return the dataset together with its ground truth
(per-row true effects and potential outcomes) so that estimator quality can
be measured exactly, which is impossible on production data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import kmeans
from .errors import SchemaError, ValidationError

CRITEO_FEATURES = tuple(f"f{i}" for i in range(12))
CRITEO_OUTCOMES = ("conversion", "visit", "exposure")

# Population standard deviations of the synthetic baseline functions under
# X ~ Uniform(-1, 1): used as the per-outcome noise unit so that
# noise sd = noise_scale * sd(baseline).
_REVENUE_BASELINE_SD = math.sqrt(0.5 + 4.0 / 45.0)  # sd of sin(pi*x1) + x2^2
_ENGAGEMENT_BASELINE_SD = math.sqrt(1.0 / 3.0)  # sd of x2


def _as_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"features must be a 2-d matrix, got ndim={X.ndim}")
    return X


@dataclass(frozen=True)
class RctDataset:
    """Sample of a randomized controlled trial.

    Parameters
    ----------
    features : (n, d) array
        Pre-treatment user features.
    treatment : (n,) array of {0, 1}
        Treatment assignment indicator.
    outcomes : dict of name -> (n,) array
        One or more observed outcome vectors (e.g. ``"visit"`` for the
        public benchmark, ``"revenue"`` and ``"engagement"`` for synthetic
        dual-objective data).
    propensity : float in (0, 1)
        Known probability of treatment from the trial design.
    feature_names : tuple of str, optional
        Column labels; defaults to ``x0..x{d-1}``.
    """

    features: np.ndarray
    treatment: np.ndarray
    outcomes: dict[str, np.ndarray]
    propensity: float
    feature_names: tuple[str, ...] = ()

    def __post_init__(self):
        X = _as_matrix(self.features)
        w = np.asarray(self.treatment)
        if w.ndim != 1 or w.shape[0] != X.shape[0]:
            raise ValidationError("treatment must be a length-n vector")
        if not np.isin(w, (0, 1)).all():
            bad = int(np.flatnonzero(~np.isin(w, (0, 1)))[0])
            raise ValidationError(f"treatment must be 0/1, offending row {bad}")
        w = w.astype(np.int64)
        if not self.outcomes:
            raise ValidationError("at least one outcome vector is required")
        outs: dict[str, np.ndarray] = {}
        for name, y in self.outcomes.items():
            y = np.asarray(y, dtype=float)
            if y.shape != (X.shape[0],):
                raise ValidationError(f"outcome {name!r} must have length n={X.shape[0]}")
            y.setflags(write=False)
            outs[name] = y
        if not (0.0 < float(self.propensity) < 1.0):
            raise ValidationError(f"propensity must lie in (0, 1), got {self.propensity}")
        names = tuple(self.feature_names) or tuple(f"x{i}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise ValidationError("feature_names length must equal feature dimension")
        X = X.copy()
        X.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "treatment", w)
        object.__setattr__(self, "outcomes", outs)
        object.__setattr__(self, "propensity", float(self.propensity))
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def outcome_names(self) -> tuple[str, ...]:
        return tuple(self.outcomes)

    def outcome(self, name: str) -> np.ndarray:
        if name not in self.outcomes:
            raise ValidationError(
                f"unknown outcome {name!r}; available: {sorted(self.outcomes)}"
            )
        return self.outcomes[name]

    def subset(self, indices: np.ndarray) -> "RctDataset":
        """Row subset; keeps the parent's design propensity."""
        idx = np.asarray(indices)
        return RctDataset(
            features=self.features[idx],
            treatment=self.treatment[idx],
            outcomes={k: v[idx] for k, v in self.outcomes.items()},
            propensity=self.propensity,
            feature_names=self.feature_names,
        )

    def with_outcome(self, name: str, values: np.ndarray) -> "RctDataset":
        """Copy of the dataset with one outcome vector added or replaced."""
        outs = dict(self.outcomes)
        outs[name] = np.asarray(values, dtype=float)
        return RctDataset(
            features=self.features,
            treatment=self.treatment,
            outcomes=outs,
            propensity=self.propensity,
            feature_names=self.feature_names,
        )


@dataclass(frozen=True)
class SyntheticGroundTruth:
    """True per-row effects and potential outcomes of a synthetic dataset."""

    tau: dict[str, np.ndarray]
    potential_outcomes: dict[str, tuple[np.ndarray, np.ndarray]]

    @property
    def tau_revenue(self) -> np.ndarray:
        return self.tau["revenue"]

    @property
    def tau_engagement(self) -> np.ndarray:
        return self.tau["engagement"]


@dataclass(frozen=True)
class BiasInjectionSpec:
    """Label corruption rule: flip positive labels to 0 inside a feature slice.

    The slice is ``{rows : f0(x) < alpha}`` with ``f0(x) = f0_weights . x``;
    inside it each label 1 is flipped to 0 independently with probability
    ``beta``.
    """

    f0_weights: np.ndarray
    alpha: float
    beta: float
    target_outcome: str
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.f0_weights, dtype=float)
        if w.ndim != 1:
            raise ValidationError("f0_weights must be a 1-d vector")
        if not (0.0 <= self.beta <= 1.0):
            raise ValidationError(f"beta must lie in [0, 1], got {self.beta}")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "f0_weights", w)


@dataclass(frozen=True)
class ClusterFeatureizer:
    """Fitted k-means over a high-dimensional feature block.

    ``apply_cluster_featureizer`` appends the nearest-centroid cluster ID as
    one extra integer feature column; one-hot expansion is left to the
    downstream regressor.
    """

    centroids: np.ndarray
    column_indices: tuple[int, ...]

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def load_criteo_csv(path, outcome_name: str = "visit") -> RctDataset:
    """Load a CRITEO-UPLIFT style CSV.

    Expects a header with columns ``f0..f11``, ``treatment``, and the
    requested outcome (one of ``visit``, ``conversion``, ``exposure``).
    The propensity is computed as the treated fraction. Unparseable fields
    reject the whole file; non-binary treatment values report the offending
    row index.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"file not found: {path}")
    if outcome_name not in CRITEO_OUTCOMES:
        raise ValidationError(
            f"outcome must be one of {CRITEO_OUTCOMES}, got {outcome_name!r}"
        )
    header = pd.read_csv(path, nrows=0).columns.tolist()
    required = list(CRITEO_FEATURES) + ["treatment", outcome_name]
    for col in required:
        if col not in header:
            raise SchemaError(f"missing required column {col!r} in {path}")
    df = pd.read_csv(path, usecols=required)
    for col in required:
        numeric = pd.to_numeric(df[col], errors="coerce")
        bad = numeric.isna() & df[col].notna()
        if bad.any() or numeric.isna().any():
            row = int(np.flatnonzero(numeric.isna().to_numpy())[0])
            raise ValidationError(
                f"unparseable or missing value in column {col!r} at row {row}; file rejected"
            )
        df[col] = numeric
    w = df["treatment"].to_numpy()
    nonbinary = ~np.isin(w, (0.0, 1.0))
    if nonbinary.any():
        row = int(np.flatnonzero(nonbinary)[0])
        raise ValidationError(
            f"treatment must be 0/1, found {w[row]} at row {row}"
        )
    w = w.astype(np.int64)
    propensity = float(w.mean())
    return RctDataset(
        features=df[list(CRITEO_FEATURES)].to_numpy(dtype=float),
        treatment=w,
        outcomes={outcome_name: df[outcome_name].to_numpy(dtype=float)},
        propensity=propensity,
        feature_names=CRITEO_FEATURES,
    )


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------

def _coord(X: np.ndarray, j: int) -> np.ndarray:
    # Coordinates beyond the feature dimension contribute zero.
    if j < X.shape[1]:
        return X[:, j]
    return np.zeros(X.shape[0])


def _revenue_surfaces(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x1, x2, x3 = _coord(X, 0), _coord(X, 1), _coord(X, 2)
    baseline = 2.0 + np.sin(np.pi * x1) + x2**2
    tau = 0.5 * (1.0 + np.tanh(2.0 * x1)) * (1.0 + 0.3 * x3)
    return baseline, tau


def _engagement_surfaces(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x1, x2, x4 = _coord(X, 0), _coord(X, 1), _coord(X, 3)
    baseline = 5.0 + x2
    tau = 0.2 * (1.0 + np.tanh(-2.0 * x1)) * (1.0 + 0.3 * x4) + 0.05
    return baseline, tau


def generate_synthetic_rct(
    n: int, d: int, p: float, noise_scale: float, seed: int
) -> tuple[RctDataset, SyntheticGroundTruth]:
    """Generate a dual-outcome randomized trial with known ground truth.

    Features are i.i.d. Uniform(-1, 1); treatment is Bernoulli(``p``)
    independent of the features. Two continuous outcomes are produced:

    * ``revenue``: baseline ``2 + sin(pi*x1) + x2^2`` plus a strictly
      positive effect ``0.5 * (1 + tanh(2*x1)) * (1 + 0.3*x3)``;
    * ``engagement`` (interpreted as an engagement *loss* under treatment):
      baseline ``5 + x2`` plus effect
      ``0.2 * (1 + tanh(-2*x1)) * (1 + 0.3*x4) + 0.05``.

    Effect heterogeneity is driven by ``x1``, so a correct effect model
    ranks rows by ``x1``; the engagement effect is bounded away from zero to
    keep revenue/engagement ratios well defined. Noise is additive Gaussian
    with standard deviation ``noise_scale`` times the baseline's population
    standard deviation; the default harness value 3.0 leaves per-row signal
    well below the noise floor, mimicking long-horizon outcome labels.
    Coordinates beyond ``d`` contribute zero to the surfaces.

    Returns the dataset and a :class:`SyntheticGroundTruth` carrying the
    per-row true effects and both potential outcomes.
    """
    _check_synthetic_args(n, d, p)
    if noise_scale < 0:
        raise ValidationError(f"noise_scale must be >= 0, got {noise_scale}")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    w = (rng.random(n) < p).astype(np.int64)

    outcomes: dict[str, np.ndarray] = {}
    tau: dict[str, np.ndarray] = {}
    potentials: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    surfaces = {
        "revenue": (_revenue_surfaces, noise_scale * _REVENUE_BASELINE_SD),
        "engagement": (_engagement_surfaces, noise_scale * _ENGAGEMENT_BASELINE_SD),
    }
    for name, (surface, sd) in surfaces.items():
        baseline, effect = surface(X)
        eps0 = rng.normal(0.0, 1.0, size=n) * sd
        eps1 = rng.normal(0.0, 1.0, size=n) * sd
        y0 = baseline + eps0
        y1 = baseline + effect + eps1
        outcomes[name] = np.where(w == 1, y1, y0)
        tau[name] = effect
        potentials[name] = (y0, y1)

    dataset = RctDataset(
        features=X, treatment=w, outcomes=outcomes, propensity=float(p)
    )
    return dataset, SyntheticGroundTruth(tau=tau, potential_outcomes=potentials)


def generate_synthetic_binary_rct(
    n: int, d: int, p: float, seed: int
) -> tuple[RctDataset, SyntheticGroundTruth]:
    """Generate a single binary-outcome randomized trial ("visit").

    Stand-in for the public benchmark when the real file is unavailable:
    visit probability ``0.3 + 0.1*x2`` at control, lifted by
    ``0.02 + 0.18 * (1 + tanh(2*x1)) / 2`` under treatment, so the true
    effect again increases in ``x1``.
    """
    _check_synthetic_args(n, d, p)
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, d))
    w = (rng.random(n) < p).astype(np.int64)
    q0 = 0.3 + 0.1 * _coord(X, 1)
    effect = 0.02 + 0.09 * (1.0 + np.tanh(2.0 * _coord(X, 0)))
    q1 = np.clip(q0 + effect, 0.0, 1.0)
    y0 = (rng.random(n) < q0).astype(float)
    y1 = (rng.random(n) < q1).astype(float)
    visit = np.where(w == 1, y1, y0)
    dataset = RctDataset(
        features=X, treatment=w, outcomes={"visit": visit}, propensity=float(p)
    )
    truth = SyntheticGroundTruth(
        tau={"visit": q1 - q0}, potential_outcomes={"visit": (y0, y1)}
    )
    return dataset, truth


def _check_synthetic_args(n: int, d: int, p: float) -> None:
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if d < 2:
        raise ValidationError(f"d must be >= 2, got {d}")
    if not (0.0 < p < 1.0):
        raise ValidationError(f"p must lie in (0, 1), got {p}")


# ---------------------------------------------------------------------------
# Label bias injection
# ---------------------------------------------------------------------------

def inject_label_bias(dataset: RctDataset, spec: BiasInjectionSpec) -> RctDataset:
    """Return a copy with corrupted labels for the target outcome.

    Rows with ``f0(x) < alpha`` and label 1 are flipped to 0 independently
    with probability ``beta``; every other row is untouched, and the input
    dataset is never modified.
    """
    y = dataset.outcome(spec.target_outcome)
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValidationError(
            f"bias injection requires a binary outcome; {spec.target_outcome!r} is not"
        )
    if spec.f0_weights.shape[0] != dataset.d:
        raise ValidationError(
            f"f0_weights has length {spec.f0_weights.shape[0]}, expected d={dataset.d}"
        )
    scores = dataset.features @ spec.f0_weights
    in_slice = (scores < spec.alpha) & (y == 1.0)
    rng = np.random.default_rng(spec.seed)
    flips = in_slice & (rng.random(dataset.n) < spec.beta)
    y_new = y.copy()
    y_new[flips] = 0.0
    return dataset.with_outcome(spec.target_outcome, y_new)


def median_f0_threshold(dataset: RctDataset, f0_weights: np.ndarray) -> float:
    """Median of ``f0(x)`` over the dataset, the default bias-slice cut."""
    w = np.asarray(f0_weights, dtype=float)
    return float(np.median(dataset.features @ w))


# ---------------------------------------------------------------------------
# Splitting and subsampling
# ---------------------------------------------------------------------------

def split_train_test(
    dataset: RctDataset, train_fraction: float, seed: int
) -> tuple[RctDataset, RctDataset]:
    """Seeded disjoint row split; both halves keep the parent propensity."""
    if not (0.0 < train_fraction < 1.0):
        raise ValidationError(
            f"train_fraction must lie in (0, 1), got {train_fraction}"
        )
    n = dataset.n
    n_train = int(round(train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))


def subsample(dataset: RctDataset, n_max: int, seed: int) -> RctDataset:
    """Seeded row subsample (without replacement), capped at the dataset size."""
    if n_max <= 0:
        raise ValidationError(f"n_max must be positive, got {n_max}")
    if n_max >= dataset.n:
        return dataset
    perm = np.random.default_rng(seed).permutation(dataset.n)
    return dataset.subset(np.sort(perm[:n_max]))


# ---------------------------------------------------------------------------
# Cluster featureization
# ---------------------------------------------------------------------------

def fit_cluster_featureizer(
    features: np.ndarray,
    k: int,
    seed: int,
    column_indices: tuple[int, ...] | None = None,
) -> ClusterFeatureizer:
    """Fit k-means over the selected feature block (all columns by default)."""
    X = _as_matrix(features)
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    if k > X.shape[0]:
        raise ValidationError(f"k={k} exceeds the number of rows n={X.shape[0]}")
    cols = tuple(column_indices) if column_indices is not None else tuple(range(X.shape[1]))
    centroids, _ = kmeans.kmeans_fit(X[:, list(cols)], k, seed)
    return ClusterFeatureizer(centroids=centroids, column_indices=cols)


def apply_cluster_featureizer(cf: ClusterFeatureizer, dataset: RctDataset) -> RctDataset:
    """Append the cluster-ID column; treatment and outcomes are untouched."""
    block = dataset.features[:, list(cf.column_indices)]
    ids = kmeans.assign(block, cf.centroids).astype(float)
    return RctDataset(
        features=np.column_stack([dataset.features, ids]),
        treatment=dataset.treatment,
        outcomes=dict(dataset.outcomes),
        propensity=dataset.propensity,
        feature_names=dataset.feature_names + ("cluster_id",),
    )


def cluster_ids(cf: ClusterFeatureizer, features: np.ndarray) -> np.ndarray:
    """Cluster IDs for raw feature rows (nearest centroid)."""
    X = _as_matrix(features)
    return kmeans.assign(X[:, list(cf.column_indices)], cf.centroids)


# ---------------------------------------------------------------------------
# CSV export (synthetic data interchange)
# ---------------------------------------------------------------------------

def write_dataset_csv(dataset: RctDataset, path) -> None:
    """Write ``x0..x{d-1},treatment,<outcomes...>`` rows."""
    names = list(dataset.feature_names)
    out_names = list(dataset.outcome_names)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["treatment"] + out_names)
        for i in range(dataset.n):
            row = [repr(float(v)) for v in dataset.features[i]]
            row.append(str(int(dataset.treatment[i])))
            row.extend(repr(float(dataset.outcomes[name][i])) for name in out_names)
            writer.writerow(row)


def write_ground_truth_csv(truth: SyntheticGroundTruth, path) -> None:
    """Sidecar with one true-effect column per outcome."""
    names = sorted(truth.tau)
    columns = [truth.tau[name] for name in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"tau_{name}" for name in names])
        for i in range(columns[0].shape[0]):
            writer.writerow([repr(float(col[i])) for col in columns])
