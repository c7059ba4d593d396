"""Doubly robust effect learner for randomized-trial data.

Pipeline: split rows into two folds, fit per-arm outcome (nuisance)
regressors on each fold, predict every row with the models trained on the
*other* fold, form the doubly robust pseudo-outcome

    phi(x) = (W - p) / (p * (1 - p)) * (Y - Yhat(x, W)) + Yhat(x, 1) - Yhat(x, 0)

with the known trial propensity ``p``, and regress the pooled pseudo-outcomes
on the features. The resulting second-stage model is the only thing needed
at inference time: with ``p`` correct, the pseudo-outcome mean is an unbiased
effect estimate for *any* fixed nuisance model, so a cheap or even badly
biased outcome model still yields a consistent effect model.

The nuisance may be trained against a different outcome column than the one
used in the pseudo-outcome residual (``nuisance_outcome``); this is how the
harness studies deliberately corrupted outcome models while the estimator
itself sees the real labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import RctDataset
from .errors import ValidationError
from .regress import Regressor, fit_regressor, regressor_from_dict

PROPENSITY_BOUNDS = (0.01, 0.99)
DRL_FORMAT = "drl-v1"


@dataclass(frozen=True)
class CrossFitPlan:
    """Partition of rows into folds 1 and 2."""

    fold: np.ndarray
    seed: int

    def __post_init__(self):
        fold = np.asarray(self.fold, dtype=np.int64)
        if not np.isin(fold, (1, 2)).all():
            raise ValidationError("fold assignments must be 1 or 2")
        if (fold == 1).sum() == 0 or (fold == 2).sum() == 0:
            raise ValidationError("both folds must be nonempty")
        fold = fold.copy()
        fold.setflags(write=False)
        object.__setattr__(self, "fold", fold)

    @property
    def n(self) -> int:
        return self.fold.shape[0]


@dataclass(frozen=True)
class PseudoOutcomeVector:
    """Per-row doubly robust targets plus the settings they were built under."""

    values: np.ndarray
    propensity: float
    outcome: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if not np.isfinite(values).all():
            raise ValidationError("pseudo-outcomes must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class NuisanceModels:
    """Per-(fold, arm) outcome regressors from a cross-fit plan.

    ``models[(f, w)]`` was trained on the *other* fold's arm-``w`` rows, so
    predictions for fold-``f`` rows never saw those rows' labels.
    """

    models: dict[tuple[int, int], Regressor]
    plan: CrossFitPlan

    def predict_both_arms(self, dataset: RctDataset) -> tuple[np.ndarray, np.ndarray]:
        """Cross-fitted ``(Yhat(x, 0), Yhat(x, 1))`` for every row."""
        yhat0 = np.empty(dataset.n)
        yhat1 = np.empty(dataset.n)
        for f in (1, 2):
            rows = self.plan.fold == f
            if rows.any():
                yhat0[rows] = self.models[(f, 0)].predict(dataset.features[rows])
                yhat1[rows] = self.models[(f, 1)].predict(dataset.features[rows])
        return yhat0, yhat1


def make_crossfit_plan(n: int, seed: int) -> CrossFitPlan:
    """Near-even seeded two-fold partition; needs at least 4 rows."""
    if n < 4:
        raise ValidationError(f"cross-fitting needs n >= 4, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    fold = np.full(n, 2, dtype=np.int64)
    fold[perm[: n // 2]] = 1
    return CrossFitPlan(fold=fold, seed=seed)


def fit_nuisance(
    dataset: RctDataset, outcome: str, plan: CrossFitPlan, config
) -> NuisanceModels:
    """Fit the four cross-fitted per-arm outcome regressors."""
    if plan.n != dataset.n:
        raise ValidationError("plan length does not match the dataset")
    y = dataset.outcome(outcome)
    models: dict[tuple[int, int], Regressor] = {}
    for f, other in ((1, 2), (2, 1)):
        train_rows = plan.fold == other
        for arm in (0, 1):
            cell = train_rows & (dataset.treatment == arm)
            if not cell.any():
                raise ValidationError(
                    f"no rows to train the fold-{f} arm-{arm} nuisance "
                    f"(fold {other} has no arm-{arm} rows)"
                )
            models[(f, arm)] = fit_regressor(config, dataset.features[cell], y[cell])
    return NuisanceModels(models=models, plan=plan)


def _check_propensity(p: float) -> float:
    p = float(p)
    lo, hi = PROPENSITY_BOUNDS
    if not (lo <= p <= hi):
        raise ValidationError(
            f"propensity must lie in [{lo}, {hi}]; got {p} "
            "(the pseudo-outcome weight 1/(p(1-p)) explodes near the boundary)"
        )
    return p


def compute_pseudo_outcomes(
    dataset: RctDataset, outcome: str, nuisances: NuisanceModels, p: float
) -> PseudoOutcomeVector:
    """Evaluate the doubly robust pseudo-outcome for every row."""
    p = _check_propensity(p)
    y = dataset.outcome(outcome)
    w = dataset.treatment.astype(float)
    yhat0, yhat1 = nuisances.predict_both_arms(dataset)
    yhat_obs = np.where(dataset.treatment == 1, yhat1, yhat0)
    values = (w - p) / (p * (1.0 - p)) * (y - yhat_obs) + yhat1 - yhat0
    return PseudoOutcomeVector(values=values, propensity=p, outcome=outcome)


def dr_potential_outcomes(
    dataset: RctDataset, outcome: str, nuisances: NuisanceModels, p: float
) -> tuple[np.ndarray, np.ndarray]:
    """Doubly robust potential-outcome estimates ``(YDR(x,0), YDR(x,1))``.

    ``YDR(x,t) = Yhat(x,t) + 1{W=t} * (Y - Yhat(x,t)) / P(W=t)``; the
    difference ``YDR(x,1) - YDR(x,0)`` is algebraically identical to the
    pseudo-outcome, which the tests assert row-wise.
    """
    p = _check_propensity(p)
    y = dataset.outcome(outcome)
    w = dataset.treatment
    yhat0, yhat1 = nuisances.predict_both_arms(dataset)
    ydr1 = yhat1 + np.where(w == 1, (y - yhat1) / p, 0.0)
    ydr0 = yhat0 + np.where(w == 0, (y - yhat0) / (1.0 - p), 0.0)
    return ydr0, ydr1


def dr_ate(
    dataset: RctDataset, outcome: str, nuisances: NuisanceModels, p: float
) -> float:
    """Doubly robust average-effect estimate: the pseudo-outcome mean."""
    return float(compute_pseudo_outcomes(dataset, outcome, nuisances, p).values.mean())


@dataclass(frozen=True)
class DrlModel:
    """Fitted doubly robust learner; inference uses only the second stage."""

    kind = "drl"
    second_stage: Regressor
    propensity: float
    seed: int

    @property
    def input_dim(self) -> int:
        return self.second_stage.input_dim

    def estimate_cate(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return self.second_stage.predict(X)

    def to_dict(self) -> dict:
        # Only the second-stage model ships: the nuisances are training-time
        # scaffolding and never needed to serve predictions.
        return {
            "format": DRL_FORMAT,
            "propensity": self.propensity,
            "seed": self.seed,
            "second_stage": self.second_stage.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DrlModel":
        if payload.get("format") != DRL_FORMAT:
            raise ValidationError(f"unsupported model format: {payload.get('format')!r}")
        return cls(
            second_stage=regressor_from_dict(payload["second_stage"]),
            propensity=float(payload["propensity"]),
            seed=int(payload["seed"]),
        )


def fit_drl(
    dataset: RctDataset,
    outcome: str,
    nuisance_config,
    cate_config,
    seed: int,
    propensity_override: float | None = None,
    nuisance_outcome: str | None = None,
) -> DrlModel:
    """Run the full two-stage pipeline and return the standalone effect model.

    ``propensity_override`` plugs a deliberately offset propensity into the
    pseudo-outcome (the dataset's own value is used by default);
    ``nuisance_outcome`` optionally trains the outcome regressors against a
    different (e.g. corrupted) label column while the residual term keeps
    the real ``outcome`` labels. Pseudo-outcomes from both folds are pooled
    into a single second-stage fit.
    """
    p = dataset.propensity if propensity_override is None else propensity_override
    p = _check_propensity(p)
    plan = make_crossfit_plan(dataset.n, seed)
    nuisances = fit_nuisance(dataset, nuisance_outcome or outcome, plan, nuisance_config)
    pseudo = compute_pseudo_outcomes(dataset, outcome, nuisances, p)
    second_stage = fit_regressor(cate_config, dataset.features, pseudo.values)
    return DrlModel(second_stage=second_stage, propensity=p, seed=seed)


def save_drl(model: DrlModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_drl(path) -> DrlModel:
    return DrlModel.from_dict(json.loads(Path(path).read_text()))
