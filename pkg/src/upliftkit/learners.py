"""Baseline effect estimators built on the shared regressors.

Three classic constructions around outcome modeling:

* S: one regressor on ``[X, W]``; effect = prediction gap between the two
  treatment settings.
* T: separate per-arm regressors; effect = their prediction difference.
* X: T-style first stage, imputed per-row effects, per-arm second-stage
  regressors blended with the known trial propensity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import RctDataset
from .errors import ValidationError
from .regress import Regressor, fit_regressor


@dataclass(frozen=True)
class SLearnerModel:
    kind = "s"
    model: Regressor
    input_dim: int

    def estimate_cate(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.input_dim)
        ones = np.ones((X.shape[0], 1))
        return self.model.predict(np.hstack([X, ones])) - self.model.predict(
            np.hstack([X, 0.0 * ones])
        )


@dataclass(frozen=True)
class TLearnerModel:
    kind = "t"
    model_treated: Regressor
    model_control: Regressor
    input_dim: int

    def estimate_cate(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.input_dim)
        return self.model_treated.predict(X) - self.model_control.predict(X)


@dataclass(frozen=True)
class XLearnerModel:
    kind = "x"
    stage1: TLearnerModel
    effect_treated: Regressor
    effect_control: Regressor
    propensity: float
    input_dim: int

    def estimate_cate(self, X: np.ndarray) -> np.ndarray:
        X = _check_features(X, self.input_dim)
        p = self.propensity
        return (1.0 - p) * self.effect_treated.predict(X) + p * self.effect_control.predict(X)


@dataclass(frozen=True)
class CatePair:
    """Effect models for the two objectives of a dual-outcome dataset."""

    revenue_model: object
    engagement_model: object

    def __post_init__(self):
        if self.revenue_model.input_dim != self.engagement_model.input_dim:
            raise ValidationError("paired models must accept the same feature dimension")


def fit_s_learner(dataset: RctDataset, outcome: str, config) -> SLearnerModel:
    """Single regressor on ``[X, W]``; effect is Yhat([x,1]) - Yhat([x,0])."""
    y = dataset.outcome(outcome)
    Xw = np.hstack([dataset.features, dataset.treatment[:, None].astype(float)])
    return SLearnerModel(model=fit_regressor(config, Xw, y), input_dim=dataset.d)


def fit_t_learner(dataset: RctDataset, outcome: str, config) -> TLearnerModel:
    """Per-arm regressors; effect is their prediction difference."""
    y = dataset.outcome(outcome)
    treated = dataset.treatment == 1
    if not treated.any() or treated.all():
        raise ValidationError("both treatment arms need at least one row")
    return TLearnerModel(
        model_treated=fit_regressor(config, dataset.features[treated], y[treated]),
        model_control=fit_regressor(config, dataset.features[~treated], y[~treated]),
        input_dim=dataset.d,
    )


def fit_x_learner(dataset: RctDataset, outcome: str, config) -> XLearnerModel:
    """Two-stage construction with propensity-weighted blending.

    Stage one is the T-learner. Imputed per-row effects are
    ``D1 = Y - Yhat0(x)`` on treated rows and ``D0 = Yhat1(x) - Y`` on
    control rows; stage two regresses each on the features. The combined
    estimate is ``(1 - p) * tau1(x) + p * tau0(x)`` with ``p`` the known
    trial propensity.
    """
    stage1 = fit_t_learner(dataset, outcome, config)
    y = dataset.outcome(outcome)
    treated = dataset.treatment == 1
    X_t, X_c = dataset.features[treated], dataset.features[~treated]
    d1 = y[treated] - stage1.model_control.predict(X_t)
    d0 = stage1.model_treated.predict(X_c) - y[~treated]
    return XLearnerModel(
        stage1=stage1,
        effect_treated=fit_regressor(config, X_t, d1),
        effect_control=fit_regressor(config, X_c, d0),
        propensity=dataset.propensity,
        input_dim=dataset.d,
    )


def estimate_cate(model, X: np.ndarray) -> np.ndarray:
    """Per-row effect estimates; rejects feature matrices of the wrong width."""
    return model.estimate_cate(np.asarray(X, dtype=float))


def _check_features(X, input_dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ValidationError(
            f"expected an (m, {input_dim}) feature matrix, got shape {np.shape(X)}"
        )
    return X
