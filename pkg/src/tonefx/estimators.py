"""Average treatment effect estimators and bootstrap standard errors.

All estimators consume an EstimationInput bundling treatments, outcomes
and fitted nuisance values (treated probabilities and per-arm outcome
predictions) for one analysis cell.  Four estimators are provided:

* unadjusted: difference of observed arm means, no adjustment;
* q: mean difference of outcome-model predictions under both arms;
* ipw: inverse-propensity weighting of observed outcomes;
* aipw: the doubly robust combination of the two nuisances, either in
  plain form or with the residual terms normalized by the realized
  weight mass in each arm ("stabilized", the default).  Stabilization
  makes the estimate invariant to shifting all outcomes by a constant
  when the outcome model is held fixed, which the plain form is not.

Standard errors come from a nonparametric bootstrap over units.  Each
replicate draws its own generator from (seed, replicate index), so any
replicate can be reproduced in isolation and results do not depend on
evaluation order.  With refit enabled the nuisance models are refit on
every resample, propagating their variability into the interval.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .inference import (
    DEFAULT_CLIP_EPSILON,
    DEFAULT_REGULARIZATION,
    fit_outcome_models,
    fit_propensity,
    predict_outcome,
    predict_propensity,
)

logger = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP_REPLICATES = 1000
Z_CRITICAL_95 = 1.96


class EstimationError(ValueError):
    """Invalid input to an effect estimator."""


class Estimator(str, Enum):
    UNADJUSTED = "unadjusted"
    Q = "q"
    IPW = "ipw"
    AIPW = "aipw"


class AipwVariant(str, Enum):
    PLAIN = "plain"
    STABILIZED = "stabilized"


@dataclass(eq=False)
class EstimationInput:
    """One analysis cell: data plus fitted nuisance values per unit.

    ``features`` may be omitted when only precomputed nuisances are
    needed; bootstrap refitting requires it.
    """

    treatments: np.ndarray
    outcomes: np.ndarray
    propensity: np.ndarray
    q0: np.ndarray
    q1: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.treatments = np.asarray(self.treatments)
        if self.treatments.ndim != 1 or not np.all(np.isin(self.treatments, (0, 1))):
            raise EstimationError("treatments must be a flat 0/1 vector")
        n = self.treatments.shape[0]
        if self.treatments.min() == self.treatments.max():
            raise EstimationError("both treatment arms must be present")
        self.treatments = self.treatments.astype(float)
        for name in ("outcomes", "propensity", "q0", "q1"):
            value = np.asarray(getattr(self, name), dtype=float)
            if value.shape != (n,):
                raise EstimationError(f"{name} must have shape ({n},), got {value.shape}")
            if not np.all(np.isfinite(value)):
                raise EstimationError(f"{name} contains non-finite values")
            setattr(self, name, value)
        if np.any(self.propensity <= 0.0) or np.any(self.propensity >= 1.0):
            raise EstimationError("propensity values must lie strictly inside (0, 1)")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=float)
            if self.features.ndim != 2 or self.features.shape[0] != n:
                raise EstimationError(
                    f"features must have {n} rows, got shape {self.features.shape}"
                )
            if not np.all(np.isfinite(self.features)):
                raise EstimationError("features contain non-finite values")

    @property
    def n(self) -> int:
        return self.treatments.shape[0]


def build_estimation_input(
    features: np.ndarray,
    treatments: np.ndarray | Sequence[int],
    outcomes: np.ndarray | Sequence[float],
    regularization: float = DEFAULT_REGULARIZATION,
    ridge: float = 0.0,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
    seed: int = 0,
) -> EstimationInput:
    """Fit both nuisance models on the full sample and bundle their values."""
    features = np.asarray(features, dtype=float)
    propensity_model = fit_propensity(
        features, treatments, regularization=regularization, seed=seed
    )
    scores = predict_propensity(propensity_model, features, clip_epsilon=clip_epsilon)
    model0, model1 = fit_outcome_models(features, treatments, outcomes, ridge=ridge)
    return EstimationInput(
        treatments=np.asarray(treatments),
        outcomes=np.asarray(outcomes, dtype=float),
        propensity=np.atleast_1d(scores),
        q0=predict_outcome(model0, features),
        q1=predict_outcome(model1, features),
        features=features,
    )


def ate_unadjusted(data: EstimationInput) -> float:
    """Difference of observed arm means."""
    treated = data.treatments == 1
    return float(data.outcomes[treated].mean() - data.outcomes[~treated].mean())


def ate_q(data: EstimationInput) -> float:
    """Mean difference of the outcome model's two potential predictions."""
    return float(np.mean(data.q1 - data.q0))


def ate_ipw(data: EstimationInput) -> float:
    """Inverse-propensity weighted difference of observed outcomes."""
    t, y, p = data.treatments, data.outcomes, data.propensity
    return float(np.mean(t * y / p - (1.0 - t) * y / (1.0 - p)))


def ate_aipw(data: EstimationInput, variant: AipwVariant = AipwVariant.STABILIZED) -> float:
    """Doubly robust estimate combining both nuisances.

    The plain form averages the weighted residual corrections directly.
    The stabilized form divides each arm's weighted residual sum by that
    arm's realized weight mass, so the correction terms use weights that
    sum to one within each arm.
    """
    variant = AipwVariant(variant)
    t, y, p = data.treatments, data.outcomes, data.propensity
    q0, q1 = data.q0, data.q1
    residual1 = t * (y - q1) / p
    residual0 = (1.0 - t) * (y - q0) / (1.0 - p)
    if variant is AipwVariant.PLAIN:
        return float(np.mean(residual1 - residual0 + q1 - q0))
    weight1 = float(np.sum(t / p))
    weight0 = float(np.sum((1.0 - t) / (1.0 - p)))
    correction = float(np.sum(residual1)) / weight1 - float(np.sum(residual0)) / weight0
    return float(np.mean(q1 - q0)) + correction


def point_estimate(
    data: EstimationInput,
    estimator: Estimator,
    aipw_variant: AipwVariant = AipwVariant.STABILIZED,
) -> float:
    estimator = Estimator(estimator)
    if estimator is Estimator.UNADJUSTED:
        return ate_unadjusted(data)
    if estimator is Estimator.Q:
        return ate_q(data)
    if estimator is Estimator.IPW:
        return ate_ipw(data)
    return ate_aipw(data, variant=aipw_variant)


@dataclass(eq=False)
class BootstrapResult:
    """Replicate estimates and the standard error they imply."""

    standard_error: float
    estimates: np.ndarray
    replicates_requested: int
    skipped: int

    @property
    def replicates_used(self) -> int:
        return self.replicates_requested - self.skipped


def _resample_indices(
    rng: np.random.Generator, treatments: np.ndarray, max_redraws: int
) -> np.ndarray | None:
    """Draw a with-replacement resample containing both arms, or None."""
    n = treatments.shape[0]
    for _ in range(max_redraws):
        idx = rng.integers(0, n, size=n)
        drawn = treatments[idx]
        if drawn.min() != drawn.max():
            return idx
    return None


def bootstrap_se(
    data: EstimationInput,
    estimator: Estimator,
    replicates: int = DEFAULT_BOOTSTRAP_REPLICATES,
    seed: int = 0,
    refit: bool = True,
    aipw_variant: AipwVariant = AipwVariant.STABILIZED,
    regularization: float = DEFAULT_REGULARIZATION,
    ridge: float = 0.0,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
    max_redraws: int = 10,
) -> BootstrapResult:
    """Nonparametric bootstrap standard error of one estimator.

    Replicate ``i`` draws its resample from ``default_rng([seed, i])``.
    A resample that lands entirely in one arm is redrawn up to
    ``max_redraws`` times and then skipped (skips are counted and
    logged).  With ``refit`` the propensity and outcome models are refit
    on each resample; otherwise the stored per-unit nuisance values are
    reused, which is cheaper but ignores nuisance variability.
    """
    estimator = Estimator(estimator)
    if replicates < 2:
        raise EstimationError(f"need at least 2 bootstrap replicates, got {replicates}")
    needs_nuisances = estimator is not Estimator.UNADJUSTED
    do_refit = refit and needs_nuisances
    if do_refit and data.features is None:
        raise EstimationError(
            "bootstrap refitting needs the feature matrix; "
            "provide features or pass refit=False"
        )

    estimates: list[float] = []
    skipped = 0
    for i in range(replicates):
        rng = np.random.default_rng([seed, i])
        idx = _resample_indices(rng, data.treatments, max_redraws)
        if idx is None:
            skipped += 1
            continue
        t, y = data.treatments[idx], data.outcomes[idx]
        if do_refit:
            z = data.features[idx]
            propensity_model = fit_propensity(
                z, t.astype(int), regularization=regularization, seed=seed
            )
            p = np.atleast_1d(
                predict_propensity(propensity_model, z, clip_epsilon=clip_epsilon)
            )
            model0, model1 = fit_outcome_models(z, t.astype(int), y, ridge=ridge)
            q0, q1 = predict_outcome(model0, z), predict_outcome(model1, z)
        else:
            p, q0, q1 = data.propensity[idx], data.q0[idx], data.q1[idx]
        replicate = EstimationInput(
            treatments=t.astype(int), outcomes=y, propensity=p, q0=q0, q1=q1
        )
        estimates.append(point_estimate(replicate, estimator, aipw_variant=aipw_variant))
    if skipped:
        logger.warning(
            "bootstrap for %s skipped %d of %d replicates (single-arm resamples)",
            estimator.value, skipped, replicates,
        )
    if len(estimates) < 2:
        raise EstimationError(
            f"only {len(estimates)} of {replicates} bootstrap replicates usable"
        )
    values = np.array(estimates)
    return BootstrapResult(
        standard_error=float(values.std(ddof=1)),
        estimates=values,
        replicates_requested=replicates,
        skipped=skipped,
    )


@dataclass(frozen=True)
class AteEstimate:
    """One estimator's result for one analysis cell."""

    estimator: Estimator
    psi: float
    standard_error: float | None
    n: int
    reply_type: str | None = None
    category_type: str | None = None
    aipw_variant: AipwVariant | None = None
    confounder_variant: str | None = None

    @property
    def significant(self) -> bool | None:
        """Whether zero lies outside the 95 percent normal interval."""
        if self.standard_error is None:
            return None
        return bool(abs(self.psi) > Z_CRITICAL_95 * self.standard_error)


def estimate_all(
    data: EstimationInput,
    estimators: Sequence[Estimator] = tuple(Estimator),
    aipw_variant: AipwVariant = AipwVariant.STABILIZED,
    bootstrap_replicates: int = DEFAULT_BOOTSTRAP_REPLICATES,
    seed: int = 0,
    refit: bool = True,
    regularization: float = DEFAULT_REGULARIZATION,
    ridge: float = 0.0,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
    reply_type: str | None = None,
    category_type: str | None = None,
    confounder_variant: str | None = None,
) -> list[AteEstimate]:
    """Point estimates with bootstrap standard errors for the requested estimators.

    Pass ``bootstrap_replicates=0`` to skip standard errors entirely.
    """
    results = []
    for estimator in estimators:
        estimator = Estimator(estimator)
        psi = point_estimate(data, estimator, aipw_variant=aipw_variant)
        se: float | None = None
        if bootstrap_replicates:
            se = bootstrap_se(
                data,
                estimator,
                replicates=bootstrap_replicates,
                seed=seed,
                refit=refit,
                aipw_variant=aipw_variant,
                regularization=regularization,
                ridge=ridge,
                clip_epsilon=clip_epsilon,
            ).standard_error
        results.append(
            AteEstimate(
                estimator=estimator,
                psi=psi,
                standard_error=se,
                n=data.n,
                reply_type=reply_type,
                category_type=category_type,
                aipw_variant=aipw_variant if estimator is Estimator.AIPW else None,
                confounder_variant=confounder_variant,
            )
        )
    return results
