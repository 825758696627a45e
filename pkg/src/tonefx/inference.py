"""Confounder vectors and nuisance models for treatment and outcome.

Two confounder variants are supported per triple.  The full variant
concatenates the topic-model embeddings of p1 and p2 under their debate
topic's model with p1's category vectors for all three category types,
so its length is 2k plus the total category count.  The topics-only
variant is a one-hot encoding of the debate topic and serves as the weak
baseline adjustment set.

The propensity model is an L2-penalized logistic regression fit by
damped Newton iteration on the mean log-loss; it stops when the gradient
norm falls below tolerance, so refits are deterministic.  Outcome models
are per-arm linear least squares (optionally ridge-regularized when the
design is small or collinear).  Features are standardized with training
statistics stored on the model, which keeps prediction consistent and
the optimization well conditioned.  Cross-validation reports fold-wise
held-out RMSE per arm and propensity F1 with seeded fold assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .corpus import Triple
from .lexicon import CategoryLexicon, CategoryType, CategoryTypeGrouping, vectorize_post
from .topics import LdaModel, Tokenizer, default_tokenizer, infer_theta_batch

logger = logging.getLogger(__name__)

DEFAULT_REGULARIZATION = 1e-4
DEFAULT_CLIP_EPSILON = 0.01


class InferenceError(ValueError):
    """Invalid input to confounder construction or model fitting."""


class ConfounderVariant(str, Enum):
    FULL = "full"
    DEBATE_TOPICS_ONLY = "debate_topics_only"


@dataclass(eq=False)
class Confounder:
    """Feature vector of one triple under one adjustment variant."""

    triple_id: str
    variant: ConfounderVariant
    features: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.shape != (len(self.feature_names),):
            raise InferenceError(
                f"triple {self.triple_id!r}: {self.features.shape[0]} features "
                f"but {len(self.feature_names)} names"
            )


def _count_row(tokens: Sequence[str], index: Mapping[str, int], n_terms: int) -> np.ndarray:
    row = np.zeros(n_terms, dtype=float)
    for token in tokens:
        col = index.get(token)
        if col is not None:
            row[col] += 1.0
    return row


def _full_feature_names(k: int, grouping: CategoryTypeGrouping) -> tuple[str, ...]:
    names = [f"p1_theta_{i}" for i in range(k)]
    names += [f"p2_theta_{i}" for i in range(k)]
    for ctype in CategoryType:
        names += [f"p1_{ctype.value}:{cat}" for cat in grouping.categories(ctype)]
    return tuple(names)


def build_confounder(
    triple: Triple,
    variant: ConfounderVariant,
    lda_models: Mapping[str, LdaModel],
    lexicon: CategoryLexicon,
    grouping: CategoryTypeGrouping,
    debate_topics: Sequence[str] | None = None,
    tokenizer: Tokenizer | None = None,
) -> Confounder:
    """Assemble the confounder vector for a single triple.

    ``debate_topics`` fixes the one-hot component order for the
    topics-only variant and defaults to the sorted model keys.
    """
    variant = ConfounderVariant(variant)
    if debate_topics is None:
        debate_topics = sorted(lda_models)
    if variant is ConfounderVariant.DEBATE_TOPICS_ONLY:
        if triple.debate_topic not in debate_topics:
            raise InferenceError(
                f"triple {triple.id!r}: unknown debate topic {triple.debate_topic!r}"
            )
        features = np.zeros(len(debate_topics))
        features[list(debate_topics).index(triple.debate_topic)] = 1.0
        names = tuple(f"debate_topic={topic}" for topic in debate_topics)
        return Confounder(triple.id, variant, features, names)

    model = lda_models.get(triple.debate_topic)
    if model is None:
        raise InferenceError(
            f"triple {triple.id!r}: no topic model for debate topic {triple.debate_topic!r}"
        )
    tok = tokenizer or default_tokenizer()
    index = model.vocabulary.index
    n_terms = len(model.vocabulary)
    counts = np.vstack(
        [
            _count_row(tok(triple.p1.text), index, n_terms),
            _count_row(tok(triple.p2.text), index, n_terms),
        ]
    )
    thetas = infer_theta_batch(model, counts)
    parts = [thetas[0], thetas[1]]
    for ctype in CategoryType:
        parts.append(vectorize_post(lexicon, grouping, ctype, triple.p1).values)
    features = np.concatenate(parts)
    return Confounder(triple.id, variant, features, _full_feature_names(model.k, grouping))


def build_confounder_matrix(
    triples: Sequence[Triple],
    variant: ConfounderVariant,
    lda_models: Mapping[str, LdaModel],
    lexicon: CategoryLexicon,
    grouping: CategoryTypeGrouping,
    debate_topics: Sequence[str] | None = None,
    tokenizer: Tokenizer | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    """Confounder rows for many triples, batching topic inference per debate topic.

    Row order follows the input triples.  Produces the same vectors as
    build_confounder called per triple.
    """
    variant = ConfounderVariant(variant)
    if not triples:
        raise InferenceError("no triples to build confounders for")
    if debate_topics is None:
        debate_topics = sorted(lda_models)
    if variant is ConfounderVariant.DEBATE_TOPICS_ONLY:
        names = tuple(f"debate_topic={topic}" for topic in debate_topics)
        topic_index = {topic: i for i, topic in enumerate(debate_topics)}
        features = np.zeros((len(triples), len(debate_topics)))
        for i, triple in enumerate(triples):
            pos = topic_index.get(triple.debate_topic)
            if pos is None:
                raise InferenceError(
                    f"triple {triple.id!r}: unknown debate topic {triple.debate_topic!r}"
                )
            features[i, pos] = 1.0
        return features, names

    tok = tokenizer or default_tokenizer()
    ks = {model.k for model in lda_models.values()}
    if len(ks) > 1:
        raise InferenceError(f"topic models disagree on k: {sorted(ks)}")

    # posts needing an embedding, grouped per debate topic for batched inference
    theta_by_post: dict[tuple[str, str], np.ndarray] = {}
    for topic in sorted({t.debate_topic for t in triples}):
        model = lda_models.get(topic)
        if model is None:
            raise InferenceError(f"no topic model for debate topic {topic!r}")
        post_ids: list[str] = []
        rows: list[np.ndarray] = []
        seen: set[str] = set()
        for triple in triples:
            if triple.debate_topic != topic:
                continue
            for post in (triple.p1, triple.p2):
                if post.id not in seen:
                    seen.add(post.id)
                    post_ids.append(post.id)
                    rows.append(
                        _count_row(tok(post.text), model.vocabulary.index, len(model.vocabulary))
                    )
        thetas = infer_theta_batch(model, np.vstack(rows))
        for post_id, theta in zip(post_ids, thetas):
            theta_by_post[(topic, post_id)] = theta

    k = next(iter(ks))
    names = _full_feature_names(k, grouping)
    matrix = np.empty((len(triples), len(names)))
    for i, triple in enumerate(triples):
        parts = [
            theta_by_post[(triple.debate_topic, triple.p1.id)],
            theta_by_post[(triple.debate_topic, triple.p2.id)],
        ]
        for ctype in CategoryType:
            parts.append(vectorize_post(lexicon, grouping, ctype, triple.p1).values)
        matrix[i] = np.concatenate(parts)
    return matrix, names


def as_feature_matrix(
    features: np.ndarray | Sequence[Confounder],
) -> tuple[np.ndarray, list[str]]:
    """Coerce confounders or a raw array to (matrix, row labels for errors)."""
    if isinstance(features, np.ndarray):
        matrix = np.atleast_2d(np.asarray(features, dtype=float))
        labels = [f"row {i}" for i in range(matrix.shape[0])]
    else:
        seq = list(features)
        if not seq:
            raise InferenceError("no feature rows given")
        if isinstance(seq[0], Confounder):
            matrix = np.vstack([c.features for c in seq])
            labels = [f"triple {c.triple_id!r}" for c in seq]
        else:
            matrix = np.atleast_2d(np.asarray(seq, dtype=float))
            labels = [f"row {i}" for i in range(matrix.shape[0])]
    bad = np.flatnonzero(~np.all(np.isfinite(matrix), axis=1))
    if bad.size:
        raise InferenceError(f"non-finite feature values in {labels[bad[0]]}")
    return matrix, labels


def _standardizer(matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    means = matrix.mean(axis=0)
    scales = matrix.std(axis=0)
    scales = np.where(scales < 1e-12, 1.0, scales)
    return means, scales


def _check_treatments(treatments: np.ndarray) -> np.ndarray:
    t = np.asarray(treatments)
    if t.ndim != 1 or not np.all(np.isin(t, (0, 1))):
        raise InferenceError("treatments must be a flat 0/1 vector")
    if t.min() == t.max():
        raise InferenceError("all units share one treatment arm; need both arms to fit")
    return t.astype(float)


def logistic_loss_and_grad(
    params: np.ndarray,
    features: np.ndarray,
    treatments: np.ndarray,
    regularization: float,
) -> tuple[float, np.ndarray]:
    """Mean logistic log-loss with an L2 penalty on the non-intercept weights.

    ``params`` packs the intercept first.  Returns (loss, gradient), the
    pair Newton iterates on and the pair finite-difference checks probe.
    """
    intercept, weights = params[0], params[1:]
    scores = intercept + features @ weights
    # log(1 + exp(-s)) for y=1 and log(1 + exp(s)) for y=0, stably
    loss = float(np.mean(np.logaddexp(0.0, scores) - treatments * scores))
    loss += 0.5 * regularization * float(weights @ weights)
    mu = expit(scores)
    diff = mu - treatments
    grad = np.concatenate(
        ([diff.mean()], features.T @ diff / len(treatments) + regularization * weights)
    )
    return loss, grad


@dataclass(eq=False)
class PropensityModel:
    """Logistic treatment model in standardized feature space."""

    weights: np.ndarray
    intercept: float
    regularization: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    iterations: int
    gradient_norm: float
    loss: float
    seed: int = 0
    feature_names: tuple[str, ...] = ()

    @property
    def coefficients(self) -> np.ndarray:
        """Weights in the original (unstandardized) feature space."""
        return self.weights / self.feature_scales

    @property
    def intercept_raw(self) -> float:
        return float(self.intercept - np.sum(self.weights * self.feature_means / self.feature_scales))


def fit_propensity(
    features: np.ndarray | Sequence[Confounder],
    treatments: np.ndarray | Sequence[int],
    regularization: float = DEFAULT_REGULARIZATION,
    max_iters: int = 100,
    tol: float = 1e-8,
    seed: int = 0,
    standardize: bool = True,
) -> PropensityModel:
    """Fit the treatment model by damped Newton iteration.

    Converges when the gradient norm drops below ``tol``.  The penalty
    keeps the Hessian positive definite, and a halving line search guards
    the occasional overshoot, so the fit is deterministic and never
    requires randomness (``seed`` is recorded for provenance only).
    """
    if not isinstance(features, np.ndarray):
        features = list(features)
    matrix, _ = as_feature_matrix(features)
    t = _check_treatments(np.asarray(treatments))
    if matrix.shape[0] != t.shape[0]:
        raise InferenceError(
            f"{matrix.shape[0]} feature rows but {t.shape[0]} treatments"
        )
    if regularization < 0:
        raise InferenceError("regularization must be nonnegative")

    if standardize:
        means, scales = _standardizer(matrix)
    else:
        means = np.zeros(matrix.shape[1])
        scales = np.ones(matrix.shape[1])
    design = (matrix - means) / scales

    n, d = design.shape
    params = np.zeros(d + 1)
    loss, grad = logistic_loss_and_grad(params, design, t, regularization)
    grad_norm = float(np.linalg.norm(grad))
    iterations = 0
    penalty_diag = np.concatenate(([0.0], np.full(d, regularization)))
    for iterations in range(1, max_iters + 1):
        if grad_norm < tol:
            iterations -= 1
            break
        mu = expit(params[0] + design @ params[1:])
        s = mu * (1.0 - mu)
        augmented = np.hstack([np.ones((n, 1)), design])
        hessian = (augmented * s[:, np.newaxis]).T @ augmented / n + np.diag(penalty_diag)
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hessian, grad, rcond=None)[0]
        # halve until the Armijo condition holds; protects near-separable fits
        scale = 1.0
        for _ in range(60):
            candidate = params - scale * step
            new_loss, new_grad = logistic_loss_and_grad(candidate, design, t, regularization)
            if new_loss <= loss - 1e-4 * scale * float(grad @ step):
                break
            scale *= 0.5
        params = candidate
        loss, grad = new_loss, new_grad
        grad_norm = float(np.linalg.norm(grad))
    if grad_norm >= tol:
        logger.warning(
            "propensity fit stopped at iteration cap %d with gradient norm %.2e",
            max_iters, grad_norm,
        )
    names: tuple[str, ...] = ()
    if not isinstance(features, np.ndarray):
        first = next(iter(features), None)
        if isinstance(first, Confounder):
            names = first.feature_names
    return PropensityModel(
        weights=params[1:],
        intercept=float(params[0]),
        regularization=regularization,
        feature_means=means,
        feature_scales=scales,
        iterations=iterations,
        gradient_norm=grad_norm,
        loss=loss,
        seed=seed,
        feature_names=names,
    )


def predict_propensity(
    model: PropensityModel,
    features: np.ndarray | Confounder | Sequence[Confounder],
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
) -> np.ndarray | float:
    """Treated probability, clipped into [clip_epsilon, 1 - clip_epsilon].

    A single confounder or 1-d row yields a float; a matrix or sequence
    yields an array.
    """
    if not 0.0 <= clip_epsilon < 0.5:
        raise InferenceError(f"clip_epsilon must lie in [0, 0.5), got {clip_epsilon!r}")
    single = isinstance(features, Confounder) or (
        isinstance(features, np.ndarray) and features.ndim == 1
    )
    if isinstance(features, Confounder):
        matrix = features.features[np.newaxis, :]
    else:
        matrix, _ = as_feature_matrix(features)
    design = (matrix - model.feature_means) / model.feature_scales
    raw = expit(model.intercept + design @ model.weights)
    clipped = np.clip(raw, clip_epsilon, 1.0 - clip_epsilon)
    return float(clipped[0]) if single else clipped


@dataclass(eq=False)
class OutcomeModel:
    """Per-arm linear outcome model in standardized feature space."""

    arm: int
    weights: np.ndarray
    intercept: float
    feature_means: np.ndarray
    feature_scales: np.ndarray
    ridge: float
    n_train: int

    @property
    def coefficients(self) -> np.ndarray:
        """Weights in the original (unstandardized) feature space."""
        return self.weights / self.feature_scales

    @property
    def intercept_raw(self) -> float:
        return float(self.intercept - np.sum(self.weights * self.feature_means / self.feature_scales))


def predict_outcome(model: OutcomeModel, features: np.ndarray | Sequence[Confounder]) -> np.ndarray:
    matrix, _ = as_feature_matrix(features)
    design = (matrix - model.feature_means) / model.feature_scales
    return model.intercept + design @ model.weights


def _fit_arm(
    matrix: np.ndarray, outcomes: np.ndarray, arm: int, ridge: float, standardize: bool
) -> OutcomeModel:
    if standardize:
        means, scales = _standardizer(matrix)
    else:
        means = np.zeros(matrix.shape[1])
        scales = np.ones(matrix.shape[1])
    design = np.hstack([np.ones((matrix.shape[0], 1)), (matrix - means) / scales])
    n, p = design.shape
    if ridge > 0:
        gram = design.T @ design + ridge * np.diag(np.concatenate(([0.0], np.ones(p - 1))))
        solution = np.linalg.solve(gram, design.T @ outcomes)
    else:
        solution, _, rank, _ = np.linalg.lstsq(design, outcomes, rcond=None)
        if rank < p:
            raise InferenceError(
                f"outcome design for arm {arm} is rank deficient "
                f"({n} units, rank {rank} of {p}); pass ridge > 0 to regularize"
            )
    return OutcomeModel(
        arm=arm,
        weights=solution[1:],
        intercept=float(solution[0]),
        feature_means=means,
        feature_scales=scales,
        ridge=ridge,
        n_train=n,
    )


def fit_outcome_models(
    features: np.ndarray | Sequence[Confounder],
    treatments: np.ndarray | Sequence[int],
    outcomes: np.ndarray | Sequence[float],
    ridge: float = 0.0,
    standardize: bool = True,
) -> tuple[OutcomeModel, OutcomeModel]:
    """Fit Q(Z, 0) and Q(Z, 1) by per-arm least squares.

    With ridge == 0 the solution comes from the normal equations via
    lstsq and leaves residuals orthogonal to the design; a rank-deficient
    arm raises with a suggestion to pass ridge > 0 instead of silently
    picking one of many solutions.  Returns (arm 0 model, arm 1 model).
    """
    matrix, _ = as_feature_matrix(features)
    t = _check_treatments(np.asarray(treatments))
    y = np.asarray(outcomes, dtype=float)
    if y.shape != t.shape or matrix.shape[0] != t.shape[0]:
        raise InferenceError("features, treatments and outcomes must align")
    if not np.all(np.isfinite(y)):
        raise InferenceError("outcomes must be finite")
    if ridge < 0:
        raise InferenceError("ridge must be nonnegative")
    models = []
    for arm in (0, 1):
        mask = t == arm
        models.append(_fit_arm(matrix[mask], y[mask], arm, ridge, standardize))
    return models[0], models[1]


def f1_score(
    truth: np.ndarray, predictions: np.ndarray, average: str = "binary"
) -> float:
    """F1 of the positive class, or the unweighted two-class mean ("macro")."""

    def binary(t: np.ndarray, p: np.ndarray) -> float:
        tp = float(np.sum((t == 1) & (p == 1)))
        fp = float(np.sum((t == 0) & (p == 1)))
        fn = float(np.sum((t == 1) & (p == 0)))
        denominator = 2 * tp + fp + fn
        return 2 * tp / denominator if denominator > 0 else 0.0

    truth = np.asarray(truth)
    predictions = np.asarray(predictions)
    if average == "binary":
        return binary(truth, predictions)
    if average == "macro":
        return 0.5 * (binary(truth, predictions) + binary(1 - truth, 1 - predictions))
    raise InferenceError(f"unknown F1 average {average!r}")


@dataclass(eq=False)
class CvReport:
    """Cross-validated nuisance diagnostics for one reply type and variant."""

    fold_count: int
    rmse_q1: tuple[float, ...]
    rmse_q0: tuple[float, ...]
    f1: tuple[float, ...]
    skipped_folds: tuple[str, ...] = ()
    reply_type: str | None = None
    variant: str | None = None
    category_type: str | None = None

    @property
    def mean_rmse_q1(self) -> float:
        return float(np.mean(self.rmse_q1))

    @property
    def mean_rmse_q0(self) -> float:
        return float(np.mean(self.rmse_q0))

    @property
    def mean_f1(self) -> float:
        return float(np.mean(self.f1))


def cross_validate(
    features: np.ndarray | Sequence[Confounder],
    treatments: np.ndarray | Sequence[int],
    outcomes: np.ndarray | Sequence[float],
    folds: int = 5,
    seed: int = 0,
    regularization: float = DEFAULT_REGULARIZATION,
    ridge: float = 0.0,
    clip_epsilon: float = DEFAULT_CLIP_EPSILON,
    f1_average: str = "binary",
    reply_type: str | None = None,
    variant: str | None = None,
    category_type: str | None = None,
) -> CvReport:
    """Seeded k-fold diagnostics for both nuisance models.

    Folds are a random partition from the seed.  Per fold, the propensity
    model's F1 (threshold 0.5) and each arm's held-out RMSE are recorded.
    A fold whose training or test split lacks an arm is skipped with a
    reason; if every fold is skipped, the split is unusable and that is
    an error.
    """
    matrix, _ = as_feature_matrix(features)
    t = np.asarray(treatments)
    y = np.asarray(outcomes, dtype=float)
    n = matrix.shape[0]
    if not isinstance(folds, int) or folds < 2:
        raise InferenceError(f"folds must be an integer >= 2, got {folds!r}")
    if folds > n:
        raise InferenceError(f"cannot split {n} units into {folds} folds")

    rng = np.random.default_rng(seed)
    assignment = np.array_split(rng.permutation(n), folds)

    rmse_q1: list[float] = []
    rmse_q0: list[float] = []
    f1s: list[float] = []
    skipped: list[str] = []
    for fold_index, test_idx in enumerate(assignment):
        train_idx = np.setdiff1d(np.arange(n), test_idx)
        t_train, t_test = t[train_idx], t[test_idx]
        if len(np.unique(t_train)) < 2:
            skipped.append(f"fold {fold_index}: training split lacks a treatment arm")
            continue
        if len(np.unique(t_test)) < 2:
            skipped.append(f"fold {fold_index}: test split lacks a treatment arm")
            continue
        propensity = fit_propensity(
            matrix[train_idx], t_train, regularization=regularization, seed=seed
        )
        scores = predict_propensity(propensity, matrix[test_idx], clip_epsilon=clip_epsilon)
        f1s.append(f1_score(t_test, (scores >= 0.5).astype(int), average=f1_average))
        model0, model1 = fit_outcome_models(
            matrix[train_idx], t_train, y[train_idx], ridge=ridge
        )
        for arm, model, sink in ((0, model0, rmse_q0), (1, model1, rmse_q1)):
            mask = t_test == arm
            predicted = predict_outcome(model, matrix[test_idx][mask])
            sink.append(float(np.sqrt(np.mean((y[test_idx][mask] - predicted) ** 2))))
    if not f1s:
        raise InferenceError(
            "every fold was skipped: " + "; ".join(skipped) if skipped else "no folds ran"
        )
    for message in skipped:
        logger.warning("%s", message)
    return CvReport(
        fold_count=len(f1s),
        rmse_q1=tuple(rmse_q1),
        rmse_q0=tuple(rmse_q0),
        f1=tuple(f1s),
        skipped_folds=tuple(skipped),
        reply_type=reply_type,
        variant=variant,
        category_type=category_type,
    )
