"""Acceptance gate: nine end-to-end checks with pinned tolerances.

Each test prints a single PASS/FAIL line naming its criterion so a log
scan shows the whole gate at a glance.  Numerical tolerances and seed
budgets are frozen here on purpose; loosening them needs a recorded
reason, not a quiet edit.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import sparse
from scipy.optimize import linear_sum_assignment

from tonefx.corpus import ReplyType
from tonefx.estimators import (
    AipwVariant,
    EstimationInput,
    Estimator,
    ate_aipw,
    ate_ipw,
    ate_q,
    ate_unadjusted,
    bootstrap_se,
    build_estimation_input,
)
from tonefx.harness.config import PipelineConfig
from tonefx.harness.pipeline import run_pipeline
from tonefx.harness.report import render_report
from tonefx.harness.synthetic import CorpusWorld, TabularWorld, generate_corpus, generate_tabular
from tonefx.inference import (
    fit_outcome_models,
    fit_propensity,
    logistic_loss_and_grad,
    predict_outcome,
    predict_propensity,
)
from tonefx.lexicon import CategoryType
from tonefx.topics import DocumentTermMatrix, Vocabulary, fit_lda

from conftest import MINICORPUS

GOLDEN = Path(__file__).parent / "data" / "golden_report.txt"


def _verdict(ok: bool, criterion: int, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. On discrete confounders with per-stratum empirical nuisances, every
#    adjusted estimator equals the brute-force stratified contrast.


def test_criterion_1_saturated_equivalence():
    rng = np.random.default_rng(11)
    n = 200
    strata = rng.choice(4, size=n, p=[0.4, 0.3, 0.2, 0.1])
    arm_prob = np.array([0.2, 0.4, 0.6, 0.8])[strata]
    treatments = (rng.random(n) < arm_prob).astype(int)
    outcomes = strata * 1.0 + treatments * (1.0 + strata) + rng.normal(size=n)

    propensity = np.empty(n)
    q0 = np.empty(n)
    q1 = np.empty(n)
    stratified = 0.0
    for z in range(4):
        members = strata == z
        assert treatments[members].min() < treatments[members].max()
        treated = members & (treatments == 1)
        control = members & (treatments == 0)
        propensity[members] = treated.sum() / members.sum()
        q0[members] = outcomes[control].mean()
        q1[members] = outcomes[treated].mean()
        stratified += (members.mean()) * (
            outcomes[treated].mean() - outcomes[control].mean()
        )

    data = EstimationInput(
        treatments=treatments, outcomes=outcomes,
        propensity=propensity, q0=q0, q1=q1,
    )
    values = [ate_q(data), ate_ipw(data)]
    values += [ate_aipw(data, variant) for variant in AipwVariant]
    worst = max(abs(v - stratified) for v in values)
    _verdict(
        worst < 1e-10, 1,
        f"all adjusted estimators equal the stratified contrast "
        f"{stratified:.4f} on 4-stratum data with empirical nuisances "
        f"(max deviation {worst:.2e}, tolerance 1e-10)",
    )


# ---------------------------------------------------------------------------
# 2. Algebraic reductions: AIPW with zeroed outcome models is IPW, AIPW with
#    perfect outcome models is the Q estimator, and IPW at a constant
#    propensity equal to the treated share is the unadjusted difference.


def test_criterion_2_reduction_identities():
    rng = np.random.default_rng(7)
    n = 500
    features = rng.normal(size=(n, 2))
    treatments = rng.binomial(1, 1.0 / (1.0 + np.exp(-features[:, 0])))
    outcomes = treatments + features.sum(axis=1) + rng.normal(size=n)
    propensity = np.clip(1.0 / (1.0 + np.exp(-features[:, 0])), 0.01, 0.99)
    data = EstimationInput(
        treatments=treatments, outcomes=outcomes, propensity=propensity,
        q0=features[:, 0], q1=1.0 + features[:, 0],
    )

    zeroed = dataclasses.replace(data, q0=np.zeros(n), q1=np.zeros(n))
    gap_ipw = abs(ate_aipw(zeroed, AipwVariant.PLAIN) - ate_ipw(zeroed))

    exact = dataclasses.replace(data, q0=outcomes.copy(), q1=outcomes.copy())
    gap_q = max(
        abs(ate_aipw(exact, variant) - ate_q(exact)) for variant in AipwVariant
    )

    flat = dataclasses.replace(data, propensity=np.full(n, treatments.mean()))
    gap_un = abs(ate_ipw(flat) - ate_unadjusted(flat))

    worst = max(gap_ipw, gap_q, gap_un)
    _verdict(
        worst < 1e-12, 2,
        f"reduction identities hold (max gap {worst:.2e}, tolerance 1e-12)",
    )


# ---------------------------------------------------------------------------
# 3. Confounded tabular world with true effect 1.5: the unadjusted contrast
#    is materially biased while every adjusted estimator recovers the truth
#    in at least 18 of 20 seeds at n=10,000.


def test_criterion_3_tabular_recovery():
    start = time.monotonic()
    world = TabularWorld()
    assert world.true_ate == 1.5

    big = generate_tabular(world, 1_000_000, seed=123)
    naive = EstimationInput(
        treatments=big.treatments, outcomes=big.outcomes,
        propensity=np.full(big.treatments.size, 0.5),
        q0=np.zeros(big.treatments.size), q1=np.zeros(big.treatments.size),
    )
    bias = abs(ate_unadjusted(naive) - world.true_ate)

    hits = {"q": 0, "ipw": 0, "aipw": 0}
    for s in range(20):
        sample = generate_tabular(world, 10_000, seed=1000 + s)
        data = build_estimation_input(sample.features, sample.treatments, sample.outcomes)
        for name, fn in (("q", ate_q), ("ipw", ate_ipw), ("aipw", ate_aipw)):
            hits[name] += abs(fn(data) - world.true_ate) <= 0.1

    elapsed = time.monotonic() - start
    ok = bias >= 0.3 and all(count >= 18 for count in hits.values()) and elapsed < 120
    _verdict(
        ok, 3,
        f"unadjusted bias {bias:.3f} (>=0.3) while adjusted estimators land "
        f"within 0.1 in {hits['q']}/{hits['ipw']}/{hits['aipw']} of 20 seeds "
        f"(q/ipw/aipw, >=18 each) in {elapsed:.0f}s (<120s)",
    )


# ---------------------------------------------------------------------------
# 4. Double robustness: with one nuisance deliberately starved of a
#    confounder, AIPW still recovers the truth while the singly robust
#    estimator relying on the starved model does not.


def test_criterion_4_double_robustness():
    start = time.monotonic()
    world = TabularWorld()
    leg_a = leg_b = q_off = ipw_off = 0
    for s in range(20):
        sample = generate_tabular(world, 10_000, seed=2000 + s)
        full = sample.features
        starved = sample.features[:, :1]
        t, y = sample.treatments, sample.outcomes

        # propensity right, outcome starved
        pm = fit_propensity(full, t)
        p = np.atleast_1d(predict_propensity(pm, full))
        m0, m1 = fit_outcome_models(starved, t, y)
        data = EstimationInput(
            treatments=t, outcomes=y, propensity=p,
            q0=predict_outcome(m0, starved), q1=predict_outcome(m1, starved),
        )
        leg_a += abs(ate_aipw(data) - 1.5) <= 0.15
        q_off += abs(ate_q(data) - 1.5) > 0.15

        # outcome right, propensity starved
        pm = fit_propensity(starved, t)
        p = np.atleast_1d(predict_propensity(pm, starved))
        m0, m1 = fit_outcome_models(full, t, y)
        data = EstimationInput(
            treatments=t, outcomes=y, propensity=p,
            q0=predict_outcome(m0, full), q1=predict_outcome(m1, full),
        )
        leg_b += abs(ate_aipw(data) - 1.5) <= 0.15
        ipw_off += abs(ate_ipw(data) - 1.5) > 0.15

    elapsed = time.monotonic() - start
    ok = min(leg_a, leg_b, q_off, ipw_off) >= 18 and elapsed < 180
    _verdict(
        ok, 4,
        f"AIPW within 0.15 in {leg_a}/20 and {leg_b}/20 seeds per leg while the "
        f"starved singly robust estimator misses in {q_off}/20 and {ipw_off}/20 "
        f"(>=18 each) in {elapsed:.0f}s (<180s)",
    )


# ---------------------------------------------------------------------------
# 5. The variational fit recovers planted topics: Hungarian-matched cosine
#    similarity of at least 0.9 per topic, with a nondecreasing bound.


def test_criterion_5_topic_recovery():
    start = time.monotonic()
    rng = np.random.default_rng(42)
    k, n_terms, n_docs, doc_len = 3, 50, 2000, 100
    true_beta = rng.dirichlet(np.full(n_terms, 0.08), size=k)
    theta = rng.dirichlet(np.full(k, 0.3), size=n_docs)
    rates = theta @ true_beta
    counts = np.vstack([rng.multinomial(doc_len, rates[d]) for d in range(n_docs)])
    dtm = DocumentTermMatrix(
        counts=sparse.csr_matrix(counts),
        doc_ids=tuple(str(i) for i in range(n_docs)),
        vocabulary=Vocabulary(
            terms=tuple(f"w{i:02d}" for i in range(n_terms)),
            document_frequency=np.full(n_terms, 0.5),
        ),
    )
    model = fit_lda(dtm, k=k, seed=0, max_iters=100)

    fitted = model.beta / np.linalg.norm(model.beta, axis=1, keepdims=True)
    planted = true_beta / np.linalg.norm(true_beta, axis=1, keepdims=True)
    similarity = fitted @ planted.T
    rows, cols = linear_sum_assignment(-similarity)
    matched = similarity[rows, cols]
    worst_drop = float(np.min(np.diff(np.array(model.elbo_trace))))

    elapsed = time.monotonic() - start
    ok = matched.min() >= 0.9 and worst_drop >= -1e-6 and elapsed < 120
    _verdict(
        ok, 5,
        f"planted topics recovered with matched cosines >= {matched.min():.3f} "
        f"(>=0.9) and monotone bound (worst step {worst_drop:.2e} >= -1e-6) "
        f"in {elapsed:.0f}s (<120s)",
    )


# ---------------------------------------------------------------------------
# 6. Synthetic text world end to end: adjusting for the full confounder set
#    beats adjusting for debate topics alone in at least 18 of 20 seeds.


def test_criterion_6_text_world_adjustment_wins(tmp_path):
    start = time.monotonic()
    world = CorpusWorld()
    wins = 0
    for seed in range(20):
        base = tmp_path / f"seed{seed}"
        truth = generate_corpus(world, 300, seed=seed, out_dir=base / "corpus")
        config = PipelineConfig(
            posts_path=str(base / "corpus" / "posts.jsonl"),
            annotations_path=str(base / "corpus" / "annotations.jsonl"),
            out_dir=str(base / "run"),
            seed=seed,
            k=world.n_topics,
            reply_types=(ReplyType.NASTY_NICE,),
            category_types=(CategoryType.POSITIVE_SENTIMENT,),
            estimators=(Estimator.AIPW,),
            bootstrap_replicates=0,
        )
        report = run_pipeline(config)
        psi = {e.confounder_variant: e.psi for e in report.estimates}
        target = truth.true_ate["positive_sentiment"]
        wins += abs(psi["full"] - target) < abs(psi["debate_topics_only"] - target)

    elapsed = time.monotonic() - start
    ok = wins >= 18 and elapsed < 600
    _verdict(
        ok, 6,
        f"full confounding beats debate-topics-only in {wins}/20 end-to-end "
        f"runs (>=18) in {elapsed:.0f}s (<600s)",
    )


# ---------------------------------------------------------------------------
# 7. Bootstrap standard errors agree with the analytic two-sample form for
#    the unadjusted estimator.


def test_criterion_7_bootstrap_se_calibration():
    start = time.monotonic()
    rng = np.random.default_rng(99)
    n = 2000
    treatments = rng.binomial(1, 0.5, size=n)
    outcomes = treatments * 0.4 + rng.normal(size=n)
    data = EstimationInput(
        treatments=treatments, outcomes=outcomes,
        propensity=np.full(n, 0.5), q0=np.zeros(n), q1=np.zeros(n),
    )
    result = bootstrap_se(data, Estimator.UNADJUSTED, replicates=1000, seed=0)
    y1 = outcomes[treatments == 1]
    y0 = outcomes[treatments == 0]
    analytic = float(np.sqrt(y1.var(ddof=1) / y1.size + y0.var(ddof=1) / y0.size))
    relative = abs(result.standard_error - analytic) / analytic

    elapsed = time.monotonic() - start
    ok = relative <= 0.15 and result.skipped == 0 and elapsed < 60
    _verdict(
        ok, 7,
        f"bootstrap SE {result.standard_error:.4f} vs analytic {analytic:.4f} "
        f"(relative error {relative:.4f} <= 0.15) in {elapsed:.0f}s (<60s)",
    )


# ---------------------------------------------------------------------------
# 8. Reporting determinism: two runs with one configuration produce byte
#    identical structured reports, and the table layout matches the
#    committed golden file.


def test_criterion_8_report_determinism(tmp_path):
    start = time.monotonic()
    config = PipelineConfig(
        posts_path=str(MINICORPUS / "posts.jsonl"),
        annotations_path=str(MINICORPUS / "annotations.jsonl"),
        out_dir=str(tmp_path), seed=3, k=4, lda_max_iters=40, folds=3,
        bootstrap_replicates=0,
        reply_types=(ReplyType.NASTY_NICE,),
        category_types=(CategoryType.LINGUISTIC_STYLE,),
    )
    first = render_report(run_pipeline(config))
    second = render_report(run_pipeline(config))

    from test_report import _sample_report

    golden_ok = render_report(_sample_report(), fmt="table") == GOLDEN.read_text()
    elapsed = time.monotonic() - start
    ok = first == second and golden_ok and elapsed < 60
    _verdict(
        ok, 8,
        f"repeat runs byte-identical ({len(first)} bytes) and table layout "
        f"matches the golden file in {elapsed:.0f}s (<60s)",
    )


# ---------------------------------------------------------------------------
# 9. Nuisance model internals: the analytic logistic gradient matches central
#    differences at 100 random points, and linear outcome residuals are
#    orthogonal to the design.


def test_criterion_9_nuisance_internals():
    rng = np.random.default_rng(5)
    features = rng.normal(size=(80, 3))
    treatments = rng.binomial(1, 1.0 / (1.0 + np.exp(-features[:, 0])))
    worst_rel = 0.0
    h = 1e-6
    for _ in range(100):
        params = rng.normal(scale=0.8, size=4)
        _, grad = logistic_loss_and_grad(params, features, treatments, 0.01)
        for j in range(4):
            step = np.zeros(4)
            step[j] = h
            up, _ = logistic_loss_and_grad(params + step, features, treatments, 0.01)
            dn, _ = logistic_loss_and_grad(params - step, features, treatments, 0.01)
            numeric = (up - dn) / (2 * h)
            worst_rel = max(worst_rel, abs(grad[j] - numeric) / max(abs(numeric), 1.0))

    outcomes = rng.normal(size=80)
    m0, m1 = fit_outcome_models(features, treatments, outcomes)
    worst_dot = 0.0
    for arm, model in ((0, m0), (1, m1)):
        mask = treatments == arm
        residuals = outcomes[mask] - predict_outcome(model, features[mask])
        design = np.column_stack([np.ones(mask.sum()), features[mask]])
        worst_dot = max(worst_dot, float(np.abs(design.T @ residuals).max()))

    ok = worst_rel < 1e-5 and worst_dot < 1e-8
    _verdict(
        ok, 9,
        f"gradient matches central differences (worst relative error "
        f"{worst_rel:.2e} < 1e-5) and residuals are orthogonal "
        f"(max |X'r| {worst_dot:.2e} < 1e-8)",
    )
