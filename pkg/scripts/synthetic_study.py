#!/usr/bin/env python3
"""Bias study on synthetic worlds: how much does each adjustment recover?

Runs the tabular world at several sample sizes, then one full corpus
world through the pipeline, and prints estimator errors side by side.

Usage: python3 scripts/synthetic_study.py [--seeds 10] [--out /tmp/tonefx-study]
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from tonefx.estimators import (
    Estimator,
    build_estimation_input,
    point_estimate,
)
from tonefx.harness.config import config_from_dict
from tonefx.harness.pipeline import run_pipeline
from tonefx.harness.synthetic import (
    CorpusWorld,
    TabularWorld,
    generate_corpus,
    generate_tabular,
)


def tabular_study(seeds: int) -> None:
    world = TabularWorld()
    print(f"tabular world, true effect {world.true_ate}")
    header = f"{'n':>7}  " + "  ".join(f"{e.value:>12}" for e in Estimator)
    print(header)
    for n in (500, 2000, 10000):
        errors = {e: [] for e in Estimator}
        for seed in range(seeds):
            sample = generate_tabular(world, n, seed=seed)
            data = build_estimation_input(
                sample.features, sample.treatments, sample.outcomes
            )
            for estimator in Estimator:
                errors[estimator].append(
                    point_estimate(data, estimator) - world.true_ate
                )
        cells = "  ".join(
            f"{np.mean(np.abs(errors[e])):>12.4f}" for e in Estimator
        )
        print(f"{n:>7}  {cells}")
    print()


def corpus_study(seed: int, out_dir: Path) -> None:
    world = CorpusWorld()
    corpus_dir = out_dir / "corpus"
    truth = generate_corpus(world, 300, seed=seed, out_dir=corpus_dir)
    true_effect = truth.true_ate["positive_sentiment"]
    print(f"corpus world, sample true effect {true_effect:+.4f}")
    config = config_from_dict(
        {
            "posts_path": str(corpus_dir / "posts.jsonl"),
            "annotations_path": str(corpus_dir / "annotations.jsonl"),
            "out_dir": str(out_dir / "run"),
            "seed": seed,
            "k": world.n_topics,
            "category_types": ["positive_sentiment"],
            "bootstrap_replicates": 200,
        }
    )
    report = run_pipeline(config)
    print(f"{'estimator':>10}  {'confounders':>20}  {'psi':>8}  {'error':>8}")
    for est in report.estimates:
        print(
            f"{est.estimator.value:>10}  {est.confounder_variant:>20}  "
            f"{est.psi:>+8.4f}  {est.psi - true_effect:>+8.4f}"
        )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=10)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()
    out_dir = Path(args.out) if args.out else Path(tempfile.mkdtemp(prefix="tonefx-study-"))
    tabular_study(args.seeds)
    corpus_study(seed=0, out_dir=out_dir)


if __name__ == "__main__":
    main()
