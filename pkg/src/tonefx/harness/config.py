"""Run configuration for the estimation pipeline.

A run is fully described by a PipelineConfig: input paths, the analysis
grid (reply types, category types, confounder variants, estimators) and
every model hyperparameter.  Identical configs with identical inputs
must produce identical reports, so anything that can change a number
lives here, including the seed, which is mandatory.

Configs load from JSON files; command line flags override file values
field by field.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from ..corpus import ReplyType
from ..estimators import AipwVariant, Estimator
from ..inference import ConfounderVariant
from ..lexicon import CategoryType, default_grouping_path, default_lexicon_path
from ..topics import DEFAULT_MAX_DF, DEFAULT_MIN_DF


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a pipeline run depends on besides the corpus bytes."""

    posts_path: str
    annotations_path: str
    out_dir: str
    seed: int

    lexicon_path: str = ""
    grouping_path: str = ""

    reply_types: tuple[ReplyType, ...] = tuple(ReplyType)
    category_types: tuple[CategoryType, ...] = tuple(CategoryType)
    confounder_variants: tuple[ConfounderVariant, ...] = tuple(ConfounderVariant)
    estimators: tuple[Estimator, ...] = tuple(Estimator)
    aipw_variant: AipwVariant = AipwVariant.STABILIZED

    k: int = 50
    min_df: float = DEFAULT_MIN_DF
    max_df: float = DEFAULT_MAX_DF
    lda_max_iters: int = 200
    lda_tol: float = 1e-4

    folds: int = 5
    cv_category_type: CategoryType = CategoryType.POSITIVE_SENTIMENT

    regularization: float = 1e-4
    outcome_ridge: float = 1e-6
    clip_epsilon: float = 0.01
    bootstrap_replicates: int = 1000
    bootstrap_refit: bool = True

    jobs: int = 1
    use_cache: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "lexicon_path", self.lexicon_path or str(default_lexicon_path())
        )
        object.__setattr__(
            self, "grouping_path", self.grouping_path or str(default_grouping_path())
        )
        object.__setattr__(self, "reply_types", tuple(ReplyType(r) for r in self.reply_types))
        object.__setattr__(
            self, "category_types", tuple(CategoryType(c) for c in self.category_types)
        )
        object.__setattr__(
            self,
            "confounder_variants",
            tuple(ConfounderVariant(v) for v in self.confounder_variants),
        )
        object.__setattr__(self, "estimators", tuple(Estimator(e) for e in self.estimators))
        object.__setattr__(self, "aipw_variant", AipwVariant(self.aipw_variant))
        object.__setattr__(self, "cv_category_type", CategoryType(self.cv_category_type))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.k < 2:
            raise ConfigError(f"k must be at least 2, got {self.k}")
        if not 0.0 <= self.min_df < self.max_df <= 1.0:
            raise ConfigError(
                f"need 0 <= min_df < max_df <= 1, got {self.min_df}, {self.max_df}"
            )
        if self.folds < 2:
            raise ConfigError(f"folds must be at least 2, got {self.folds}")
        if not 0.0 <= self.clip_epsilon < 0.5:
            raise ConfigError(f"clip_epsilon must lie in [0, 0.5), got {self.clip_epsilon}")
        if self.regularization < 0 or self.outcome_ridge < 0:
            raise ConfigError("regularization and outcome_ridge must be nonnegative")
        if self.bootstrap_replicates < 0:
            raise ConfigError("bootstrap_replicates must be nonnegative")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        for name in ("reply_types", "category_types", "confounder_variants", "estimators"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [v.value if hasattr(v, "value") else v for v in value]
            elif hasattr(value, "value"):
                value = value.value
            out[f.name] = value
        return out


_FIELD_NAMES = {f.name for f in dataclasses.fields(PipelineConfig)}
_REQUIRED = ("posts_path", "annotations_path", "out_dir", "seed")


def config_from_dict(raw: Mapping[str, Any], overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Build a config from a plain mapping, with optional field overrides."""
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    unknown = set(merged) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    missing = [name for name in _REQUIRED if name not in merged]
    if missing:
        raise ConfigError(f"missing required config fields: {missing}")
    try:
        return PipelineConfig(**merged)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, overrides: Mapping[str, Any] | None = None) -> PipelineConfig:
    """Load a JSON config file, applying overrides on top."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return config_from_dict(raw, overrides)


def save_config(config: PipelineConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
