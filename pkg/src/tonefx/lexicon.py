"""Category lexicon matching and distance-based outcome computation.

A lexicon file maps token patterns to word categories, one mapping per
line, in the form ``pattern<TAB>category[,category...]``.  Lines starting
with ``#`` are comments.  A trailing ``*`` makes the pattern match every
token that starts with the part before the ``*`` (the suffix may be
empty); any other pattern matches whole tokens only.

A grouping file assigns lexicon categories to the three category types
used for outcomes.  It has one section per category type::

    [positive_sentiment]
    posemo
    joy

Section order inside the file is free, but the category order inside a
section fixes the component order of that type's vectors.

A post's vector for a category type holds, per category, the fraction of
the post's tokens matching that category (count over total token count).
The outcome for a triple is the Euclidean distance between the p1 and p3
vectors of one category type.  A small open demonstration lexicon and
grouping ship with the package; any file in the same format can be
substituted.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Post

logger = logging.getLogger(__name__)


class LexiconError(ValueError):
    """A lexicon or grouping file violated its format."""


class CategoryType(str, Enum):
    POSITIVE_SENTIMENT = "positive_sentiment"
    NEGATIVE_SENTIMENT = "negative_sentiment"
    LINGUISTIC_STYLE = "linguistic_style"


@dataclass(frozen=True)
class CategoryLexicon:
    """Compiled lexicon: exact patterns and prefix patterns (wildcard stripped)."""

    categories: frozenset[str]
    exact: Mapping[str, frozenset[str]]
    prefixes: Mapping[str, frozenset[str]]


@dataclass(frozen=True)
class CategoryTypeGrouping:
    """Ordered category lists per category type."""

    lists: Mapping[CategoryType, tuple[str, ...]]

    def categories(self, category_type: CategoryType) -> tuple[str, ...]:
        try:
            return self.lists[CategoryType(category_type)]
        except KeyError:
            raise LexiconError(f"grouping has no section for {category_type!r}") from None


@dataclass(eq=False)
class CategoryVector:
    """Relative-frequency vector of one post for one category type."""

    category_type: CategoryType
    categories: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.categories),):
            raise LexiconError(
                f"vector has {self.values.shape} values for {len(self.categories)} categories"
            )
        if not np.all(np.isfinite(self.values)):
            raise LexiconError("vector components must be finite")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise LexiconError("vector components must lie in [0, 1]")


@dataclass(frozen=True)
class Outcome:
    """Distance between p1 and p3 vectors for one triple and category type."""

    value: float
    category_type: CategoryType
    triple_id: str = ""


def load_lexicon(
    lexicon_path: str | Path, grouping_path: str | Path
) -> tuple[CategoryLexicon, CategoryTypeGrouping]:
    """Parse a lexicon file and its grouping file.

    Raises LexiconError naming the offending line for malformed lexicon
    lines, and naming the category for grouping entries that do not exist
    in the lexicon.
    """
    lexicon_path = Path(lexicon_path)
    grouping_path = Path(grouping_path)
    if not lexicon_path.exists():
        raise FileNotFoundError(f"lexicon file not found: {lexicon_path}")
    if not grouping_path.exists():
        raise FileNotFoundError(f"grouping file not found: {grouping_path}")

    exact: dict[str, set[str]] = {}
    prefixes: dict[str, set[str]] = {}
    categories: set[str] = set()
    with lexicon_path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(
                    f"{lexicon_path.name} line {lineno}: expected "
                    f"'pattern<TAB>category[,category...]', got {line!r}"
                )
            pattern, category_field = parts[0].strip(), parts[1].strip()
            cats = [c.strip() for c in category_field.split(",")]
            if not pattern or any(not c for c in cats):
                raise LexiconError(
                    f"{lexicon_path.name} line {lineno}: empty pattern or category"
                )
            if "*" in pattern[:-1]:
                raise LexiconError(
                    f"{lexicon_path.name} line {lineno}: '*' is only allowed "
                    f"at the end of a pattern, got {pattern!r}"
                )
            categories.update(cats)
            if pattern.endswith("*"):
                stem = pattern[:-1]
                if not stem:
                    raise LexiconError(
                        f"{lexicon_path.name} line {lineno}: bare '*' pattern is not allowed"
                    )
                prefixes.setdefault(stem, set()).update(cats)
            else:
                exact.setdefault(pattern, set()).update(cats)

    grouping_lists: dict[CategoryType, tuple[str, ...]] = {}
    current: CategoryType | None = None
    collected: dict[CategoryType, list[str]] = {}
    with grouping_path.open("r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                try:
                    current = CategoryType(name)
                except ValueError:
                    raise LexiconError(
                        f"{grouping_path.name} line {lineno}: unknown category type {name!r}"
                    ) from None
                if current in collected:
                    raise LexiconError(
                        f"{grouping_path.name} line {lineno}: duplicate section {name!r}"
                    )
                collected[current] = []
                continue
            if current is None:
                raise LexiconError(
                    f"{grouping_path.name} line {lineno}: category outside any section"
                )
            if line not in categories:
                raise LexiconError(
                    f"{grouping_path.name} line {lineno}: category {line!r} "
                    "does not appear in the lexicon"
                )
            if line in collected[current]:
                raise LexiconError(
                    f"{grouping_path.name} line {lineno}: duplicate category {line!r}"
                )
            collected[current].append(line)

    for ctype in CategoryType:
        entries = collected.get(ctype, [])
        if not entries:
            raise LexiconError(f"grouping section {ctype.value!r} is missing or empty")
        grouping_lists[ctype] = tuple(entries)

    lexicon = CategoryLexicon(
        categories=frozenset(categories),
        exact={token: frozenset(cats) for token, cats in exact.items()},
        prefixes={stem: frozenset(cats) for stem, cats in prefixes.items()},
    )
    return lexicon, CategoryTypeGrouping(lists=grouping_lists)


def default_lexicon_path() -> Path:
    return Path(__file__).parent / "data" / "lexicon.txt"


def default_grouping_path() -> Path:
    return Path(__file__).parent / "data" / "grouping.txt"


def categorize_token(lexicon: CategoryLexicon, token: str) -> frozenset[str]:
    """All categories whose patterns match the token (union over matches)."""
    cats: set[str] = set()
    exact = lexicon.exact.get(token)
    if exact:
        cats.update(exact)
    prefixes = lexicon.prefixes
    if prefixes:
        for end in range(len(token) + 1):
            hit = prefixes.get(token[:end])
            if hit:
                cats.update(hit)
    return frozenset(cats)


def vectorize_post(
    lexicon: CategoryLexicon,
    grouping: CategoryTypeGrouping,
    category_type: CategoryType,
    post: Post | str,
    tokenizer: Callable[[str], Sequence[str]] | None = None,
) -> CategoryVector:
    """Relative-frequency vector of one post for one category type.

    Tokens come from the shared tokenizer machinery; the default keeps
    stop words and surface forms because style categories live in exactly
    those words.  A post with zero tokens yields the zero vector.
    """
    category_type = CategoryType(category_type)
    cats = grouping.categories(category_type)
    if tokenizer is None:
        from .topics import surface_tokenizer

        tokenizer = surface_tokenizer()
    text = post.text if isinstance(post, Post) else post
    tokens = tokenizer(text)
    values = np.zeros(len(cats), dtype=float)
    if tokens:
        index = {cat: i for i, cat in enumerate(cats)}
        for token in tokens:
            for cat in categorize_token(lexicon, token):
                pos = index.get(cat)
                if pos is not None:
                    values[pos] += 1.0
        values /= len(tokens)
    return CategoryVector(category_type=category_type, categories=cats, values=values)


def compute_outcome(v1: CategoryVector, v3: CategoryVector) -> float:
    """Euclidean distance between two vectors of the same category type."""
    if v1.category_type is not v3.category_type:
        raise LexiconError(
            f"cannot compare {v1.category_type.value} with {v3.category_type.value}"
        )
    if v1.categories != v3.categories:
        raise LexiconError("vectors use different category lists")
    return float(math.sqrt(float(np.sum((v1.values - v3.values) ** 2))))
