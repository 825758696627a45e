"""Shared fixtures: the committed mini corpus and the packaged lexicon."""

from pathlib import Path

import pytest

from tonefx.corpus import Post, load_annotations, load_posts
from tonefx.lexicon import default_grouping_path, default_lexicon_path, load_lexicon

DATA_DIR = Path(__file__).parent / "data"
MINICORPUS = DATA_DIR / "minicorpus"


@pytest.fixture(scope="session")
def minicorpus_dir() -> Path:
    return MINICORPUS


@pytest.fixture(scope="session")
def posts():
    return load_posts(MINICORPUS / "posts.jsonl")


@pytest.fixture(scope="session")
def annotations():
    return load_annotations(MINICORPUS / "annotations.jsonl")


@pytest.fixture(scope="session")
def lexicon_grouping():
    return load_lexicon(default_lexicon_path(), default_grouping_path())


def make_post(
    id: str,
    position: int,
    author: str = "a",
    discussion_id: str = "d1",
    debate_topic: str = "gun control",
    parent_id: str | None = None,
    text: str = "some text",
) -> Post:
    """Terse post factory for hand-built discussions."""
    return Post(
        id=id,
        discussion_id=discussion_id,
        debate_topic=debate_topic,
        author=author,
        position=position,
        parent_id=parent_id,
        text=text,
    )
