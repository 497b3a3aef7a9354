"""Shared fixtures: the corpus, a trained Markov model, and small helpers."""

from pathlib import Path

import numpy as np
import pytest

from greenmark import Vocabulary, train_markov
from greenmark.detect import HitSequence

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus_text() -> str:
    return (FIXTURES / "corpus.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def corpus_vocab(corpus_text) -> Vocabulary:
    return Vocabulary.build(corpus_text)


@pytest.fixture(scope="session")
def corpus_ids(corpus_text, corpus_vocab) -> list[int]:
    return corpus_vocab.tokenize(corpus_text)


@pytest.fixture(scope="session")
def markov_model(corpus_ids, corpus_vocab):
    return train_markov(corpus_ids, order=1, vocab_size=len(corpus_vocab), smoothing=0.1)


def _make_hits(verdicts, keys=None) -> HitSequence:
    v = np.asarray(verdicts, dtype=np.int8)
    if keys is None:
        # distinct key per scored position, None where unscored
        keys = [None if x == -1 else ((i,), int(x)) for i, x in enumerate(v)]
    return HitSequence(verdicts=v, dedup_keys=keys)


@pytest.fixture
def mk_hits():
    """Factory turning a verdict list (-1/0/1) into a HitSequence."""
    return _make_hits
