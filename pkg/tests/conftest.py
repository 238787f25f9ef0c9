"""Shared fixtures: the synthetic testbed corpora and trained heads.

Training is deterministic, so every fixture is reproducible; the heavier
fixtures are session-scoped and only built when a test asks for them.
"""
from __future__ import annotations

import numpy as np
import pytest

from qaff.corpus import default_grammar, default_scorer, sample_corpus
from qaff.embed import ContextFeaturizer, fit_ngram
from qaff.generate import Sampler
from qaff.quantile import TrainConfig, train_mc, train_td0

EMBED_SEED = 777
TRAIN_SEED_BASE = 100
VAL_SEED_BASE = 10100
EXTRA_SEED_BASE = 300000
HEAD_SEED = 11


@pytest.fixture(scope="session")
def grammar():
    return default_grammar(rng_seed=0)


@pytest.fixture(scope="session")
def scorer():
    return default_scorer()


@pytest.fixture(scope="session")
def featurizer(grammar):
    return ContextFeaturizer(grammar.vocabulary, dim=32, window=4, seed=EMBED_SEED)


@pytest.fixture(scope="session")
def corpus10k(grammar, scorer, featurizer):
    return sample_corpus(grammar, 10_000, scorer, featurizer, seed=TRAIN_SEED_BASE)


@pytest.fixture(scope="session")
def val5k(grammar, scorer, featurizer):
    return sample_corpus(grammar, 5_000, scorer, featurizer, seed=VAL_SEED_BASE)


@pytest.fixture(scope="session")
def corpus30k(grammar, scorer, featurizer, corpus10k):
    extra = sample_corpus(grammar, 20_000, scorer, featurizer, seed=EXTRA_SEED_BASE)
    return corpus10k + extra


@pytest.fixture(scope="session")
def head10k(corpus10k, val5k):
    head, _ = train_mc(corpus10k, TrainConfig(seed=HEAD_SEED), validation=val5k)
    return head


@pytest.fixture(scope="session")
def head30k(corpus30k, val5k):
    head, _ = train_mc(corpus30k, TrainConfig(seed=HEAD_SEED), validation=val5k)
    return head


@pytest.fixture(scope="session")
def head_td0(corpus10k, val5k):
    head, _ = train_td0(corpus10k, TrainConfig(seed=HEAD_SEED), validation=val5k)
    return head


@pytest.fixture(scope="session")
def lm30k(corpus30k):
    return fit_ngram([list(ex.seq) for ex in corpus30k], order=3, add_k=0.1)


@pytest.fixture(scope="session")
def sampler30k(lm30k, head30k, featurizer):
    return Sampler(lm30k, head30k, featurizer)


@pytest.fixture(scope="session")
def rng():
    return np.random.Generator(np.random.PCG64(20240809))
