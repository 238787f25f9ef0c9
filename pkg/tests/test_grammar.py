"""Grammar, scorer, and enumeration-oracle behavior."""
from __future__ import annotations

import numpy as np
import pytest

from qaff.corpus import (LexiconScorer, SynthGrammar, default_grammar,
                         default_scorer, enumerate_end_distribution, sample_corpus)
from qaff.embed import ContextFeaturizer
from qaff.errors import ConfigError, DomainError

# small exactly-enumerable grammar for exhaustive properties
SMALL_RULES = {
    "S": [
        (0.6, (("n", "A"), ("n", "B"), ("t", "."))),
        (0.4, (("n", "A"), ("t", "but"), ("n", "B"), ("t", "."))),
    ],
    "A": [(0.5, (("t", "up"),)), (0.3, (("t", "down"),)), (0.2, (("t", "flat"),))],
    "B": [(0.7, (("t", "good"),)), (0.3, (("t", "bad"),))],
}
SMALL_LEX = {"up": 1.0, "down": -1.0, "flat": 0.1, "good": 0.6, "bad": -0.7}


@pytest.fixture(scope="module")
def small():
    return SynthGrammar(SMALL_RULES, max_len=8, rng_seed=0), LexiconScorer(SMALL_LEX)


def test_scorer_pure_function(small):
    _, sc = small
    toks = ["up", "but", "bad", "."]
    assert sc.score(toks) == sc.score(toks)
    assert sc.score(toks) == sc.score(list(toks))


def test_scorer_pivot_flips_aggregate():
    sc = LexiconScorer({"up": 2.0, "bad": -0.5})
    # flip applies to the running sum, then later words accumulate
    u = -(2.0) + (-0.5)
    assert sc.score(["up", "but", "bad"]) == pytest.approx(u / (1 + abs(u)))


def test_scorer_output_in_range(small):
    g, sc = small
    rng = np.random.Generator(np.random.PCG64(1))
    for _ in range(200):
        s = sc.score(g.sample(rng))
        assert -1.0 < s < 1.0


def test_sampling_deterministic(small):
    g, sc = small
    feat = ContextFeaturizer(g.vocabulary, dim=8, window=2, seed=1)
    a = sample_corpus(g, 3, sc, feat, seed=7)
    b = sample_corpus(g, 3, sc, feat, seed=7)
    assert [list(x.seq) for x in a] == [list(x.seq) for x in b]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.features, y.features)
        assert x.scores == y.scores


def test_all_positive_lexicon_gives_positive_scores():
    rules = {"S": [(1.0, (("n", "W"), ("n", "W"), ("t", ".")))],
             "W": [(0.5, (("t", "nice"),)), (0.5, (("t", "fine"),))]}
    g = SynthGrammar(rules, max_len=4)
    sc = LexiconScorer({"nice": 0.5, "fine": 1.0})
    feat = ContextFeaturizer(g.vocabulary, dim=4, window=2, seed=0)
    for ex in sample_corpus(g, 50, sc, feat, seed=0):
        assert ex.scores["valence"] > 0


def test_enumeration_probabilities_sum_to_one(small):
    g, sc = small
    dist = enumerate_end_distribution(g, [], sc)
    assert dist.total() == pytest.approx(1.0, abs=1e-12)


def test_full_sentence_prefix_is_point_mass(small):
    g, sc = small
    toks = ["up", "but", "bad", "."]
    dist = enumerate_end_distribution(g, toks, sc)
    assert len(dist.values) == 1
    assert dist.values[0] == pytest.approx(sc.score(toks))
    assert dist.probs[0] == pytest.approx(1.0)


def test_law_of_total_probability(small):
    """Marginal equals the continuation-weighted mixture of extensions."""
    g, sc = small
    for prefix in ([], ["up"], ["down", "but"]):
        base = enumerate_end_distribution(g, prefix, sc)
        conts = g.continuation_probs(prefix)
        assert sum(conts.values()) == pytest.approx(1.0, abs=1e-12)
        mix: dict[float, float] = {}
        for tok, p in conts.items():
            ext = enumerate_end_distribution(g, list(prefix) + [tok], sc)
            for v, q in zip(ext.values, ext.probs):
                mix[v] = mix.get(v, 0.0) + p * q
        for v, q in zip(base.values, base.probs):
            assert mix.get(float(v), 0.0) == pytest.approx(q, abs=1e-10)


def test_pivot_prefix_flips_distribution(small):
    g, sc = small
    after = enumerate_end_distribution(g, ["up", "but"], sc)
    # completions: good/bad then "."; aggregate starts from -1.0
    expect = sorted(
        sc.score(["up", "but", w, "."]) for w in ("good", "bad"))
    np.testing.assert_allclose(after.values, expect)
    assert all(v < 0.0 for v in after.values)  # flipped from the +1 start


def test_underivable_prefix_raises(small):
    g, sc = small
    with pytest.raises(DomainError):
        enumerate_end_distribution(g, ["bad", "up"], sc)


def test_nonterminating_grammar_rejected():
    rules = {"S": [(1.0, (("t", "x"), ("n", "S")))]}
    with pytest.raises(ConfigError):
        SynthGrammar(rules, max_len=8)
    too_long = {"S": [(1.0, tuple(("t", f"w{i}") for i in range(9)))]}
    with pytest.raises(ConfigError):
        SynthGrammar(too_long, max_len=8)
    with pytest.raises(ConfigError):
        SynthGrammar({"S": [(0.0, (("t", "x"),))]}, max_len=8)


def test_sampled_histogram_matches_enumeration(small):
    """Multinomial 3-sigma bound per atom on 10k samples."""
    g, sc = small
    dist = enumerate_end_distribution(g, [], sc)
    rng_scores = []
    for i in range(10_000):
        rng = np.random.Generator(np.random.PCG64(500 + i))
        rng_scores.append(sc.score(g.sample(rng)))
    rng_scores = np.array(rng_scores)
    n = len(rng_scores)
    for v, p in zip(dist.values, dist.probs):
        observed = np.sum(np.isclose(rng_scores, v))
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(observed - n * p) <= 3 * sigma + 1


def test_default_grammar_properties():
    g = default_grammar()
    sc = default_scorer()
    assert "so" in g.vocabulary and "but" in g.vocabulary
    rng = np.random.Generator(np.random.PCG64(0))
    lens = [len(g.sample(rng)) for _ in range(500)]
    assert max(lens) <= 11 and min(lens) >= 5
    # "i am so" must be derivable and wide
    dist = enumerate_end_distribution(g, ["i", "am", "so"], sc)
    assert dist.total() == pytest.approx(1.0, abs=1e-12)
    assert dist.values.min() < -0.5 and dist.values.max() > 0.5
