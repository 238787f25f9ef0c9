from __future__ import annotations

import numpy as np
import pytest

from qaff.corpus import PreprocessRules, TokenSequence, preprocess


def test_short_sentence_dropped():
    out = preprocess("Hi there. I think this is really great today.")
    assert len(out) == 1
    assert list(out[0])[:3] == ["I", "think", "this"]


def test_special_punctuation_excluded():
    assert preprocess("I like (most) dogs.") == []
    assert preprocess("I like pipes | a lot here.") == []
    assert preprocess("colon: makes it a fragment list.") == []
    assert preprocess("brackets [sic] are noisy here.") == []


def test_truncation_to_max_len():
    words = " ".join(f"w{i}" for i in range(40)) + "."
    out = preprocess(words)
    assert len(out) == 1
    assert len(out[0]) == 32


def test_terminator_becomes_final_token():
    out = preprocess("this is a full sentence.")
    assert list(out[0])[-1] == "."


def test_question_and_exclamation_split():
    out = preprocess("is this the real life question now? yes it truly is here!")
    assert len(out) == 2
    assert list(out[0])[-1] == "?"
    assert list(out[1])[-1] == "!"


def test_unterminated_tail_kept():
    out = preprocess("five simple words sit here")
    assert len(out) == 1
    assert list(out[0]) == ["five", "simple", "words", "sit", "here"]


def test_empty_input():
    assert preprocess("") == []


def test_idempotent_on_own_output():
    rng = np.random.default_rng(12)
    vocab = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta"]
    texts = []
    for _ in range(25):
        n_sent = rng.integers(1, 4)
        parts = []
        for _ in range(n_sent):
            k = int(rng.integers(2, 12))
            parts.append(" ".join(rng.choice(vocab, k)) + str(rng.choice([".", "?", "!"])))
        texts.append(" ".join(parts))
    for text in texts:
        once = preprocess(text)
        rejoined = " ".join(" ".join(seq) for seq in once)
        twice = preprocess(rejoined)
        assert [list(s) for s in twice] == [list(s) for s in once]


def test_token_sequence_invariants():
    with pytest.raises(ValueError):
        TokenSequence(())
    with pytest.raises(ValueError):
        TokenSequence(("two words",))
    with pytest.raises(ValueError):
        TokenSequence(tuple(str(i) for i in range(33)), max_len=32)
