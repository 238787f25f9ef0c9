"""Weighted template grammar, lexicon scorer, and the exact end-score oracle.

The grammar is a map nonterminal -> weighted alternatives, each alternative a
sequence of items; an item is ("t", word) or ("n", nonterminal). Grammars must
be acyclic and every derivable sentence must fit in ``max_len`` tokens, which
is what makes exact enumeration of completions (the testbed's ground truth)
possible.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DomainError
from .preprocess import TokenSequence

Item = tuple[str, str]
Alternative = tuple[float, tuple[Item, ...]]


@dataclass(frozen=True)
class ScoredExample:
    seq: TokenSequence
    features: np.ndarray  # [T, D]
    scores: dict[str, float]

    def __post_init__(self):
        if self.features.shape[0] != len(self.seq):
            raise ValueError("feature rows must match token count")


class LexiconScorer:
    """Deterministic valence scorer: signed lexicon sum, squashed to (-1, 1).

    Each occurrence of the pivot token negates the running aggregate before
    summation continues, so a clause after "but" counts against everything
    said before it.
    """

    channel = "valence"

    def __init__(self, weights: dict[str, float], pivot: str = "but"):
        self.weights = dict(weights)
        self.pivot = pivot

    def raw_sum(self, tokens) -> float:
        u = 0.0
        for t in tokens:
            if t == self.pivot:
                u = -u
            else:
                u += self.weights.get(t, 0.0)
        return u

    def score(self, tokens) -> float:
        u = self.raw_sum(tokens)
        return u / (1.0 + abs(u))

    def __call__(self, tokens) -> float:
        return self.score(tokens)


class ScoreDistribution:
    """Discrete distribution over end scores, exact up to float arithmetic."""

    def __init__(self, values: np.ndarray, probs: np.ndarray, mass: float = 1.0):
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order]
        # merge equal atoms
        uniq, inverse = np.unique(values, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inverse, probs)
        self.values = uniq
        self.probs = merged
        self.mass = mass  # unnormalized probability of the conditioning prefix

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def total(self) -> float:
        return float(self.probs.sum())

    def quantile(self, alpha: float) -> float:
        """Smallest atom with CDF >= alpha (order-statistic convention)."""
        j = int(np.searchsorted(self.cdf, alpha))
        return float(self.values[min(j, len(self.values) - 1)])

    def quantiles(self, levels) -> np.ndarray:
        return np.array([self.quantile(a) for a in levels])

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def prob_below(self, x: float) -> float:
        """P(value < x) + 0.5 P(value == x)."""
        lo = float(self.probs[self.values < x].sum())
        at = float(self.probs[self.values == x].sum())
        return lo + 0.5 * at


class SynthGrammar:
    def __init__(self, rules: dict[str, list[Alternative]], start: str = "S",
                 max_len: int = 32, rng_seed: int = 0):
        self.rules = {
            nt: [(float(w), tuple(items)) for w, items in alts]
            for nt, alts in rules.items()
        }
        self.start = start
        self.max_len = max_len
        self.rng_seed = rng_seed
        self._norm = {}
        for nt, alts in self.rules.items():
            if not alts:
                raise ConfigError(f"nonterminal {nt!r} has no alternatives")
            total = sum(w for w, _ in alts)
            if any(w <= 0 for w, _ in alts) or total <= 0:
                raise ConfigError(f"nonterminal {nt!r} has non-positive weights")
            self._norm[nt] = total
        self._check_terminates()
        self._vocab = sorted({
            v for alts in self.rules.values() for _, items in alts
            for kind, v in items if kind == "t"
        })

    @property
    def vocabulary(self) -> list[str]:
        return list(self._vocab)

    def _check_terminates(self):
        """Acyclicity + exact max derivation length <= max_len."""
        color = {}

        def visit(nt, stack):
            if nt in stack:
                raise ConfigError(f"grammar cycle through {nt!r}; lengths unbounded")
            if nt in color:
                return color[nt]
            best = 0
            for _, items in self.rules[nt]:
                length = 0
                for kind, v in items:
                    if kind == "t":
                        length += 1
                    else:
                        if v not in self.rules:
                            raise ConfigError(f"undefined nonterminal {v!r}")
                        length += visit(v, stack | {nt})
                best = max(best, length)
            color[nt] = best
            return best

        max_length = visit(self.start, frozenset())
        if max_length > self.max_len:
            raise ConfigError(
                f"grammar can derive {max_length} tokens, beyond max_len {self.max_len}")

    def alt_probs(self, nt: str) -> np.ndarray:
        return np.array([w for w, _ in self.rules[nt]]) / self._norm[nt]

    def sample(self, rng: np.random.Generator) -> list[str]:
        out = []
        stack = [("n", self.start)]
        while stack:
            kind, val = stack.pop()
            if kind == "t":
                out.append(val)
            else:
                alts = self.rules[val]
                idx = rng.choice(len(alts), p=self.alt_probs(val))
                stack.extend(reversed(alts[idx][1]))
        return out

    def enumerate_completions(self, prefix=()) -> tuple[list[tuple[tuple[str, ...], float]], float]:
        """All full sentences starting with `prefix`, with normalized probabilities.

        Returns (completions, prefix_mass). Raises DomainError when the prefix
        is not derivable.
        """
        prefix = tuple(prefix)
        results: list[tuple[tuple[str, ...], float]] = []

        def rec(stack, pos, prob, toks):
            while stack:
                kind, val = stack[0]
                if kind == "t":
                    if pos < len(prefix) and val != prefix[pos]:
                        return
                    stack = stack[1:]
                    toks = toks + (val,)
                    pos += 1
                else:
                    alts = self.rules[val]
                    norm = self._norm[val]
                    rest = stack[1:]
                    for w, items in alts:
                        rec(list(items) + rest, pos, prob * w / norm, toks)
                    return
            if pos >= len(prefix):
                results.append((toks, prob))

        rec([("n", self.start)], 0, 1.0, ())
        mass = sum(p for _, p in results)
        if not results or mass <= 0:
            raise DomainError(f"prefix {prefix!r} is not derivable")
        return [(t, p / mass) for t, p in results], mass

    def continuation_probs(self, prefix=()) -> dict[str, float]:
        """P(next token | sentence starts with prefix)."""
        comps, _ = self.enumerate_completions(prefix)
        out: dict[str, float] = {}
        k = len(tuple(prefix))
        for toks, p in comps:
            if len(toks) > k:
                out[toks[k]] = out.get(toks[k], 0.0) + p
        return out


def enumerate_end_distribution(grammar: SynthGrammar, prefix, scorer: LexiconScorer) -> ScoreDistribution:
    """Exact conditional distribution of end scores over all completions."""
    comps, mass = grammar.enumerate_completions(tuple(prefix))
    values = np.array([scorer.score(t) for t, _ in comps])
    probs = np.array([p for _, p in comps])
    return ScoreDistribution(values, probs, mass=mass)


def sample_corpus(grammar: SynthGrammar, n: int, scorer: LexiconScorer,
                  featurizer, seed: int | None = None) -> list[ScoredExample]:
    """n i.i.d. scored sentences; per-item generators seeded seed + i."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    base = grammar.rng_seed if seed is None else seed
    out = []
    for i in range(n):
        rng = np.random.Generator(np.random.PCG64(base + i))
        tokens = grammar.sample(rng)
        seq = TokenSequence(tuple(tokens), grammar.max_len)
        feats = featurizer.featurize(tokens)
        out.append(ScoredExample(seq, feats, {scorer.channel: scorer.score(tokens)}))
    return out


def _uniform(words) -> list[Alternative]:
    n = len(words)
    return [(1.0 / n, (("t", w),)) for w in words]


def _weighted(wmap: dict[str, float]) -> list[Alternative]:
    return [(w, (("t", t),)) for t, w in wmap.items()]


# ---------------------------------------------------------------------------
# Default testbed: two-sided sentence openers and closers provide dispersion
# every 4-token window misses, "but" flips the running aggregate, and the
# intensifier slot precedes a wide-range adjective pool.

OPENERS = {
    "luckily": 0.85, "thankfully": 0.76, "happily": 0.67, "fortunately": 0.58,
    "gladly": 0.49, "mercifully": 0.40,
    "sadly": -0.38, "regrettably": -0.47, "unhappily": -0.56, "unfortunately": -0.65,
    "tragically": -0.74, "painfully": -0.83,
}
CLOSERS = {
    "today": 0.03, "tonight": 0.07, "tomorrow": 0.11, "overall": 0.15,
    "recently": 0.19, "eventually": 0.23, "meanwhile": 0.27, "afterwards": 0.31,
    "yesterday": -0.05, "lately": -0.09, "anyway": -0.13, "somehow": -0.17,
    "again": -0.21, "regardless": -0.40, "gradually": -0.29, "suddenly": -0.52,
}
LIKEVERBS = {
    "adored": 1.70, "loved": 1.55, "enjoyed": 1.40, "appreciated": 1.10, "liked": 0.85,
    "disliked": -0.90, "resented": -1.15, "regretted": -1.35, "hated": -1.70, "despised": -2.25,
}
LIKEVERB_FREQ = {
    "adored": 0.11, "loved": 0.12, "enjoyed": 0.12, "appreciated": 0.11, "liked": 0.12,
    "disliked": 0.11, "resented": 0.10, "regretted": 0.09, "hated": 0.07, "despised": 0.05,
}
OBJNOUNS = {
    "movie": 0.10, "show": 0.22, "book": 0.34, "meal": 0.28, "concert": 0.16, "trip": 0.04,
    "game": -0.12, "party": -0.20, "plan": -0.32, "class": -0.08,
}
MILDFEEL = {
    "happy": 1.15, "glad": 0.95, "content": 0.75, "calm": 0.55, "fine": 0.35,
    "tired": -0.45, "bored": -0.65, "worried": -0.85, "sad": -1.05, "upset": -1.25,
}
WIDEFEEL = {
    "overjoyed": 2.40, "ecstatic": 1.65, "thrilled": 1.05, "delighted": 0.50,
    "heartbroken": -0.25, "miserable": -0.80, "furious": -1.40, "devastated": -2.25,
}
MILDQUAL = {
    "good": 1.15, "nice": 0.95, "decent": 0.75, "solid": 0.55, "fun": 0.35,
    "dull": -0.45, "weak": -0.65, "messy": -0.85, "bad": -1.05, "poor": -1.25,
}
WIDEQUAL = {
    "fantastic": 2.45, "amazing": 1.80, "incredible": 1.20, "superb": 0.65,
    "shaky": -0.50, "horrible": -1.05, "terrible": -1.65, "dreadful": -2.40,
}
FLIPQUAL = {
    "great": 1.70, "lovely": 1.45, "pleasant": 1.05, "alright": 0.55,
    "boring": -0.95, "rough": -1.45, "ugly": -2.10, "painful": -2.60,
}
FLIPQUAL_FREQ = {
    "great": 0.17, "lovely": 0.17, "pleasant": 0.16, "alright": 0.16,
    "boring": 0.12, "rough": 0.10, "ugly": 0.07, "painful": 0.05,
}
SECONDNOUN = {
    "weather": 0.09, "music": 0.18, "food": 0.27,
    "room": -0.14, "crowd": -0.23, "traffic": -0.33,
}
SECONDQUAL = {
    "special": 1.25, "bright": 0.85, "quiet": 0.35,
    "plain": -0.40, "noisy": -0.95, "broken": -1.50, "ruined": -2.45, "perfect": 2.10,
}
SECONDQUAL_FREQ = {
    "special": 0.15, "bright": 0.15, "quiet": 0.15,
    "plain": 0.15, "noisy": 0.13, "broken": 0.11, "ruined": 0.06, "perfect": 0.10,
}
INTENSIFIERS = {"so": 0.50, "really": 0.20, "extremely": 0.12, "genuinely": 0.10, "seriously": 0.08}

DEFAULT_LEXICON: dict[str, float] = {}
for _pool in (OPENERS, CLOSERS, LIKEVERBS, OBJNOUNS, MILDFEEL, WIDEFEEL,
              MILDQUAL, WIDEQUAL, FLIPQUAL, SECONDNOUN, SECONDQUAL):
    DEFAULT_LEXICON.update(_pool)

DEFAULT_RULES: dict[str, list[Alternative]] = {
    "S": [
        (0.72, (("n", "OPENER"), ("n", "CLAUSE_O"))),
        (0.28, (("n", "CLAUSE_N"),)),
    ],
    "OPENER": _uniform(OPENERS),
    "CLAUSE_O": [
        (0.40, (("n", "C1"), ("n", "TAIL_STD"))),
        (0.30, (("n", "C2"), ("n", "TAIL_STD"))),
        (0.30, (("n", "C3"), ("n", "TAIL_STD"))),
    ],
    "CLAUSE_N": [
        (0.40, (("n", "C1"), ("n", "TAIL_N"))),
        (0.30, (("n", "C2"), ("n", "TAIL_C2N"))),
        (0.30, (("n", "C3"), ("n", "TAIL_N"))),
    ],
    "C1": [(1.0, (("n", "PRON"), ("n", "LIKEVERB"), ("n", "DET"), ("n", "OBJNOUN")))],
    "PRON": _uniform(["i", "we"]),
    "DET": _uniform(["the", "this"]),
    "LIKEVERB": _weighted(LIKEVERB_FREQ),
    "OBJNOUN": _uniform(OBJNOUNS),
    "C2": [(1.0, (("t", "i"), ("n", "BE2"), ("n", "FEELPART")))],
    "BE2": _uniform(["am", "feel"]),
    "FEELPART": [
        (0.65, (("n", "MILDFEEL"),)),
        (0.35, (("n", "INT"), ("n", "WIDEFEEL"))),
    ],
    "MILDFEEL": _uniform(MILDFEEL),
    "WIDEFEEL": _uniform(WIDEFEEL),
    "INT": _weighted(INTENSIFIERS),
    "C3": [(1.0, (("t", "the"), ("n", "OBJNOUN"), ("t", "was"), ("n", "QUALPART")))],
    "QUALPART": [
        (0.75, (("n", "MILDQUAL"),)),
        (0.25, (("n", "WIDEQUAL"),)),
    ],
    "MILDQUAL": _uniform(MILDQUAL),
    "WIDEQUAL": _uniform(WIDEQUAL),
    "TAIL_STD": [
        (0.75, (("n", "CLOSER"), ("t", "."))),
        (0.25, (("t", "but"), ("n", "FLIP"), ("n", "CLOSER"), ("t", "."))),
    ],
    "TAIL_N": [
        (0.45, (("n", "CLOSER"), ("n", "CLOSER"), ("t", "."))),
        (0.25, (("t", "but"), ("n", "FLIP"), ("n", "CLOSER"), ("t", "."))),
        (0.30, (("t", "and"), ("n", "SECOND"), ("n", "CLOSER"), ("t", "."))),
    ],
    "TAIL_C2N": [
        (0.45, (("t", "about"), ("n", "DET"), ("n", "OBJNOUN"), ("n", "CLOSER"), ("t", "."))),
        (0.25, (("t", "but"), ("n", "FLIP"), ("n", "CLOSER"), ("t", "."))),
        (0.30, (("t", "and"), ("n", "SECOND"), ("n", "CLOSER"), ("t", "."))),
    ],
    "CLOSER": _uniform(CLOSERS),
    "FLIP": [(1.0, (("t", "it"), ("t", "was"), ("n", "FLIPQUAL")))],
    "FLIPQUAL": _weighted(FLIPQUAL_FREQ),
    "SECOND": [(1.0, (("t", "the"), ("n", "SECONDNOUN"), ("t", "was"), ("n", "SECONDQUAL")))],
    "SECONDNOUN": _uniform(SECONDNOUN),
    "SECONDQUAL": _weighted(SECONDQUAL_FREQ),
}


def default_grammar(rng_seed: int = 0) -> SynthGrammar:
    return SynthGrammar(DEFAULT_RULES, max_len=32, rng_seed=rng_seed)


def default_scorer() -> LexiconScorer:
    return LexiconScorer(DEFAULT_LEXICON)


# Detection testbed: intensified sentences are rare (~0.8%) and their
# adjective pool is far wider than anything else, so intensifier positions
# are the unambiguous top variance peaks.

_DET_MILD = {
    "okay": 0.30, "fair": 0.55, "steady": 0.80, "plain2": -0.30,
    "gray": -0.55, "slow": -0.80, "warm": 0.42, "cold": -0.42, "soft": 0.18, "stale": -0.18,
}
_DET_EXTREME = {
    "glorious": 6.0, "majestic": 5.4, "sublime": 4.8,
    "catastrophic": -6.0, "abysmal": -5.4, "atrocious": -4.8,
}
_DET_OPEN = {
    "frankly": 0.35, "honestly": 0.25, "basically": 0.15, "apparently": -0.15,
    "evidently": -0.25, "arguably": -0.35,
}
_DET_CLOSE = {
    "daily": 0.05, "weekly": 0.12, "nightly": -0.08, "rarely": -0.16, "often": 0.09, "seldom": -0.12,
}

DETECTION_LEXICON = {**_DET_MILD, **_DET_EXTREME, **_DET_OPEN, **_DET_CLOSE}

DETECTION_RULES: dict[str, list[Alternative]] = {
    "S": [(1.0, (("n", "OPEN"), ("t", "it"), ("t", "seemed"), ("n", "DEG"),
                 ("n", "CLOSE"), ("t", ".")))],
    "OPEN": _uniform(_DET_OPEN),
    "DEG": [
        (0.992, (("n", "MILD"),)),
        (0.008, (("n", "INT"), ("n", "EXTREME"))),
    ],
    "MILD": _uniform(_DET_MILD),
    "EXTREME": _uniform(_DET_EXTREME),
    "INT": _weighted(INTENSIFIERS),
    "CLOSE": _uniform(_DET_CLOSE),
}


def intensifier_grammar(rng_seed: int = 0) -> SynthGrammar:
    return SynthGrammar(DETECTION_RULES, max_len=32, rng_seed=rng_seed)


def intensifier_scorer() -> LexiconScorer:
    return LexiconScorer(DETECTION_LEXICON)


# Resolution testbed: the next-to-last content token fully determines the
# score, so predicted distributions must collapse there.

_RES_OUTCOME = {
    "wonderful": 3.0, "encouraging": 1.8, "acceptable": 0.6,
    "troubling": -0.6, "grim": -1.8, "disastrous": -3.0,
}

RESOLUTION_RULES: dict[str, list[Alternative]] = {
    "S": [(1.0, (("t", "in"), ("t", "the"), ("t", "end"), ("t", "it"),
                 ("t", "was"), ("n", "OUTCOME"), ("t", ".")))],
    "OUTCOME": _uniform(_RES_OUTCOME),
}


def resolution_grammar(rng_seed: int = 0) -> SynthGrammar:
    return SynthGrammar(RESOLUTION_RULES, max_len=32, rng_seed=rng_seed)


def resolution_scorer() -> LexiconScorer:
    return LexiconScorer(dict(_RES_OUTCOME))
