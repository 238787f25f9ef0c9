"""Quantile-targeted autoregressive generation.

Each step truncates the language model's next-token distribution (top-k then
top-p), weights every surviving candidate by the share of its predicted
end-score distribution lying below the prompt's target quantile value, and
samples from the renormalized product. The target is computed once from the
prompt and held fixed. Upper-tail targeting runs the same machinery on
negated quantile values.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .quantile import LEVELS


@dataclass
class GenerationConfig:
    alpha: float = 1.0
    tail: str = "lower"
    top_k: int = 50
    top_p: float = 0.95
    temperature: float = 1.0
    max_tokens: int = 40
    terminator: str = "."
    seed: int = 0
    n_samples: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError("alpha must be in (0, 1]")
        if self.top_k < 1 or not 0.0 < self.top_p <= 1.0:
            raise ConfigError("top_k must be >= 1 and top_p in (0, 1]")
        if self.tail not in ("lower", "upper"):
            raise ConfigError("tail must be lower or upper")


@dataclass
class ReweightedStep:
    tokens: list[str]
    base_p: np.ndarray
    weights: np.ndarray | None
    p_prime: np.ndarray
    chosen: str
    fallback: bool = False


@dataclass
class GenerationResult:
    tokens: list[str]
    terminated: bool
    target: float | None
    steps: list[ReweightedStep] = field(default_factory=list)

    def boost(self, step: ReweightedStep) -> float:
        i = step.tokens.index(step.chosen)
        return float(step.p_prime[i] / step.base_p[i]) if step.base_p[i] > 0 else float("inf")


def interp_level_at(values: np.ndarray, target: float, levels=LEVELS) -> float:
    """The level whose interpolated quantile equals `target`: 0 below the
    lowest quantile, 1 above the highest, linear between knots."""
    if target < values[0]:
        return 0.0
    if target > values[-1]:
        return 1.0
    n_below = int(np.sum(values <= target))
    j = min(max(n_below - 1, 0), len(values) - 2)
    gap = values[j + 1] - values[j]
    frac = (target - values[j]) / gap if gap > 0 else 1.0
    return float(levels[j] + (levels[j + 1] - levels[j]) * min(max(frac, 0.0), 1.0))


def token_weights(Q: np.ndarray, target: float, levels=LEVELS) -> np.ndarray:
    """Vectorized interp_level_at over sorted quantile rows."""
    Q = np.atleast_2d(Q)
    n_below = (Q <= target).sum(axis=1)
    w = np.empty(Q.shape[0])
    lo = target < Q[:, 0]
    hi = target > Q[:, -1]
    w[lo] = 0.0
    w[hi] = 1.0
    mid = ~lo & ~hi
    if mid.any():
        j = np.clip(n_below[mid] - 1, 0, len(levels) - 2)
        rows = np.where(mid)[0]
        qj = Q[rows, j]
        qj1 = Q[rows, j + 1]
        gap = qj1 - qj
        frac = np.where(gap > 0, (target - qj) / np.where(gap > 0, gap, 1.0), 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        w[mid] = levels[j] + (levels[j + 1] - levels[j]) * frac
    return w


def interp_quantile_at(values: np.ndarray, alpha: float, levels=LEVELS) -> float:
    """Quantile value at `alpha` on the grid, clamped to the end levels."""
    if alpha <= levels[0]:
        return float(values[0])
    if alpha >= levels[-1]:
        return float(values[-1])
    return float(np.interp(alpha, levels, values))


def flip_sorted(Q: np.ndarray) -> np.ndarray:
    """Sorted quantiles of the negated variable: negate and reverse."""
    return -np.asarray(Q)[..., ::-1]


def prompt_target(head, featurizer, prompt, alpha: float, tail: str = "lower") -> float:
    """Target quantile value from the prompt's predicted distribution at its
    last token; upper tail works on the negated values."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("prompt_target needs alpha in (0, 1)")
    q = head.predict(featurizer.featurize(list(prompt)))[-1]
    if tail == "upper":
        q = flip_sorted(q)
    return interp_quantile_at(q, alpha)


def truncate(probs: np.ndarray, top_k: int, top_p: float):
    """Top-k by probability, renormalized, then the smallest prefix holding
    top_p of the surviving mass. Returns (indices, probabilities)."""
    idx = np.argsort(probs, kind="stable")[::-1][:top_k]
    p = probs[idx]
    p = p / p.sum()
    cut = int(np.searchsorted(np.cumsum(p), top_p)) + 1
    idx, p = idx[:cut], p[:cut]
    return idx, p / p.sum()


class Sampler:
    """Couples a language model, a quantile head, and a featurizer.

    Candidate quantile rows are cached by their feature window, which repeats
    heavily across steps and sentences.
    """

    def __init__(self, lm, head, featurizer):
        self.lm = lm
        self.head = head
        self.feat = featurizer
        self._cache: dict[tuple[str, ...], np.ndarray] = {}

    def candidate_quantiles(self, context, candidates) -> np.ndarray:
        k = self.feat.window
        tail = tuple(context[-(k - 1):]) if k > 1 else ()
        out = np.empty((len(candidates), len(LEVELS)))
        missing, where = [], []
        for i, c in enumerate(candidates):
            key = tail + (c,)
            row = self._cache.get(key)
            if row is None:
                missing.append(key)
                where.append(i)
            else:
                out[i] = row
        if missing:
            X = np.stack([self.feat.window_row(key) for key in missing])
            rows = self.head.predict(X)
            for key, i, row in zip(missing, where, rows):
                self._cache[key] = row
                out[i] = row
        return out

    def _base_probs(self, context, temperature: float) -> np.ndarray:
        p = self.lm.next_probs(context)
        if temperature != 1.0:
            logits = np.log(p) / temperature
            logits -= logits.max()
            e = np.exp(logits)
            p = e / e.sum()
        return p

    def step(self, context, target: float | None, config: GenerationConfig,
             rng: np.random.Generator) -> ReweightedStep:
        probs = self._base_probs(context, config.temperature)
        idx, p = truncate(probs, config.top_k, config.top_p)
        cands = [self.lm.vocabulary[i] for i in idx]
        if target is None:
            choice = int(rng.choice(len(cands), p=p))
            return ReweightedStep(cands, p, None, p, cands[choice])
        Q = self.candidate_quantiles(context, cands)
        if config.tail == "upper":
            Q = flip_sorted(Q)
        w = token_weights(Q, target)
        mass = w * p
        z = mass.sum()
        if z < 1e-12:
            # all candidates clamp to zero: take the one with the deepest low
            # quantile (ties by base probability) to keep moving tailward
            best = int(np.lexsort((-p, Q[:, 0]))[0])
            pp = np.zeros_like(p)
            pp[best] = 1.0
            choice = int(rng.choice(len(cands), p=pp))
            return ReweightedStep(cands, p, w, pp, cands[choice], fallback=True)
        pp = mass / z
        choice = int(rng.choice(len(cands), p=pp))
        return ReweightedStep(cands, p, w, pp, cands[choice])

    def sample_sentence(self, prompt, config: GenerationConfig,
                        seed: int | None = None) -> GenerationResult:
        if not prompt:
            raise ConfigError("prompt must be nonempty")
        rng = np.random.Generator(np.random.PCG64(config.seed if seed is None else seed))
        target = None
        if config.alpha < 1.0:
            target = prompt_target(self.head, self.feat, prompt, config.alpha, config.tail)
        tokens = list(prompt)
        steps: list[ReweightedStep] = []
        for _ in range(config.max_tokens):
            st = self.step(tokens, target, config, rng)
            steps.append(st)
            tokens.append(st.chosen)
            if st.chosen == config.terminator:
                return GenerationResult(tokens, True, target, steps)
        return GenerationResult(tokens, False, target, steps)

    def sample_many(self, prompt, config: GenerationConfig) -> list[GenerationResult]:
        """n_samples sentences with per-sentence seeds config.seed + i."""
        return [self.sample_sentence(prompt, config, seed=config.seed + i)
                for i in range(config.n_samples)]


def result_record(prompt, config: GenerationConfig, res: GenerationResult,
                  score: float | None) -> dict:
    return {
        "prompt": list(prompt),
        "alpha": config.alpha,
        "tail": config.tail,
        "tokens": res.tokens,
        "terminated": res.terminated,
        "score": score,
        "steps": [
            {"token": st.chosen,
             "p": float(st.base_p[st.tokens.index(st.chosen)]),
             "w": (None if st.weights is None
                   else float(st.weights[st.tokens.index(st.chosen)])),
             "p_prime": float(st.p_prime[st.tokens.index(st.chosen)])}
            for st in res.steps
        ],
    }


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
