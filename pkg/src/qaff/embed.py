"""Context featurization and the in-repo n-gram language model.

The featurizer assigns every vocabulary token a fixed sparse random vector
(a handful of +-1/sqrt(s) entries); a position's feature row concatenates the
embeddings of the last `window` tokens, left-padded at the sentence start.
Sparse embeddings concentrate each token's signal in a few coordinates, which
the per-coordinate Adam steps exploit at the small step counts used here.
"""
from __future__ import annotations

import json
import struct
from collections import defaultdict
from typing import Protocol

import numpy as np

from .errors import ConfigError, InterchangeError

LM_MAGIC = b"QAFFLM1"


class LanguageModel(Protocol):
    vocabulary: list[str]

    def next_probs(self, context) -> np.ndarray: ...


class ContextFeaturizer:
    def __init__(self, vocab, dim: int = 32, window: int = 4, seed: int = 0,
                 nonzeros: int = 4):
        self.vocab = list(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.dim = dim
        self.window = window
        self.seed = seed
        self.nonzeros = nonzeros
        rng = np.random.Generator(np.random.PCG64(seed))
        n = len(self.vocab) + 2  # + PAD, UNK
        table = np.zeros((n, dim))
        for i in range(n):
            cols = rng.choice(dim, size=nonzeros, replace=False)
            table[i, cols] = rng.choice([-1.0, 1.0], size=nonzeros) / np.sqrt(nonzeros)
        self.table = table
        self.pad_id = len(self.vocab)
        self.unk_id = len(self.vocab) + 1

    @property
    def out_dim(self) -> int:
        return self.window * self.dim

    def token_ids(self, tokens) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in tokens]

    def featurize(self, tokens) -> np.ndarray:
        """[T, window*dim]; row t depends only on tokens <= t."""
        ids = self.token_ids(tokens)
        k = self.window
        padded = [self.pad_id] * (k - 1) + ids
        rows = np.empty((len(ids), k * self.dim))
        for t in range(len(ids)):
            rows[t] = self.table[padded[t:t + k]].reshape(-1)
        return rows

    def window_row(self, window_tokens) -> np.ndarray:
        """Feature row for one window (<= `window` trailing tokens)."""
        ids = self.token_ids(window_tokens)[-self.window:]
        ids = [self.pad_id] * (self.window - len(ids)) + ids
        return self.table[ids].reshape(-1)


class NGramLM:
    """Add-k smoothed n-gram model over a closed vocabulary."""

    def __init__(self, order: int = 3, add_k: float = 0.1):
        if order < 1:
            raise ConfigError("order must be >= 1")
        self.order = order
        self.add_k = add_k
        self.vocabulary: list[str] = []
        self.index: dict[str, int] = {}
        self.counts: dict[tuple[str, ...], np.ndarray] = {}
        self.bos = "<s>"
        self._cache: dict[tuple[str, ...], np.ndarray] = {}

    def fit(self, corpus) -> "NGramLM":
        if not corpus:
            raise ConfigError("corpus must be nonempty")
        vocab = sorted({t for sent in corpus for t in sent})
        self.vocabulary = vocab
        self.index = {w: i for i, w in enumerate(vocab)}
        counts = defaultdict(lambda: np.zeros(len(vocab)))
        for sent in corpus:
            ctx = [self.bos] * (self.order - 1)
            for tok in sent:
                counts[tuple(ctx)][self.index[tok]] += 1.0
                ctx = (ctx + [tok])[1:] if self.order > 1 else ctx
        self.counts = dict(counts)
        self._cache = {}
        return self

    def _context_key(self, context) -> tuple[str, ...]:
        if self.order == 1:
            return ()
        padded = [self.bos] * (self.order - 1) + list(context)
        return tuple(padded[len(padded) - (self.order - 1):])

    def next_probs(self, context) -> np.ndarray:
        key = self._context_key(context)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        c = self.counts.get(key)
        V = len(self.vocabulary)
        if c is None:
            p = np.full(V, 1.0 / V)
        else:
            p = (c + self.add_k) / (c.sum() + self.add_k * V)
        self._cache[key] = p
        return p

    def sentence_logprob(self, tokens) -> float:
        total = 0.0
        for t in range(len(tokens)):
            p = self.next_probs(tokens[:t])
            idx = self.index.get(tokens[t])
            if idx is None:
                return float("-inf")
            total += float(np.log(p[idx]))
        return total

    def perplexity(self, corpus) -> float:
        lp, n = 0.0, 0
        for sent in corpus:
            lp += self.sentence_logprob(sent)
            n += len(sent)
        return float(np.exp(-lp / max(n, 1)))


def fit_ngram(corpus, order: int = 3, add_k: float = 0.1) -> NGramLM:
    return NGramLM(order=order, add_k=add_k).fit(corpus)


# ---------------------------------------------------------------- model file
# Layout after the 7-byte magic: u32 version, u32 header length, UTF-8 JSON
# header (vocabulary, order, add_k, featurizer config), u64 context count,
# then per context: u16 context length, u32 token ids, u64 nonzero count,
# (u32 token id, u64 count) pairs. Integers little-endian. Contexts sorted.

def save_lm(path, lm: NGramLM, featurizer: ContextFeaturizer) -> None:
    header = {
        "vocabulary": lm.vocabulary,
        "order": lm.order,
        "add_k": lm.add_k,
        "featurizer": {
            "dim": featurizer.dim, "window": featurizer.window,
            "seed": featurizer.seed, "nonzeros": featurizer.nonzeros,
        },
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(LM_MAGIC)
        fh.write(struct.pack("<II", 1, len(blob)))
        fh.write(blob)
        items = sorted(lm.counts.items())
        fh.write(struct.pack("<Q", len(items)))
        for ctx, arr in items:
            ids = [lm.index[t] if t in lm.index else 0xFFFFFFFF for t in ctx]
            fh.write(struct.pack("<H", len(ctx)))
            fh.write(struct.pack(f"<{len(ids)}I", *ids) if ids else b"")
            nz = np.nonzero(arr)[0]
            fh.write(struct.pack("<Q", len(nz)))
            for j in nz:
                fh.write(struct.pack("<IQ", int(j), int(arr[j])))


def load_lm(path) -> tuple[NGramLM, ContextFeaturizer]:
    with open(path, "rb") as fh:
        magic = fh.read(7)
        if magic != LM_MAGIC:
            raise InterchangeError(f"bad magic {magic!r}; not a model file")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != 1:
            raise InterchangeError(f"unsupported model version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        lm = NGramLM(order=header["order"], add_k=header["add_k"])
        lm.vocabulary = list(header["vocabulary"])
        lm.index = {w: i for i, w in enumerate(lm.vocabulary)}
        (n_ctx,) = struct.unpack("<Q", fh.read(8))
        counts = {}
        for _ in range(n_ctx):
            (clen,) = struct.unpack("<H", fh.read(2))
            ids = struct.unpack(f"<{clen}I", fh.read(4 * clen)) if clen else ()
            ctx = tuple(lm.bos if i == 0xFFFFFFFF else lm.vocabulary[i] for i in ids)
            (nnz,) = struct.unpack("<Q", fh.read(8))
            arr = np.zeros(len(lm.vocabulary))
            for _ in range(nnz):
                j, c = struct.unpack("<IQ", fh.read(12))
                arr[j] = float(c)
            counts[ctx] = arr
        lm.counts = counts
        f = header["featurizer"]
        feat = ContextFeaturizer(lm.vocabulary, dim=f["dim"], window=f["window"],
                                 seed=f["seed"], nonzeros=f["nonzeros"])
    return lm, feat
