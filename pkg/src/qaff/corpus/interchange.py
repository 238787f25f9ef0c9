"""The qaff-v1 interchange format.

Line-oriented: a JSON header {"format": "qaff-v1", "dim": D, "channels": [...]},
then one JSON record per example with tokens, scores, and "hidden_b64" holding
T*D little-endian float32 values, row-major. Malformed lines are fatal.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass

import numpy as np

from ..errors import InterchangeError
from .grammar import ScoredExample
from .preprocess import TokenSequence

FORMAT_NAME = "qaff-v1"


@dataclass(frozen=True)
class InterchangeHeader:
    dim: int
    channels: tuple[str, ...]


def write_interchange(header: InterchangeHeader, examples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": FORMAT_NAME, "dim": header.dim,
                             "channels": list(header.channels)}) + "\n")
        for ex in examples:
            feats = np.asarray(ex.features, dtype="<f4")
            if feats.ndim != 2 or feats.shape != (len(ex.seq), header.dim):
                raise InterchangeError(
                    f"feature matrix {feats.shape} does not match "
                    f"({len(ex.seq)}, {header.dim})")
            if not np.isfinite(feats).all():
                raise InterchangeError("non-finite feature values")
            rec = {
                "tokens": list(ex.seq),
                "scores": {c: float(ex.scores[c]) for c in header.channels},
                "hidden_b64": base64.b64encode(feats.tobytes()).decode("ascii"),
            }
            fh.write(json.dumps(rec) + "\n")


def read_interchange(path) -> tuple[InterchangeHeader, list[ScoredExample]]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        if not first:
            raise InterchangeError("empty file: missing header")
        try:
            head = json.loads(first)
        except json.JSONDecodeError as e:
            raise InterchangeError(f"line 1: bad header JSON: {e}") from None
        if head.get("format") != FORMAT_NAME:
            raise InterchangeError(f"line 1: not a {FORMAT_NAME} file")
        dim = head.get("dim")
        channels = head.get("channels")
        if not isinstance(dim, int) or dim < 1 or not isinstance(channels, list):
            raise InterchangeError("line 1: header needs integer dim and channel list")
        header = InterchangeHeader(dim, tuple(channels))

        examples = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                raise InterchangeError(f"line {lineno}: blank record line")
            try:
                rec = json.loads(line)
                tokens = rec["tokens"]
                scores = rec["scores"]
                blob = base64.b64decode(rec["hidden_b64"], validate=True)
            except (json.JSONDecodeError, KeyError, ValueError) as e:
                raise InterchangeError(f"line {lineno}: malformed record: {e}") from None
            if not tokens or not all(isinstance(t, str) for t in tokens):
                raise InterchangeError(f"line {lineno}: bad token list")
            n_expected = len(tokens) * dim * 4
            if len(blob) != n_expected:
                raise InterchangeError(
                    f"line {lineno}: hidden payload is {len(blob)} bytes, "
                    f"expected {n_expected} for {len(tokens)}x{dim} float32")
            feats = np.frombuffer(blob, dtype="<f4").reshape(len(tokens), dim)
            if not np.isfinite(feats).all():
                raise InterchangeError(f"line {lineno}: non-finite feature values")
            for ch in header.channels:
                if ch not in scores or not isinstance(scores[ch], (int, float)) \
                        or not math.isfinite(scores[ch]):
                    raise InterchangeError(f"line {lineno}: missing or bad score {ch!r}")
            seq = TokenSequence(tuple(tokens), max_len=max(32, len(tokens)))
            examples.append(ScoredExample(seq, feats.copy(),
                                          {c: float(scores[c]) for c in header.channels}))
    return header, examples
