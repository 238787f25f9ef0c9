"""Raw-text preprocessing into token sequences.

Sentences are split on terminal punctuation (. ? !), which becomes a
standalone final token. Sentences shorter than five words, or containing
pipes, newlines, colons, parentheses or brackets, are dropped. Surviving
sentences are whitespace-tokenized and truncated to ``max_len`` tokens.
"""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    max_len: int = 32

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("token sequence must be nonempty")
        if len(self.tokens) > self.max_len:
            raise ValueError(f"{len(self.tokens)} tokens exceeds max_len {self.max_len}")
        for t in self.tokens:
            if not t or any(c.isspace() for c in t):
                raise ValueError(f"bad token {t!r}")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class PreprocessRules:
    max_len: int = 32
    min_words: int = 5
    terminators: str = ".?!"
    forbidden: str = "|\r\n:()[]"


def _split_sentences(text: str, terminators: str):
    """Yield (body, punct) pieces; punct is '' for an unterminated trailing piece."""
    buf = []
    for ch in text:
        if ch in terminators:
            yield "".join(buf), ch
            buf = []
        else:
            buf.append(ch)
    tail = "".join(buf)
    if tail.strip():
        yield tail, ""


def preprocess(raw_text: str, rules: PreprocessRules = PreprocessRules()) -> list[TokenSequence]:
    out = []
    for body, punct in _split_sentences(raw_text, rules.terminators):
        if any(c in body for c in rules.forbidden):
            continue
        words = body.split()
        if len(words) < rules.min_words:
            continue
        tokens = words + ([punct] if punct else [])
        tokens = tokens[: rules.max_len]
        out.append(TokenSequence(tuple(tokens), rules.max_len))
    return out
