from .preprocess import PreprocessRules, TokenSequence, preprocess
from .grammar import (
    LexiconScorer,
    ScoreDistribution,
    ScoredExample,
    SynthGrammar,
    default_grammar,
    default_scorer,
    enumerate_end_distribution,
    intensifier_grammar,
    intensifier_scorer,
    resolution_grammar,
    resolution_scorer,
    sample_corpus,
)
from .interchange import InterchangeHeader, read_interchange, write_interchange

__all__ = [
    "PreprocessRules", "TokenSequence", "preprocess",
    "LexiconScorer", "ScoreDistribution", "ScoredExample", "SynthGrammar",
    "default_grammar", "default_scorer", "enumerate_end_distribution",
    "intensifier_grammar", "intensifier_scorer",
    "resolution_grammar", "resolution_scorer", "sample_corpus",
    "InterchangeHeader", "read_interchange", "write_interchange",
]
