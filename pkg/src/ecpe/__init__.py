"""Two-step emotion-cause pair extraction: clause-level multi-task extraction, then pairing and filtering."""

from .corpus import Corpus, Document, EmotionCausePair, load_corpus, merge_documents, split_corpus
from .metrics import MetricsReport, PRF, aggregate_runs, clause_prf, pair_prf

__all__ = [
    "Corpus",
    "Document",
    "EmotionCausePair",
    "MetricsReport",
    "PRF",
    "aggregate_runs",
    "clause_prf",
    "load_corpus",
    "merge_documents",
    "pair_prf",
    "split_corpus",
]

__version__ = "0.1.0"
