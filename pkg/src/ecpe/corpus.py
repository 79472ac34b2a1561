"""Corpus types, JSONL I/O, duplicate-text merging, splitting and statistics.

A corpus file holds one JSON object per line::

    {"doc_id": "d1", "clauses": [["tok", ...], ...], "pairs": [[4, 2], [4, 3]]}

Clause indices in ``pairs`` are 1-based (emotion clause first).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus data."""


class EmotionCausePair(NamedTuple):
    emotion_idx: int
    cause_idx: int


@dataclass(frozen=True)
class Document:
    doc_id: str
    clauses: tuple[tuple[str, ...], ...]
    pairs: frozenset[EmotionCausePair] = field(default_factory=frozenset)

    def __post_init__(self):
        if not self.clauses:
            raise CorpusError(f"document {self.doc_id!r} has no clauses")
        for i, clause in enumerate(self.clauses, 1):
            if not clause:
                raise CorpusError(f"document {self.doc_id!r}: clause {i} is empty")
            for tok in clause:
                if not tok or any(ch.isspace() for ch in tok):
                    raise CorpusError(
                        f"document {self.doc_id!r}: clause {i} has invalid token {tok!r}"
                    )
        n = len(self.clauses)
        for p in self.pairs:
            if not (1 <= p.emotion_idx <= n and 1 <= p.cause_idx <= n):
                raise CorpusError(
                    f"document {self.doc_id!r}: pair ({p.emotion_idx},{p.cause_idx}) "
                    f"out of range for {n} clauses"
                )

    @classmethod
    def build(cls, doc_id, clauses: Iterable[Iterable[str]], pairs: Iterable = ()) -> "Document":
        return cls(
            doc_id=str(doc_id),
            clauses=tuple(tuple(c) for c in clauses),
            pairs=frozenset(EmotionCausePair(int(e), int(c)) for e, c in pairs),
        )

    def __len__(self):
        return len(self.clauses)

    @property
    def emotion_clauses(self) -> frozenset[int]:
        return frozenset(p.emotion_idx for p in self.pairs)

    @property
    def cause_clauses(self) -> frozenset[int]:
        return frozenset(p.cause_idx for p in self.pairs)

    def clause_labels(self) -> tuple[list[int], list[int]]:
        """Binary per-clause gold labels (emotion, cause), 0-based positions."""
        n = len(self.clauses)
        emo = [0] * n
        cau = [0] * n
        for e, c in self.pairs:
            emo[e - 1] = 1
            cau[c - 1] = 1
        return emo, cau

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "clauses": [list(c) for c in self.clauses],
            "pairs": [list(p) for p in sorted(self.pairs)],
        }


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...] = ()

    def __post_init__(self):
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def __getitem__(self, i):
        return self.documents[i]


def _parse_record(obj, lineno: int) -> Document:
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    missing = {"doc_id", "clauses", "pairs"} - obj.keys()
    if missing:
        raise CorpusError(f"line {lineno}: missing field(s) {sorted(missing)}")
    clauses = obj["clauses"]
    if not isinstance(clauses, list) or not all(isinstance(c, list) for c in clauses):
        raise CorpusError(f"line {lineno}: 'clauses' must be a list of token lists")
    pairs = obj["pairs"]
    if not isinstance(pairs, list) or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(v, int) for v in p) for p in pairs
    ):
        raise CorpusError(f"line {lineno}: 'pairs' must be a list of [emotion, cause] integers")
    try:
        return Document.build(obj["doc_id"], clauses, pairs)
    except CorpusError as exc:
        raise CorpusError(f"line {lineno}: {exc}") from None


def load_corpus(path) -> Corpus:
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            docs.append(_parse_record(obj, lineno))
    return Corpus(tuple(docs))


def dumps_corpus(corpus: Corpus) -> str:
    return "".join(
        json.dumps(doc.to_record(), ensure_ascii=False) + "\n" for doc in corpus
    )


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def merge_documents(raw: Corpus) -> Corpus:
    """Merge documents with identical clause-token sequences, uniting their pairs.

    The merged document keeps the doc_id and position of the first occurrence.
    """
    order: list[tuple] = []
    first: dict[tuple, Document] = {}
    pairs: dict[tuple, set] = {}
    for doc in raw:
        key = doc.clauses
        if key not in first:
            order.append(key)
            first[key] = doc
            pairs[key] = set(doc.pairs)
        else:
            pairs[key] |= doc.pairs
    return Corpus(
        tuple(
            Document(first[k].doc_id, k, frozenset(pairs[k])) for k in order
        )
    )


def split_corpus(corpus: Corpus, train_ratio: float = 0.9, seed: int = 0) -> tuple[Corpus, Corpus]:
    if not 0.0 < train_ratio <= 1.0:
        raise ValueError(f"train_ratio must be in (0, 1], got {train_ratio}")
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")
    idx = list(range(len(corpus)))
    random.Random(seed).shuffle(idx)
    n_train = int(train_ratio * len(corpus) + 1e-9)
    docs = corpus.documents
    return (
        Corpus(tuple(docs[i] for i in idx[:n_train])),
        Corpus(tuple(docs[i] for i in idx[n_train:])),
    )


@dataclass
class CorpusStats:
    n_docs: int
    pair_buckets: dict[str, int]
    clause_counts: dict[int, int]
    n_pairs: int = 0

    @property
    def percentages(self) -> dict[str, float]:
        if self.n_docs == 0:
            return {k: 0.0 for k in self.pair_buckets}
        return {k: 100.0 * v / self.n_docs for k, v in self.pair_buckets.items()}

    def format_table(self) -> str:
        labels = {
            "1": "Documents with one emotion-cause pair",
            "2": "Documents with two emotion-cause pairs",
            ">2": "Documents with more than two emotion-cause pairs",
        }
        pct = self.percentages
        width = max(len(v) for v in labels.values())
        lines = [f"{'':<{width}}  {'Number':>8}  {'Percentage':>10}"]
        for key, label in labels.items():
            lines.append(f"{label:<{width}}  {self.pair_buckets[key]:>8}  {pct[key]:>9.2f}%")
        total = 100.0 if self.n_docs else 0.0
        lines.append(f"{'All':<{width}}  {self.n_docs:>8}  {total:>9.2f}%")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "n_pairs": self.n_pairs,
            "pair_buckets": dict(self.pair_buckets),
            "pair_percentages": self.percentages,
            "clause_counts": {str(k): v for k, v in sorted(self.clause_counts.items())},
        }


def corpus_stats(corpus: Corpus) -> CorpusStats:
    buckets = {"1": 0, "2": 0, ">2": 0}
    clause_counts: dict[int, int] = {}
    n_pairs = 0
    for doc in corpus:
        k = len(doc.pairs)
        n_pairs += k
        if k == 1:
            buckets["1"] += 1
        elif k == 2:
            buckets["2"] += 1
        elif k > 2:
            buckets[">2"] += 1
        clause_counts[len(doc)] = clause_counts.get(len(doc), 0) + 1
    return CorpusStats(len(corpus), buckets, clause_counts, n_pairs)
