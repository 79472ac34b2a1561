"""Vocabulary and word-vector tables."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus

logger = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1
INIT_SCALE = 0.01


class EmbeddingError(ValueError):
    pass


class Vocabulary:
    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [PAD, UNK]:
            raise ValueError("vocabulary must start with PAD and UNK")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}
        if len(self.stoi) != len(tokens):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    counts = Counter(tok for doc in corpus for clause in doc.clauses for tok in clause)
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    return Vocabulary([PAD, UNK, *kept])


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        if self.matrix.ndim != 2:
            raise EmbeddingError("embedding matrix must be 2-D")
        if not np.all(np.isfinite(self.matrix)):
            raise EmbeddingError("embedding matrix has non-finite entries")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def random_embeddings(vocab: Vocabulary, d_w: int, seed: int = 0, trainable: bool = True) -> EmbeddingTable:
    rng = np.random.default_rng(seed)
    mat = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(len(vocab), d_w))
    mat[PAD_ID] = 0.0
    return EmbeddingTable(mat, trainable)


def load_word_vectors(path, vocab: Vocabulary, d_w: int = 200, seed: int = 0,
                      trainable: bool = True) -> EmbeddingTable:
    """Read a textual word2vec file and align it to ``vocab``.

    Tokens missing from the file (UNK included) get U(-0.01, 0.01) rows; PAD is zero.
    """
    table = random_embeddings(vocab, d_w, seed, trainable)
    mat = table.matrix
    found = 0
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise EmbeddingError("line 1: expected header 'count dim'")
        dim = int(header[1])
        if dim != d_w:
            raise EmbeddingError(f"dimension mismatch: file has {dim}, expected {d_w}")
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if not parts or parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"line {lineno}: expected {dim + 1} fields, got {len(parts)}"
                )
            tok = parts[0]
            idx = vocab.stoi.get(tok)
            if idx is None or idx == PAD_ID:
                continue
            try:
                mat[idx] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise EmbeddingError(f"line {lineno}: non-numeric vector value") from None
            found += 1
    logger.info("loaded %d/%d vocabulary vectors from %s", found, len(vocab) - 2, path)
    return EmbeddingTable(mat, trainable)


def lookup_clause(table: EmbeddingTable, vocab: Vocabulary, clause, max_len: int = 30):
    """Embed one clause into a ``(max_len, d_w)`` matrix; returns ``(matrix, valid_len)``."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    ids = vocab.encode(clause[:max_len])
    out = np.zeros((max_len, table.dim), dtype=table.matrix.dtype)
    out[: len(ids)] = table.matrix[ids]
    return out, len(ids)
