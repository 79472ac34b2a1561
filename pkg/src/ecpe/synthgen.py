"""Synthetic ECPE corpora with planted lexical cues.

Emotion clauses carry an emotion-cue token, cause clauses a cause-cue token,
and every cause sits at one of ``offsets`` relative to its emotion clause.
Layouts are checked so that a cue-plus-geometry rule (:func:`oracle_extract`)
recovers the gold pairs exactly whenever cues are reliable
(``cause_cue_rate = 1`` and no decoys).

Multi-pair documents come in two shapes: one emotion clause with several
causes ("shared"), or several separate emotion/cause blocks whose cross
pairings fall outside ``offsets`` and are therefore never gold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document, EmotionCausePair


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class SynthSpec:
    n_docs: int = 2000
    min_clauses: int = 4
    max_clauses: int = 12
    min_clause_len: int = 3
    max_clause_len: int = 8
    vocab_size: int = 200
    emotion_cues: tuple = ("emo0", "emo1", "emo2", "emo3", "emo4")
    cause_cues: tuple = ("cau0", "cau1", "cau2", "cau3", "cau4")
    offsets: tuple = (-2, -1, 0)
    offset_weights: tuple = ()
    two_pair_rate: float = 0.0910
    many_pair_rate: float = 0.0113
    shared_emotion_rate: float = 0.5
    # below 1.0 some cause clauses lack a cause cue ("weak" cause cues)
    cause_cue_rate: float = 1.0
    # probability that a filler clause carries a misleading cue
    cause_decoy_rate: float = 0.0
    emotion_decoy_rate: float = 0.0
    max_retries: int = 100
    seed: int = 0
    doc_prefix: str = "syn"

    def validate(self):
        if self.n_docs < 0:
            raise SynthError("n_docs must be >= 0")
        if not 1 <= self.min_clauses <= self.max_clauses:
            raise SynthError("need 1 <= min_clauses <= max_clauses")
        if not 1 <= self.min_clause_len <= self.max_clause_len:
            raise SynthError("need 1 <= min_clause_len <= max_clause_len")
        if self.vocab_size < 1 or not self.emotion_cues or not self.cause_cues or not self.offsets:
            raise SynthError("vocab, cue lists and offsets must be non-empty")
        if self.offset_weights and len(self.offset_weights) != len(self.offsets):
            raise SynthError("offset_weights must match offsets")
        if set(self.emotion_cues) & set(self.cause_cues):
            raise SynthError("emotion and cause cues must be distinct")
        for name in ("two_pair_rate", "many_pair_rate", "shared_emotion_rate", "cause_cue_rate",
                     "cause_decoy_rate", "emotion_decoy_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthError(f"{name} must be in [0, 1]")
        if self.two_pair_rate + self.many_pair_rate > 1.0:
            raise SynthError("pair-count fractions exceed 1")

    @property
    def fillers(self) -> list[str]:
        return [f"w{i}" for i in range(self.vocab_size)]


def _n_pairs(spec: SynthSpec, rng) -> int:
    u = rng.random()
    if u < spec.many_pair_rate:
        return 3
    if u < spec.many_pair_rate + spec.two_pair_rate:
        return 2
    return 1


def _consistent(pairs, offsets) -> bool:
    """Only gold pairs may look like pairs under the cue-plus-offset rule."""
    emotions = {e for e, _ in pairs}
    causes = {c for _, c in pairs}
    gold = set(pairs)
    for e in emotions:
        for c in causes:
            if (c - e) in offsets and (e, c) not in gold:
                return False
    return True


def _layout(spec: SynthSpec, n_clauses: int, n_pairs: int, rng):
    offsets = list(spec.offsets)
    weights = np.asarray(spec.offset_weights or [1.0] * len(offsets), dtype=float)
    weights = weights / weights.sum()
    shared = n_pairs > 1 and n_pairs <= len(offsets) and rng.random() < spec.shared_emotion_rate
    if shared:
        e = int(rng.integers(1, n_clauses + 1))
        chosen = rng.choice(len(offsets), size=n_pairs, replace=False, p=weights)
        pairs = [(e, e + offsets[k]) for k in chosen]
    else:
        emotions = rng.choice(n_clauses, size=min(n_pairs, n_clauses), replace=False) + 1
        if len(emotions) < n_pairs:
            return None
        pairs = [(int(e), int(e) + offsets[rng.choice(len(offsets), p=weights)]) for e in emotions]
        causes = [c for _, c in pairs]
        if len(set(causes)) != len(causes):
            return None
        # a clause is never the emotion of one block and the cause of another
        emotion_set = {int(x) for x in emotions}
        for e, c in pairs:
            if c != e and c in emotion_set:
                return None
    if any(not 1 <= c <= n_clauses for _, c in pairs):
        return None
    if not _consistent(pairs, set(offsets)):
        return None
    return pairs


def _clause(spec, fillers, rng, cues=()):
    n = int(rng.integers(spec.min_clause_len, spec.max_clause_len + 1))
    toks = [fillers[i] for i in rng.integers(0, spec.vocab_size, size=n)]
    for cue in cues:
        toks.insert(int(rng.integers(0, len(toks) + 1)), cue)
    return toks


def generate_document(spec: SynthSpec, index: int) -> Document:
    rng = np.random.default_rng([spec.seed, index])
    n_pairs = _n_pairs(spec, rng)
    for _ in range(spec.max_retries):
        n_clauses = int(rng.integers(spec.min_clauses, spec.max_clauses + 1))
        pairs = _layout(spec, n_clauses, n_pairs, rng)
        if pairs is not None:
            break
    else:
        raise SynthError(
            f"could not place {n_pairs} pair(s) in {spec.min_clauses}-{spec.max_clauses} clauses "
            f"after {spec.max_retries} attempts"
        )
    emotions = {e for e, _ in pairs}
    causes = {c for _, c in pairs}
    fillers = spec.fillers
    clauses = []
    for i in range(1, n_clauses + 1):
        cues = []
        if i in emotions:
            cues.append(spec.emotion_cues[int(rng.integers(len(spec.emotion_cues)))])
        elif rng.random() < spec.emotion_decoy_rate:
            cues.append(spec.emotion_cues[int(rng.integers(len(spec.emotion_cues)))])
        if i in causes:
            if rng.random() < spec.cause_cue_rate:
                cues.append(spec.cause_cues[int(rng.integers(len(spec.cause_cues)))])
        elif i not in emotions and rng.random() < spec.cause_decoy_rate:
            cues.append(spec.cause_cues[int(rng.integers(len(spec.cause_cues)))])
        clauses.append(_clause(spec, fillers, rng, cues))
    return Document.build(f"{spec.doc_prefix}{index:06d}", clauses, pairs)


def generate_corpus(spec: SynthSpec) -> Corpus:
    spec.validate()
    return Corpus(tuple(generate_document(spec, i) for i in range(spec.n_docs)))


def oracle_extract(doc: Document, spec: SynthSpec):
    """Cue lookup plus the offset rule; returns 1-based ``(E, C, pairs)``."""
    emo_cues = set(spec.emotion_cues)
    cause_cues = set(spec.cause_cues)
    E = {i for i, cl in enumerate(doc.clauses, 1) if emo_cues.intersection(cl)}
    C = {i for i, cl in enumerate(doc.clauses, 1) if cause_cues.intersection(cl)}
    offsets = set(spec.offsets)
    pairs = {EmotionCausePair(e, c) for e in E for c in C if (c - e) in offsets}
    return E, C, pairs
