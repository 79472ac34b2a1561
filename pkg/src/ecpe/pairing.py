"""Step 2: Cartesian pairing of extracted clauses and a logistic-regression pair filter."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import FilterConfig
from .corpus import Corpus, EmotionCausePair
from .models import DocPrediction, ECPEModel, extract_sets, gold_sets, predict
from .embedding import Vocabulary

logger = logging.getLogger(__name__)


class FilterError(RuntimeError):
    pass


def cartesian_pairs(E, C) -> list[EmotionCausePair]:
    return [EmotionCausePair(e, c) for e in sorted(E) for c in sorted(C)]


def distance_onehot(emotion_idx: int, cause_idx: int, k: int) -> np.ndarray:
    """One-hot of ``clamp(cause - emotion, -k, k)``; position ``k`` is offset 0."""
    v = np.zeros(2 * k + 1)
    offset = max(-k, min(k, cause_idx - emotion_idx))
    v[offset + k] = 1.0
    return v


def pair_features(pair, clause_reps: np.ndarray, k: int = 10) -> np.ndarray:
    """``[s_emotion, s_cause, v_distance]`` for a 1-based (emotion, cause) pair."""
    e, c = pair
    n = len(clause_reps)
    if not (1 <= e <= n and 1 <= c <= n):
        raise IndexError(f"pair ({e},{c}) out of range for a {n}-clause document")
    return np.concatenate([clause_reps[e - 1], clause_reps[c - 1], distance_onehot(e, c, k)])


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class CandidatePair:
    emotion_idx: int
    cause_idx: int
    features: np.ndarray = field(repr=False)
    score: float = 0.5
    kept: bool = True

    @property
    def pair(self) -> EmotionCausePair:
        return EmotionCausePair(self.emotion_idx, self.cause_idx)


@dataclass
class FilterModel:
    theta: np.ndarray
    bias: float = 0.0
    k: int = 10
    threshold: float = 0.5

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if not np.all(np.isfinite(self.theta)) or not np.isfinite(self.bias):
            raise FilterError("filter weights must be finite")
        if self.k < 0 or not 0.0 < self.threshold < 1.0:
            raise FilterError("need k >= 0 and threshold in (0, 1)")

    def score(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(np.asarray(X) @ self.theta + self.bias)

    def to_dict(self) -> dict:
        return {"format": "ecpe-filter", "version": 1, "theta": self.theta.tolist(),
                "bias": float(self.bias), "k": self.k, "threshold": self.threshold}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FilterModel":
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        if d.get("format") != "ecpe-filter":
            raise FilterError(f"{path}: not a filter model file")
        return cls(np.array(d["theta"]), d["bias"], d["k"], d["threshold"])


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float = 1e-5, lr: float = 0.05,
                 iterations: int = 500, seed: int = 0, balance: bool = False):
    """Full-batch Adam on mean log-loss + ``(l2/2)||theta||^2`` (bias unpenalised)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-0.01, 0.01, X.shape[1])
    bias = 0.0
    w = np.ones(len(y))
    if balance and 0 < y.sum() < len(y):
        pos = y.sum()
        w = np.where(y == 1, len(y) / (2 * pos), len(y) / (2 * (len(y) - pos)))
    w = w / w.sum()
    m = np.zeros(X.shape[1] + 1)
    v = np.zeros_like(m)
    b1, b2, eps = 0.9, 0.999, 1e-8
    for t in range(1, iterations + 1):
        err = (sigmoid(X @ theta + bias) - y) * w
        g = np.concatenate([X.T @ err + l2 * theta, [err.sum()]])
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        step = lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        theta = theta - step[:-1]
        bias -= step[-1]
    return theta, float(bias)


def build_candidates(E, C, clause_reps, k) -> list[CandidatePair]:
    return [CandidatePair(p.emotion_idx, p.cause_idx, pair_features(p, clause_reps, k))
            for p in cartesian_pairs(E, C)]


def filter_training_data(corpus: Corpus, preds: list[DocPrediction], config: FilterConfig):
    rows, labels = [], []
    for doc, pred in zip(corpus, preds):
        n = len(pred)
        if config.source == "gold":
            E, C = gold_sets(doc)
        else:
            E, C = extract_sets(pred)
        E = {e for e in E if e <= n}
        C = {c for c in C if c <= n}
        for cand in build_candidates(E, C, pred.s, config.k):
            rows.append(cand.features)
            labels.append(1.0 if cand.pair in doc.pairs else 0.0)
    return rows, labels


def train_filter(train_corpus: Corpus, model: ECPEModel, vocab: Vocabulary,
                 config: FilterConfig, preds: list[DocPrediction] | None = None) -> FilterModel:
    """Fit the pair filter on candidates from training documents.

    Clause vectors come from the frozen step-1 model; candidates come from the
    gold or the predicted clause sets depending on ``config.source``.
    """
    config.validate()
    if preds is None:
        preds = predict(model, train_corpus, vocab)
    rows, labels = filter_training_data(train_corpus, preds, config)
    if not rows:
        raise FilterError("no candidate pairs to train the filter on; check the step-1 output")
    X = np.stack(rows)
    y = np.array(labels)
    logger.info("filter training: %d candidates, %.1f%% positive", len(y), 100 * y.mean())
    theta, bias = fit_logistic(X, y, config.l2, config.lr, config.iterations, config.seed, config.balance)
    return FilterModel(theta, bias, config.k, config.threshold)


def score_candidates(candidates: list[CandidatePair], model: FilterModel) -> list[CandidatePair]:
    if candidates:
        scores = model.score(np.stack([c.features for c in candidates]))
        for cand, s in zip(candidates, scores):
            cand.score = float(s)
            cand.kept = bool(s >= model.threshold)
    return candidates


def filter_pairs(candidates: list[CandidatePair], model: FilterModel):
    """Score candidates in place; returns ``(kept, keep_rate)`` with keep_rate 1.0 for no candidates."""
    score_candidates(candidates, model)
    kept = [c for c in candidates if c.kept]
    rate = len(kept) / len(candidates) if candidates else 1.0
    return kept, rate


@dataclass
class DocPairs:
    """Step-2 output for one document; indices are 1-based."""

    doc_id: str
    emotions: set
    causes: set
    candidates: list

    @property
    def all_pairs(self) -> set:
        return {c.pair for c in self.candidates}

    @property
    def kept_pairs(self) -> set:
        return {c.pair for c in self.candidates if c.kept}

    def to_record(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "emotion_clauses": sorted(self.emotions),
            "cause_clauses": sorted(self.causes),
            "pairs": [{"emotion": c.emotion_idx, "cause": c.cause_idx, "score": round(c.score, 6)}
                      for c in self.candidates if c.kept],
            "candidates": [{"emotion": c.emotion_idx, "cause": c.cause_idx,
                            "score": round(c.score, 6), "kept": c.kept} for c in self.candidates],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DocPairs":
        cands = [CandidatePair(c["emotion"], c["cause"], np.zeros(0), c["score"], c["kept"])
                 for c in rec.get("candidates", [])]
        if not cands:
            cands = [CandidatePair(p["emotion"], p["cause"], np.zeros(0), p.get("score", 1.0), True)
                     for p in rec["pairs"]]
        return cls(rec["doc_id"], set(rec.get("emotion_clauses", [])),
                   set(rec.get("cause_clauses", [])), cands)


def extract_pairs(preds: list[DocPrediction], filter_model: FilterModel | None = None,
                  k: int = 10) -> list[DocPairs]:
    """Run step 2 over step-1 predictions.  Without a filter every candidate is kept."""
    if filter_model is not None:
        k = filter_model.k
    out = []
    for pred in preds:
        E, C = extract_sets(pred)
        cands = build_candidates(E, C, pred.s, k)
        if filter_model is not None:
            score_candidates(cands, filter_model)
        out.append(DocPairs(pred.doc_id, E, C, cands))
    return out


def save_pairs(doc_pairs: list[DocPairs], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for dp in doc_pairs:
            fh.write(json.dumps(dp.to_record()) + "\n")


def load_pairs(path) -> list[DocPairs]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(DocPairs.from_record(json.loads(line)))
                except (KeyError, json.JSONDecodeError) as exc:
                    raise FilterError(f"{path}:{lineno}: malformed pairs record ({exc})") from None
    return out
