"""Step 1: hierarchical Bi-LSTM multi-task models for emotion and cause clauses.

Three architectures share the word-level encoder (Bi-LSTM + attention giving a
clause vector ``s_i``) and differ in the clause-level upper layer:

* ``indep``    -- two independent clause-level Bi-LSTMs, one per task.
* ``inter-ec`` -- the emotion branch runs first; its per-clause label is
  embedded and concatenated to ``s_i`` as input of the cause branch.
* ``inter-ce`` -- the same with the roles swapped.

With ``bound=True`` the interaction uses gold labels instead of predictions.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch
from torch import nn

from .config import TrainConfig
from .corpus import Corpus, Document
from .embedding import EmbeddingTable, Vocabulary, PAD_ID
from .neural import (
    AdditiveAttention,
    BiLSTM,
    NumericError,
    OptimizerState,
    SoftmaxHead,
    adam_step,
    cross_entropy,
    dropout,
    load_checkpoint,
    save_checkpoint,
    uniform_,
)

logger = logging.getLogger(__name__)

DTYPES = {"float32": torch.float32, "float64": torch.float64}


class Architecture(str, Enum):
    INDEP = "indep"
    INTER_EC = "inter-ec"
    INTER_CE = "inter-ce"


@dataclass(frozen=True)
class ModelKind:
    arch: Architecture
    label_source: str = "predicted"

    @classmethod
    def from_config(cls, config: TrainConfig) -> "ModelKind":
        return cls(Architecture(config.model), "gold" if config.bound else "predicted")

    @property
    def bound(self) -> bool:
        return self.arch is not Architecture.INDEP and self.label_source == "gold"

    @property
    def name(self) -> str:
        label = {"indep": "Indep", "inter-ec": "Inter-EC", "inter-ce": "Inter-CE"}[self.arch.value]
        return f"{label}-Bound" if self.bound else label


# --- batching ---------------------------------------------------------------


@dataclass
class Batch:
    doc_ids: list
    tokens: torch.Tensor        # (docs, clauses, words) token ids
    clause_lens: torch.Tensor   # (docs, clauses); 0 marks a padded clause
    doc_lens: torch.Tensor      # (docs,)
    emotion: torch.Tensor       # (docs, clauses) gold 0/1
    cause: torch.Tensor

    @property
    def clause_mask(self) -> torch.Tensor:
        return self.clause_lens > 0


def make_batch(docs, vocab: Vocabulary, max_len: int = 30, max_clauses: int = 75) -> Batch:
    n_cl = max(min(len(d), max_clauses) for d in docs)
    n_w = max(min(len(c), max_len) for d in docs for c in d.clauses[:max_clauses])
    tokens = np.full((len(docs), n_cl, n_w), PAD_ID, dtype=np.int64)
    clause_lens = np.zeros((len(docs), n_cl), dtype=np.int64)
    emotion = np.zeros((len(docs), n_cl), dtype=np.int64)
    cause = np.zeros((len(docs), n_cl), dtype=np.int64)
    for i, doc in enumerate(docs):
        if len(doc) > max_clauses:
            logger.debug("doc %s truncated to %d clauses", doc.doc_id, max_clauses)
        for j, clause in enumerate(doc.clauses[:max_clauses]):
            ids = vocab.encode(clause[:max_len])
            tokens[i, j, : len(ids)] = ids
            clause_lens[i, j] = len(ids)
        for e, c in doc.pairs:
            if e <= max_clauses:
                emotion[i, e - 1] = 1
            if c <= max_clauses:
                cause[i, c - 1] = 1
    clause_lens_t = torch.from_numpy(clause_lens)
    return Batch([d.doc_id for d in docs], torch.from_numpy(tokens), clause_lens_t,
                 (clause_lens_t > 0).sum(1), torch.from_numpy(emotion), torch.from_numpy(cause))


# --- model ------------------------------------------------------------------


@dataclass
class ClausePrediction:
    """Batched step-1 outputs; padded clauses are masked by ``mask``."""

    emotion: torch.Tensor   # (docs, clauses, 2)
    cause: torch.Tensor
    s: torch.Tensor         # (docs, clauses, 2h) attention-pooled clause vectors
    r_emotion: torch.Tensor
    r_cause: torch.Tensor
    mask: torch.Tensor
    label_input: torch.Tensor | None = None  # embedded labels fed across branches


def hard_labels(prob: torch.Tensor) -> torch.Tensor:
    """Argmax over {0, 1}; an exact tie resolves to 0."""
    return (prob[..., 1] > prob[..., 0]).long()


class ECPEModel(nn.Module):
    def __init__(self, kind: ModelKind, vocab_size: int, config: TrainConfig,
                 embeddings: np.ndarray | None = None, generator: torch.Generator | None = None):
        super().__init__()
        dtype = DTYPES[config.dtype]
        g = generator if generator is not None else torch.Generator().manual_seed(config.seed)
        self.kind = kind
        self.config = config
        h2 = 2 * config.hidden

        emb = torch.empty(vocab_size, config.d_w, dtype=dtype)
        if embeddings is None:
            uniform_(emb, g)
        else:
            if embeddings.shape != (vocab_size, config.d_w):
                raise ValueError(f"embedding table shape {embeddings.shape} does not match "
                                 f"({vocab_size}, {config.d_w})")
            emb.copy_(torch.from_numpy(np.asarray(embeddings)))
        emb[PAD_ID] = 0.0
        self.embedding = nn.Parameter(emb, requires_grad=config.train_embeddings)

        self.word_lstm = BiLSTM(config.d_w, config.hidden, g, dtype)
        self.attention = AdditiveAttention(h2, config.d_att, g, dtype)
        arch = kind.arch
        emo_in = h2 + (config.d_lab if arch is Architecture.INTER_CE else 0)
        cause_in = h2 + (config.d_lab if arch is Architecture.INTER_EC else 0)
        self.emotion_lstm = BiLSTM(emo_in, config.hidden, g, dtype)
        self.cause_lstm = BiLSTM(cause_in, config.hidden, g, dtype)
        self.emotion_head = SoftmaxHead(h2, 2, g, dtype)
        self.cause_head = SoftmaxHead(h2, 2, g, dtype)
        if arch is not Architecture.INDEP:
            self.label_embedding = nn.Parameter(uniform_(torch.empty(2, config.d_lab, dtype=dtype), g))
        else:
            self.label_embedding = None

    @property
    def dtype(self):
        return self.embedding.dtype

    def head_weight_names(self) -> dict[str, str]:
        return {"emotion": "emotion_head.w", "cause": "cause_head.w"}

    def encode_clauses(self, batch: Batch, training=False, generator=None) -> torch.Tensor:
        mask = batch.clause_mask
        tokens = batch.tokens[mask]                 # (n_clauses, words)
        lens = batch.clause_lens[mask]
        x = self.embedding[tokens]
        x = dropout(x, self.config.keep_prob, generator, training)
        hiddens = self.word_lstm(x, lens)
        pooled = self.attention(hiddens, lens)
        s = pooled.new_zeros(*mask.shape, pooled.shape[-1])
        s[mask] = pooled
        return s

    def _label_vectors(self, prob, gold):
        if self.kind.label_source == "gold":
            return self.label_embedding[gold]
        if self.config.soft_labels:
            return prob @ self.label_embedding
        return self.label_embedding[hard_labels(prob.detach())]

    def forward(self, batch: Batch, training=False, generator=None) -> ClausePrediction:
        s = self.encode_clauses(batch, training, generator)
        mask = batch.clause_mask
        lens = batch.doc_lens
        m = mask[..., None].to(s.dtype)
        arch = self.kind.arch
        label_input = None
        if arch is Architecture.INDEP:
            r_e = self.emotion_lstm(s, lens)
            r_c = self.cause_lstm(s, lens)
            p_e = self.emotion_head(r_e)
            p_c = self.cause_head(r_c)
        elif arch is Architecture.INTER_EC:
            r_e = self.emotion_lstm(s, lens)
            p_e = self.emotion_head(r_e)
            label_input = self._label_vectors(p_e, batch.emotion) * m
            r_c = self.cause_lstm(torch.cat([s, label_input], -1), lens)
            p_c = self.cause_head(r_c)
        else:
            r_c = self.cause_lstm(s, lens)
            p_c = self.cause_head(r_c)
            label_input = self._label_vectors(p_c, batch.cause) * m
            r_e = self.emotion_lstm(torch.cat([s, label_input], -1), lens)
            p_e = self.emotion_head(r_e)
        return ClausePrediction(p_e, p_c, s, r_e, r_c, mask, label_input)


def joint_loss(pred: ClausePrediction, emotion_gold, cause_gold, lam: float):
    """``lam * L_e + (1 - lam) * L_c`` with each term a mean cross-entropy over real clauses.

    Returns ``(total, L_e, L_c)``.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must be in [0, 1]")
    mask = pred.mask
    loss_e = cross_entropy(pred.emotion[mask], emotion_gold[mask]).mean()
    loss_c = cross_entropy(pred.cause[mask], cause_gold[mask]).mean()
    return lam * loss_e + (1.0 - lam) * loss_c, loss_e, loss_c


# --- training ---------------------------------------------------------------


@dataclass
class TrainResult:
    model: ECPEModel
    vocab: Vocabulary
    log: list = field(default_factory=list)


def batches(docs, batch_size):
    for i in range(0, len(docs), batch_size):
        yield docs[i : i + batch_size]


@torch.no_grad()
def evaluate_loss(model: ECPEModel, corpus, vocab, batch_size=32) -> dict:
    tot = {"loss": 0.0, "loss_e": 0.0, "loss_c": 0.0}
    n = 0
    cfg = model.config
    for chunk in batches(list(corpus), batch_size):
        batch = make_batch(chunk, vocab, cfg.max_len, cfg.max_clauses)
        pred = model(batch)
        k = int(batch.clause_mask.sum())
        for key, val in zip(tot, joint_loss(pred, batch.emotion, batch.cause, cfg.lam)):
            tot[key] += val.item() * k
        n += k
    return {k: v / max(n, 1) for k, v in tot.items()}


def train(train_set: Corpus, kind: ModelKind, config: TrainConfig, vocab: Vocabulary,
          embeddings: EmbeddingTable | None = None, log_fn=None) -> TrainResult:
    """Train a step-1 model with shuffled minibatches and Adam.

    The L2 penalty touches only the two softmax-head weight matrices and is
    weighted like the task losses (``lam`` for emotion, ``1 - lam`` for cause).
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    config.validate()
    gen = torch.Generator().manual_seed(config.seed)
    model = ECPEModel(kind, len(vocab), config,
                      None if embeddings is None else embeddings.matrix, gen)
    params = {n: p for n, p in model.named_parameters() if p.requires_grad}
    names = model.head_weight_names()
    state = OptimizerState(lr=config.lr, l2=config.l2,
                           l2_scale={names["emotion"]: config.lam, names["cause"]: 1.0 - config.lam})
    docs = list(train_set)
    rng = random.Random(config.seed)
    log = [{"epoch": 0, **evaluate_loss(model, docs, vocab, config.batch_size)}]
    if log_fn:
        log_fn(log[0])
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(docs)
        tot = {"loss": 0.0, "loss_e": 0.0, "loss_c": 0.0}
        n = 0
        for bi, chunk in enumerate(batches(docs, config.batch_size)):
            batch = make_batch(chunk, vocab, config.max_len, config.max_clauses)
            pred = model(batch, training=True, generator=gen)
            losses = joint_loss(pred, batch.emotion, batch.cause, config.lam)
            if not math.isfinite(losses[0].item()):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {bi} "
                    f"(L_e={float(losses[1])}, L_c={float(losses[2])}, docs={batch.doc_ids[:5]}...)"
                )
            grads = torch.autograd.grad(losses[0], list(params.values()), allow_unused=True)
            adam_step(params, dict(zip(params, grads)), state)
            k = int(batch.clause_mask.sum())
            for key, val in zip(tot, losses):
                tot[key] += val.item() * k
            n += k
        entry = {"epoch": epoch, **{k: v / n for k, v in tot.items()}}
        log.append(entry)
        if log_fn:
            log_fn(entry)
    return TrainResult(model, vocab, log)


# --- inference --------------------------------------------------------------


@dataclass
class DocPrediction:
    """Step-1 output for one document (numpy, one row per kept clause)."""

    doc_id: str
    emotion: np.ndarray   # (n, 2)
    cause: np.ndarray
    s: np.ndarray         # (n, 2h)

    def __len__(self):
        return len(self.emotion)


@torch.no_grad()
def predict(model: ECPEModel, corpus, vocab: Vocabulary, batch_size: int = 32) -> list[DocPrediction]:
    model.eval()
    cfg = model.config
    out = []
    for chunk in batches(list(corpus), batch_size):
        batch = make_batch(chunk, vocab, cfg.max_len, cfg.max_clauses)
        pred = model(batch)
        for i, doc_id in enumerate(batch.doc_ids):
            n = int(batch.doc_lens[i])
            out.append(DocPrediction(
                doc_id,
                pred.emotion[i, :n].double().numpy(),
                pred.cause[i, :n].double().numpy(),
                pred.s[i, :n].double().numpy(),
            ))
    return out


def extract_sets(pred) -> tuple[set[int], set[int]]:
    """1-based emotion and cause clause sets (strict argmax, ties excluded)."""
    emo = np.asarray(pred.emotion)
    cau = np.asarray(pred.cause)
    E = {i + 1 for i in range(len(emo)) if emo[i, 1] > emo[i, 0]}
    C = {i + 1 for i in range(len(cau)) if cau[i, 1] > cau[i, 0]}
    return E, C


# --- checkpoints ------------------------------------------------------------


def save_model(path, model: ECPEModel, vocab: Vocabulary) -> None:
    meta = {
        "arch": model.kind.arch.value,
        "label_source": model.kind.label_source,
        "config": {k: getattr(model.config, k) for k in model.config.__dataclass_fields__},
        "vocab": vocab.itos,
    }
    save_checkpoint(path, dict(model.named_parameters()), meta)


def load_model(path) -> tuple[ECPEModel, Vocabulary]:
    tensors, meta = load_checkpoint(path)
    config = TrainConfig(**meta["config"])
    vocab = Vocabulary(meta["vocab"])
    model = ECPEModel(ModelKind(Architecture(meta["arch"]), meta["label_source"]), len(vocab), config)
    own = dict(model.named_parameters())
    if set(own) != set(tensors):
        raise ValueError(f"{path}: parameter names do not match architecture {meta['arch']}")
    with torch.no_grad():
        for name, p in own.items():
            if tuple(p.shape) != tuple(tensors[name].shape):
                raise ValueError(f"{path}: shape mismatch for {name}")
            p.copy_(tensors[name])
    return model, vocab


def gold_sets(doc: Document) -> tuple[set[int], set[int]]:
    return set(doc.emotion_clauses), set(doc.cause_clauses)
