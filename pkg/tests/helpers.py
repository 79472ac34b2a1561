"""Shared builders for small deterministic models and corpora."""

import dataclasses

import torch

from ecpe.config import TrainConfig
from ecpe.corpus import Corpus, Document
from ecpe.embedding import build_vocab
from ecpe.models import ECPEModel, ModelKind, joint_loss, make_batch
from ecpe.neural import grad_check, uniform_

TINY = TrainConfig(d_w=4, hidden=3, d_att=3, d_lab=2, dtype="float64", epochs=5, batch_size=2)


def toy_doc():
    return Document.build("toy", [["i", "am", "glad"], ["you", "came"], ["to", "see", "me"]], [(1, 2)])


def tiny_config(**kw):
    return dataclasses.replace(TINY, **kw)


def tiny_model(kind: ModelKind, corpus, config=TINY, seed=0):
    vocab = build_vocab(corpus)
    model = ECPEModel(kind, len(vocab), config, generator=torch.Generator().manual_seed(seed))
    return model, vocab


def model_grad_check(kind: ModelKind, seed=0, init_scale=0.5):
    """Finite-difference check of the joint loss of a float64 model on the 3-clause toy doc."""
    corpus = Corpus((toy_doc(),))
    model, vocab = tiny_model(kind, corpus, seed=seed)
    g = torch.Generator().manual_seed(seed + 1)
    with torch.no_grad():
        for p in model.parameters():
            uniform_(p, g, init_scale)
    batch = make_batch(list(corpus), vocab)
    params = dict(model.named_parameters())

    def loss():
        return joint_loss(model(batch), batch.emotion, batch.cause, 0.5)[0]

    return grad_check(loss, params)


def brute_force_prf(proposed, annotated):
    """Count matches with explicit loops; returns (precision, recall, f1, correct, proposed, annotated)."""
    correct = n_prop = n_gold = 0
    for prop, gold in zip(proposed, annotated):
        seen_p, seen_g = [], []
        for x in prop:
            if x not in seen_p:
                seen_p.append(x)
        for x in gold:
            if x not in seen_g:
                seen_g.append(x)
        n_prop += len(seen_p)
        n_gold += len(seen_g)
        for x in seen_p:
            for y in seen_g:
                if x == y:
                    correct += 1
    p = correct / n_prop if n_prop > 0 else 0.0
    r = correct / n_gold if n_gold > 0 else 0.0
    f = 0.0 if p == 0.0 and r == 0.0 else 2 * p * r / (p + r)
    return p, r, f, correct, n_prop, n_gold


def double_loop_pairs(E, C):
    out = []
    for e in sorted(E):
        for c in sorted(C):
            out.append((e, c))
    return out


def random_instance(rng, max_docs=10, max_clauses=8):
    """Random aligned (proposed, annotated) clause sets and pair sets."""
    n_docs = int(rng.integers(0, max_docs + 1))
    pc, gc, pp, gp = [], [], [], []
    for _ in range(n_docs):
        n = int(rng.integers(1, max_clauses + 1))
        pc.append({int(i) for i in rng.integers(1, n + 1, rng.integers(0, n + 1))})
        gc.append({int(i) for i in rng.integers(1, n + 1, rng.integers(0, n + 1))})
        pp.append({(int(a), int(b)) for a, b in rng.integers(1, n + 1, (rng.integers(0, 5), 2))})
        gp.append({(int(a), int(b)) for a, b in rng.integers(1, n + 1, (rng.integers(0, 5), 2))})
    return pc, gc, pp, gp


# criterion id -> (status, detail); printed by the terminal summary hook in conftest
ACCEPTANCE_RESULTS = {}


def record(key, passed, detail):
    ACCEPTANCE_RESULTS[key] = ("PASS" if passed else "FAIL", detail)
    return passed
