"""Precision / recall / F1 over clause sets and pair sets, run aggregation, and tables."""

from __future__ import annotations

import statistics
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

TASKS = ("emotion", "cause", "pair")


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    correct: int = 0
    proposed: int = 0
    annotated: int = 0

    @classmethod
    def from_counts(cls, correct: int, proposed: int, annotated: int) -> "PRF":
        p = correct / proposed if proposed else 0.0
        r = correct / annotated if annotated else 0.0
        return cls(p, r, f1_score(p, r), correct, proposed, annotated)


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _set_prf(proposed: Sequence[Iterable], annotated: Sequence[Iterable]) -> PRF:
    if len(proposed) != len(annotated):
        raise ValueError(f"{len(proposed)} proposed documents vs {len(annotated)} annotated")
    correct = n_prop = n_gold = 0
    for prop, gold in zip(proposed, annotated):
        prop, gold = set(prop), set(gold)
        correct += len(prop & gold)
        n_prop += len(prop)
        n_gold += len(gold)
    return PRF.from_counts(correct, n_prop, n_gold)


def pair_prf(proposed: Sequence[Iterable], annotated: Sequence[Iterable]) -> PRF:
    """Micro-averaged PRF over per-document sets of (emotion, cause) pairs."""
    return _set_prf(proposed, annotated)


def clause_prf(proposed: Sequence[Iterable], annotated: Sequence[Iterable]) -> PRF:
    """Micro-averaged PRF over per-document sets of clause indices."""
    return _set_prf(proposed, annotated)


@dataclass
class MetricsReport:
    emotion: PRF
    cause: PRF
    pair: PRF
    keep_rate: float = 1.0
    pair_unfiltered: PRF | None = None
    run_id: str = ""
    seed: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        unf = d.get("pair_unfiltered")
        return cls(PRF(**d["emotion"]), PRF(**d["cause"]), PRF(**d["pair"]), d.get("keep_rate", 1.0),
                   PRF(**unf) if unf else None, d.get("run_id", ""), d.get("seed"))


def evaluate_pairs(doc_pairs, corpus, run_id: str = "", seed: int | None = None) -> MetricsReport:
    """Score step-2 output against gold documents (matched by doc_id)."""
    gold = {doc.doc_id: doc for doc in corpus}
    missing = [dp.doc_id for dp in doc_pairs if dp.doc_id not in gold]
    if missing:
        raise KeyError(f"predicted documents not in gold corpus: {missing[:5]}")
    by_id = {dp.doc_id: dp for dp in doc_pairs}
    docs = [gold[i] for i in by_id]
    preds = list(by_id.values())
    emotion = clause_prf([p.emotions for p in preds], [d.emotion_clauses for d in docs])
    cause = clause_prf([p.causes for p in preds], [d.cause_clauses for d in docs])
    pair = pair_prf([p.kept_pairs for p in preds], [d.pairs for d in docs])
    unfiltered = pair_prf([p.all_pairs for p in preds], [d.pairs for d in docs])
    n_all = sum(len(p.candidates) for p in preds)
    n_kept = sum(len(p.kept_pairs) for p in preds)
    keep_rate = n_kept / n_all if n_all else 1.0
    return MetricsReport(emotion, cause, pair, keep_rate, unfiltered, run_id, seed)


def check_filter_monotonicity(report: MetricsReport) -> None:
    """Filtering can only drop candidates: proposed, correct and recall never grow."""
    unf = report.pair_unfiltered
    if unf is None:
        return
    f = report.pair
    if f.proposed > unf.proposed or f.correct > unf.correct or f.recall > unf.recall + 1e-12:
        raise AssertionError(f"filter monotonicity violated: {f} vs unfiltered {unf}")


# --- aggregation ------------------------------------------------------------


FIELDS = ("precision", "recall", "f1")


@dataclass
class AggregateReport:
    """Mean and standard deviation over runs.

    ``mean``/``std`` hold the per-run average of each P, R, F1 (how multi-run
    results are usually reported); ``pooled`` recomputes PRF from summed counts.
    """

    n_runs: int
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    pooled: dict = field(default_factory=dict)

    def prf(self, task: str) -> PRF:
        return PRF(*(self.mean[f"{task}.{f}"] for f in FIELDS))

    @property
    def keep_rate(self) -> float:
        return self.mean["keep_rate"]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        return cls(d["n_runs"], d["mean"], d["std"], d["pooled"])


def _tasks(report: MetricsReport):
    out = {"emotion": report.emotion, "cause": report.cause, "pair": report.pair}
    if report.pair_unfiltered is not None:
        out["pair_unfiltered"] = report.pair_unfiltered
    return out


def aggregate_runs(reports: Sequence[MetricsReport]) -> AggregateReport:
    if not reports:
        raise ValueError("need at least one report")
    values: dict[str, list[float]] = {}
    counts: dict[str, list[int]] = {}
    for rep in reports:
        for task, prf in _tasks(rep).items():
            for f in FIELDS:
                values.setdefault(f"{task}.{f}", []).append(getattr(prf, f))
            c = counts.setdefault(task, [0, 0, 0])
            c[0] += prf.correct
            c[1] += prf.proposed
            c[2] += prf.annotated
        values.setdefault("keep_rate", []).append(rep.keep_rate)
    mean = {k: statistics.fmean(v) for k, v in values.items()}
    std = {k: statistics.pstdev(v) if len(v) > 1 else 0.0 for k, v in values.items()}
    pooled = {}
    for task, (c, p, a) in counts.items():
        prf = PRF.from_counts(c, p, a)
        pooled.update({f"{task}.{f}": getattr(prf, f) for f in FIELDS})
    return AggregateReport(len(reports), mean, std, pooled)


# --- tables -----------------------------------------------------------------


def _cell(value, bound: bool) -> str:
    if value is None:
        return "-"
    return f"#{value:.4f}" if bound else f"{value:.4f}"


def _row_prfs(result, tasks):
    if result is None:
        return [None] * (3 * len(tasks))
    out = []
    for task in tasks:
        if isinstance(result, AggregateReport):
            out.extend(result.mean.get(f"{task}.{f}") for f in FIELDS)
        else:
            prf = _tasks(result).get(task)
            out.extend([None] * 3 if prf is None else [getattr(prf, f) for f in FIELDS])
    return out


def _render(header_groups, rows) -> str:
    name_w = max([len(r[0]) for r in rows] + [8])
    col_w = 9
    head1 = " " * name_w + " | " + " | ".join(
        g.center(col_w * n + 3 * (n - 1)) for g, n in header_groups)
    sub = []
    for g, n in header_groups:
        sub.append(" | ".join(h.rjust(col_w) for h in ["P", "R", "F1", "keep_rate"][:n]))
    head2 = " " * name_w + " | " + " | ".join(sub)
    lines = [head1, head2, "-" * len(head2)]
    for name, cells in rows:
        lines.append(name.ljust(name_w) + " | " + " | ".join(c.rjust(col_w) for c in cells))
    return "\n".join(lines)


def format_prf_table(rows) -> str:
    """Three-task table; ``rows`` are ``(name, result_or_None, bound)``.

    Missing results render as ``-`` and are flagged ``(absent)``.
    """
    body = []
    for name, result, bound in rows:
        cells = [_cell(v, bound) for v in _row_prfs(result, TASKS)]
        body.append((name if result is not None else f"{name} (absent)", cells))
    groups = [("emotion extraction", 3), ("cause extraction", 3), ("emotion-cause pair extraction", 3)]
    return _render(groups, body)


def ablation_report(rows) -> str:
    """With/without-filter pair table plus keep_rate; ``rows`` are ``(name, result_or_None, bound)``.

    Rows evaluated with gold labels (bound) carry a leading ``#`` on their scores.
    """
    body = []
    for name, result, bound in rows:
        if result is None:
            body.append((f"{name} (absent)", ["-"] * 7))
            continue
        vals = _row_prfs(result, ("pair_unfiltered", "pair"))
        keep = result.keep_rate
        body.append((name, [_cell(v, bound) for v in vals] + [f"{keep:.4f}"]))
    groups = [("without pair filtering", 3), ("with pair filtering", 4)]
    return _render(groups, body)
