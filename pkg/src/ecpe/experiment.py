"""Multi-run experiments and table reproduction.

An experiment directory looks like::

    config.txt            resolved configuration
    run_001/              one directory per run (seed = base_seed + run index)
        step1.npz  filter.json  pairs.jsonl  train_log.jsonl  report.json
    aggregate.json        mean / std / pooled metrics over completed runs
    aggregate.txt         the same as text tables

Runs whose ``report.json`` already exists are loaded instead of recomputed.
"""

from __future__ import annotations

import json
import logging
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, ConfigError, dump_config
from .corpus import Corpus, load_corpus, split_corpus
from .embedding import build_vocab, load_word_vectors
from .metrics import (
    AggregateReport,
    MetricsReport,
    ablation_report,
    aggregate_runs,
    check_filter_monotonicity,
    evaluate_pairs,
    format_prf_table,
)
from .models import ModelKind, predict, save_model, train
from .pairing import extract_pairs, save_pairs, train_filter

logger = logging.getLogger(__name__)


@dataclass
class RunOutput:
    report: MetricsReport
    train_result: object
    filter_model: object
    doc_pairs: list


def run_pipeline(train_set: Corpus, test_set: Corpus, config: ExperimentConfig, seed: int,
                 vocab_corpus: Corpus | None = None, run_id: str = "") -> RunOutput:
    """Train step 1 and the filter on ``train_set``, then evaluate on ``test_set``."""
    tcfg = config.train_config(seed)
    vocab = build_vocab(vocab_corpus if vocab_corpus is not None else train_set, tcfg.min_count)
    embeddings = None
    if config.embeddings and not config.random_embeddings:
        embeddings = load_word_vectors(config.embeddings, vocab, tcfg.d_w, seed, tcfg.train_embeddings)
    result = train(train_set, ModelKind.from_config(tcfg), tcfg, vocab, embeddings)
    fcfg = config.filter_config(seed)
    filt = train_filter(train_set, result.model, vocab, fcfg)
    doc_pairs = extract_pairs(predict(result.model, test_set, vocab), filt)
    report = evaluate_pairs(doc_pairs, test_set, run_id, seed)
    check_filter_monotonicity(report)
    return RunOutput(report, result, filt, doc_pairs)


@dataclass
class ExperimentResult:
    directory: Path
    reports: list
    aggregate: AggregateReport | None
    failures: dict = field(default_factory=dict)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_experiment(config: ExperimentConfig, corpus: Corpus | None = None,
                   output_dir=None) -> ExperimentResult:
    config.validate()
    out = Path(output_dir or config.output_dir)
    if not str(out):
        raise ConfigError("output_dir is required")
    if corpus is None:
        if not config.corpus:
            raise ConfigError("corpus path is required")
        corpus = load_corpus(config.corpus)
    out.mkdir(parents=True, exist_ok=True)
    resolved = dump_config(config)
    cfg_path = out / "config.txt"
    if cfg_path.exists() and cfg_path.read_text(encoding="utf-8") != resolved:
        raise ConfigError(f"{out} holds an experiment with a different config")
    cfg_path.write_text(resolved, encoding="utf-8")

    reports, failures = [], {}
    for k in range(1, config.n_runs + 1):
        seed = config.base_seed + k
        run_id = f"run_{k:03d}"
        run_dir = out / run_id
        report_path = run_dir / "report.json"
        if report_path.exists():
            reports.append(MetricsReport.from_dict(json.loads(report_path.read_text())))
            logger.info("%s: loaded existing report", run_id)
            continue
        run_dir.mkdir(exist_ok=True)
        try:
            train_set, test_set = split_corpus(corpus, config.train_ratio, seed)
            res = run_pipeline(train_set, test_set, config, seed, vocab_corpus=corpus, run_id=run_id)
        except Exception as exc:  # recorded per run; the aggregate covers completed runs
            failures[run_id] = repr(exc)
            (run_dir / "error.txt").write_text(traceback.format_exc(), encoding="utf-8")
            logger.warning("%s failed: %r", run_id, exc)
            continue
        save_model(run_dir / "step1.npz", res.train_result.model, res.train_result.vocab)
        res.filter_model.save(run_dir / "filter.json")
        save_pairs(res.doc_pairs, run_dir / "pairs.jsonl")
        with open(run_dir / "train_log.jsonl", "w", encoding="utf-8") as fh:
            for entry in res.train_result.log:
                fh.write(json.dumps(entry) + "\n")
        _write_json(report_path, res.report.to_dict())
        reports.append(res.report)
        logger.info("%s: pair F1 %.4f (unfiltered %.4f), keep_rate %.4f", run_id,
                    res.report.pair.f1, res.report.pair_unfiltered.f1, res.report.keep_rate)

    aggregate = None
    if reports:
        if failures:
            logger.warning("aggregate covers %d/%d runs", len(reports), config.n_runs)
        aggregate = aggregate_runs(reports)
        _write_json(out / "aggregate.json", {**aggregate.to_dict(), "failures": failures})
        name = ModelKind.from_config(config).name
        text = (format_prf_table([(name, aggregate, config.bound)]) + "\n\n"
                + ablation_report([(name, aggregate, config.bound)]) + "\n")
        (out / "aggregate.txt").write_text(text, encoding="utf-8")
    return ExperimentResult(out, reports, aggregate, failures)


def load_aggregate(directory) -> AggregateReport | None:
    path = Path(directory) / "aggregate.json" if directory else None
    if path is None or not path.exists():
        return None
    return AggregateReport.from_dict(json.loads(path.read_text()))


TABLE_ROWS = ("Indep", "Inter-CE", "Inter-EC", "Inter-CE-Bound", "Inter-EC-Bound")


def reproduce_tables(dirs: dict) -> str:
    """Render step-1/pair, bound and filter-ablation tables from experiment directories.

    ``dirs`` maps row names from :data:`TABLE_ROWS` to directories (or ``None``).
    """
    results = {name: load_aggregate(dirs.get(name)) for name in TABLE_ROWS}
    main = [(n, results[n], False) for n in TABLE_ROWS[:3]]
    bound = [(n, results[n], True) for n in TABLE_ROWS[3:]]
    ablation = main + bound
    return "\n\n".join([
        "Results of the step-1 models (mean over runs)\n" + format_prf_table(main),
        "Upper-bound variants (gold labels, marked #)\n" + format_prf_table(bound),
        "Pair extraction with and without the pair filter\n" + ablation_report(ablation),
    ]) + "\n"
