"""Command-line driver.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import torch

from .config import ConfigError, ExperimentConfig, from_mapping, load_config, parse_kv
from .corpus import CorpusError, corpus_stats, load_corpus, merge_documents, save_corpus
from .embedding import EmbeddingError, build_vocab, load_word_vectors
from .experiment import TABLE_ROWS, reproduce_tables, run_experiment
from .metrics import ablation_report, evaluate_pairs, format_prf_table
from .models import ModelKind, load_model, predict, save_model, train
from .neural import NumericError
from .pairing import FilterError, FilterModel, extract_pairs, load_pairs, save_pairs, train_filter
from .synthgen import SynthError, SynthSpec, generate_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("ecpe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _experiment_config(args) -> ExperimentConfig:
    cfg = load_config(ExperimentConfig, args.config) if args.config else ExperimentConfig()
    overrides = {}
    for key in ("model", "corpus", "embeddings", "output_dir", "n_runs", "seed", "epochs"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "bound", False):
        overrides["bound"] = True
    if getattr(args, "random_embeddings", False):
        overrides["random_embeddings"] = True
    for item in getattr(args, "set", None) or []:
        overrides.update(parse_kv(item))
    return from_mapping(ExperimentConfig, overrides, base=cfg)


def cmd_prepare_corpus(args):
    raw = load_corpus(args.inp)
    merged = merge_documents(raw)
    save_corpus(merged, args.out)
    print(f"{len(raw)} raw documents -> {len(merged)} merged documents")
    if args.stats:
        print(corpus_stats(merged).format_table())


def cmd_synth(args):
    spec = load_config(SynthSpec, args.spec) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = from_mapping(SynthSpec, {"seed": args.seed}, base=spec)
    corpus = generate_corpus(spec)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} documents to {args.out}")
    print(corpus_stats(corpus).format_table())


def cmd_train(args):
    cfg = _experiment_config(args)
    if not cfg.corpus:
        raise UsageError("a training corpus is required (--corpus or 'corpus' config key)")
    corpus = load_corpus(cfg.corpus)
    vocab = build_vocab(corpus, cfg.min_count)
    tcfg = cfg.train_config(cfg.seed)
    embeddings = None
    if cfg.embeddings and not cfg.random_embeddings:
        embeddings = load_word_vectors(cfg.embeddings, vocab, tcfg.d_w, tcfg.seed, tcfg.train_embeddings)
    log_fh = open(args.log, "w", encoding="utf-8") if args.log else sys.stdout

    def emit(entry):
        log_fh.write(json.dumps(entry) + "\n")
        log_fh.flush()

    try:
        result = train(corpus, ModelKind.from_config(tcfg), tcfg, vocab, embeddings, log_fn=emit)
    finally:
        if args.log:
            log_fh.close()
    save_model(args.out, result.model, vocab)
    filter_out = args.filter_out or str(Path(args.out).with_suffix(".filter.json"))
    filt = train_filter(corpus, result.model, vocab, cfg.filter_config(cfg.seed))
    filt.save(filter_out)
    logger.info("saved step-1 checkpoint to %s and filter to %s", args.out, filter_out)


def cmd_pair(args):
    model, vocab = load_model(args.step1)
    corpus = load_corpus(args.inp)
    filt = None if args.no_filter else FilterModel.load(args.filter)
    doc_pairs = extract_pairs(predict(model, corpus, vocab), filt)
    save_pairs(doc_pairs, args.out)
    n_all = sum(len(d.candidates) for d in doc_pairs)
    n_kept = sum(len(d.kept_pairs) for d in doc_pairs)
    print(f"{len(doc_pairs)} documents, {n_kept}/{n_all} candidate pairs kept")


def _report_paths(report: str) -> tuple[Path, Path]:
    path = Path(report)
    if path.suffix == ".json":
        return path.with_suffix(".txt"), path
    return path, Path(str(path) + ".json")


def cmd_evaluate(args):
    doc_pairs = load_pairs(args.pred)
    gold = load_corpus(args.gold)
    report = evaluate_pairs(doc_pairs, gold)
    name = args.name
    text = format_prf_table([(name, report, args.bound)]) + "\n\n" + \
        ablation_report([(name, report, args.bound)]) + "\n"
    print(text, end="")
    if args.report:
        txt, js = _report_paths(args.report)
        txt.write_text(text, encoding="utf-8")
        js.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")


def cmd_run_experiment(args):
    cfg = _experiment_config(args)
    result = run_experiment(cfg)
    print((result.directory / "aggregate.txt").read_text(encoding="utf-8") if result.aggregate
          else "no run completed")
    if result.failures:
        print(f"{len(result.failures)} run(s) failed: {', '.join(result.failures)}", file=sys.stderr)
        if not result.reports:
            return EXIT_DATA


def cmd_reproduce_tables(args):
    dirs = {name: getattr(args, name.lower().replace("-", "_")) for name in TABLE_ROWS}
    text = reproduce_tables(dirs)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecpe", description="Two-step emotion-cause pair extraction.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare-corpus", help="merge duplicate-text documents")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats", action="store_true", help="print the pairs-per-document histogram")
    p.set_defaults(func=cmd_prepare_corpus)

    p = sub.add_parser("synth", help="generate a synthetic planted-cue corpus")
    p.add_argument("--spec", help="key = value spec file (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    def add_config_args(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--corpus")
        p.add_argument("--embeddings", help="textual word2vec file")
        p.add_argument("--random-embeddings", action="store_true")
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("train", help="train a step-1 model and its pair filter")
    p.add_argument("--model", choices=["indep", "inter-ec", "inter-ce"])
    p.add_argument("--bound", action="store_true", help="feed gold labels across branches")
    add_config_args(p)
    p.add_argument("--out", required=True, help="step-1 checkpoint (.npz)")
    p.add_argument("--filter-out", help="filter model file (default: <out>.filter.json)")
    p.add_argument("--log", help="write the per-epoch JSONL log here instead of stdout")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("pair", help="extract emotion-cause pairs with a trained model")
    p.add_argument("--step1", required=True)
    p.add_argument("--filter")
    p.add_argument("--no-filter", action="store_true")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("evaluate", help="score a pairs file against a gold corpus")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--report", help="text report path; a .json record is written alongside")
    p.add_argument("--name", default="model")
    p.add_argument("--bound", action="store_true", help="mark scores with '#'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run-experiment", help="repeated split/train/evaluate runs")
    p.add_argument("--model", choices=["indep", "inter-ec", "inter-ce"])
    p.add_argument("--bound", action="store_true")
    add_config_args(p)
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--n-runs", dest="n_runs", type=int)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("reproduce-tables", help="format result tables from experiment dirs")
    for name in TABLE_ROWS:
        p.add_argument(f"--{name.lower()}", dest=name.lower().replace("-", "_"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_reproduce_tables)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    if args.command == "pair" and not args.no_filter and not args.filter:
        parser.error("pair needs --filter or --no-filter")
    try:
        code = args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, EmbeddingError, FilterError, SynthError, OSError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return code or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
