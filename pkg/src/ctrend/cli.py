"""Command-line interface.

Subcommands: ``synth`` (generate seeded synthetic corpora), ``featurize``
(JSONL documents to a corpus directory), ``analyze`` (the full pipeline,
emitting report.json, models.json and per-feed plot CSVs), and
``correlogram`` / ``topwords`` (re-emit plot CSVs from stored models).

Exit codes: 0 success, 1 runtime or data error, 2 usage error. The seed
falls back to the CT_SEED environment variable, then 0.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from datetime import datetime, timedelta, timezone
from zoneinfo import ZoneInfo

from . import __version__
from .corpus import (
    build_vocabulary,
    corpus_content_hash,
    featurize,
    load_corpus,
    read_documents_jsonl,
    store_corpus,
    tfidf_normalize,
)
from .evaluation import HyperGrid, analyze
from .exceptions import BadConfig, CTError
from .reporting import (
    check_corpus_binding,
    load_models,
    write_analysis_outputs,
    write_correlogram_from_models,
    write_topwords_from_models,
)
from .synth import LeaderConfig, ToyConfig, generate_leader, generate_toy, write_generated

log = logging.getLogger("ctrend")


def parse_lags(spec: str) -> tuple[int, ...]:
    """Lag grid syntax: ``1..10``, ``5`` or ``1,2,5``."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(p) for p in spec.split(","))


def parse_kappas(spec: str) -> tuple[float, ...]:
    """Kappa grid syntax: ``1e-5..1e1`` (decades) or ``1e-3,0.1,1``."""
    spec = spec.strip()
    if ".." in spec:
        lo_s, hi_s = spec.split("..", 1)
        lo, hi = math.log10(float(lo_s)), math.log10(float(hi_s))
        lo_i, hi_i = round(lo), round(hi)
        if abs(lo - lo_i) > 1e-9 or abs(hi - hi_i) > 1e-9:
            raise ValueError("kappa ranges must span whole decades, "
                             "e.g. 1e-5..1e1")
        return tuple(10.0 ** k for k in range(lo_i, hi_i + 1))
    return tuple(float(p) for p in spec.split(","))


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("CT_SEED")
    return int(env) if env else 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrend",
        description="Detect trend-setting feeds in a pool of web sources.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--mode", choices=("toy", "leader"), required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--T", type=int, default=2000)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--lag", type=int, default=None,
                   help="planted lead of the trend setter (toy default 3, "
                        "leader default 4)")
    p.add_argument("--feeds", type=int, default=5, help="leader mode: feed count")
    p.add_argument("--vocab-size", type=int, default=12,
                   help="leader mode: vocabulary size")
    p.add_argument("--sparsity", type=float, default=0.5,
                   help="leader mode: fraction of trend-carrying terms")
    p.add_argument("--out", required=True)

    p = sub.add_parser("featurize", help="turn JSONL documents into a corpus")
    p.add_argument("--docs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords", default=None, help="file, one word per line")
    p.add_argument("--stem", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--tfidf", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--bin-hours", type=float, default=1.0)
    p.add_argument("--t0", default=None,
                   help="RFC-3339 window start (default: first document, "
                        "floored to the hour)")
    p.add_argument("--T", type=int, default=None,
                   help="number of bins (default: cover all documents)")
    p.add_argument("--timezone", default="UTC", help="reference timezone")
    p.add_argument("--min-df", type=int, default=1)

    p = sub.add_parser("analyze", help="run the trend-setter pipeline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--lags", default="1..10")
    p.add_argument("--kappas", default="1e-5..1e1")
    p.add_argument("--inner-folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--feeds", default=None,
                   help="comma-separated feed filter (pools still use all feeds)")
    p.add_argument("--baseline-lsa", action="store_true")
    p.add_argument("--shuffle-control", action="store_true")
    p.add_argument("--top-words", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="count", default=0)

    for name in ("correlogram", "topwords"):
        p = sub.add_parser(name, help=f"re-emit {name}.csv from stored models")
        p.add_argument("--models", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--feed", required=True)
        p.add_argument("--out", required=True)
        if name == "topwords":
            p.add_argument("--top", type=int, default=10)

    return parser


def _cmd_synth(args, parser) -> int:
    seed = _resolve_seed(args.seed)
    try:
        if args.mode == "toy":
            cfg = ToyConfig(T=args.T, gamma=args.gamma,
                            lag=args.lag if args.lag is not None else 3,
                            seed=seed)
            corpus = generate_toy(cfg)
        else:
            cfg = LeaderConfig(F=args.feeds, W=args.vocab_size, T=args.T,
                               leader_lag=args.lag if args.lag is not None else 4,
                               trend_sparsity=args.sparsity, gamma=args.gamma,
                               seed=seed)
            corpus = generate_leader(cfg)
    except BadConfig as e:
        parser.error(str(e))
    write_generated(corpus, cfg, args.out)
    print(f"wrote {args.mode} corpus ({corpus.F} feeds, W={corpus.W}, "
          f"T={corpus.T}) to {args.out}")
    return 0


def _floor_to_hour(dt: datetime) -> datetime:
    return dt.replace(minute=0, second=0, microsecond=0)


def _cmd_featurize(args, parser) -> int:
    try:
        tz = ZoneInfo(args.timezone)
    except Exception:
        parser.error(f"unknown timezone {args.timezone!r}")
    docs = [d for d in read_documents_jsonl(args.docs)]
    stopwords = frozenset()
    if args.stopwords:
        with open(args.stopwords, encoding="utf-8") as fh:
            stopwords = frozenset(w.strip().lower() for w in fh if w.strip())
    vocab = build_vocabulary(docs, stopwords, args.stem, args.min_df)

    if args.t0 is not None:
        try:
            t0 = datetime.fromisoformat(args.t0.replace("Z", "+00:00"))
        except ValueError:
            parser.error(f"--t0 is not an RFC-3339 timestamp: {args.t0!r}")
        if t0.tzinfo is None:
            t0 = t0.replace(tzinfo=tz)
    else:
        if not docs:
            parser.error("--t0 is required when the document file is empty")
        t0 = _floor_to_hour(min(d.timestamp for d in docs).astimezone(tz))
    bin_width = timedelta(hours=args.bin_hours)
    if args.T is not None:
        T = args.T
    else:
        span = max(d.timestamp for d in docs) - t0
        T = int(span / bin_width) + 1

    corpus = featurize(docs, vocab, t0, bin_width, T,
                       stopwords=stopwords, stem=args.stem)
    if args.tfidf:
        corpus = tfidf_normalize(corpus)
    store_corpus(corpus, args.out)
    kept = len(docs) - corpus.n_dropped
    print(f"ingested {kept} documents ({corpus.n_dropped} dropped); "
          f"W={corpus.W} terms, {corpus.F} feeds, T={corpus.T} bins -> {args.out}")
    return 0


def _cmd_analyze(args, parser) -> int:
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1
                            else logging.INFO)
    try:
        grid = HyperGrid(parse_lags(args.lags), parse_kappas(args.kappas))
    except ValueError as e:
        parser.error(str(e))
    seed = _resolve_seed(args.seed)
    corpus = load_corpus(args.corpus)
    corpus_hash = corpus_content_hash(args.corpus)
    log.info("loaded corpus %s: %d feeds, W=%d, T=%d (%s)", args.corpus,
             corpus.F, corpus.W, corpus.T, corpus_hash[:12])
    feed_filter = args.feeds.split(",") if args.feeds else None
    result = analyze(corpus, grid, n_folds=args.folds, seed=seed,
                     feed_ids=feed_filter, with_lsa=args.baseline_lsa,
                     with_shuffle=args.shuffle_control, jobs=args.jobs,
                     n_inner=args.inner_folds, top_k=args.top_words)
    log.info("analyzed %d feeds over %d folds (grid: %d lags x %d kappas)",
             len(result.reports), result.n_folds, len(grid.lags),
             len(grid.kappas))
    write_analysis_outputs(result, corpus, corpus_hash, args.out)
    for rank, (feed_id, score) in enumerate(result.ranking.entries, start=1):
        print(f"{rank}. {feed_id} {score:.4f}")
    return 0


def _cmd_reemit(args, parser, kind: str) -> int:
    models = load_models(args.models)
    corpus = load_corpus(args.corpus)
    check_corpus_binding(models, corpus_content_hash(args.corpus))
    if kind == "correlogram":
        write_correlogram_from_models(models, corpus, args.feed, args.out)
    else:
        write_topwords_from_models(models, corpus, args.feed, args.out, args.top)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args, parser)
        if args.command == "featurize":
            return _cmd_featurize(args, parser)
        if args.command == "analyze":
            return _cmd_analyze(args, parser)
        if args.command == "correlogram":
            return _cmd_reemit(args, parser, "correlogram")
        if args.command == "topwords":
            return _cmd_reemit(args, parser, "topwords")
        parser.error(f"unknown command {args.command!r}")
    except CTError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
