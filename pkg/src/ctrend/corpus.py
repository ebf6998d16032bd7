"""Bag-of-words feature time series on a shared vocabulary and hourly grid.

Raw timestamped documents are tokenized, binned onto a regular time axis
and counted into one sparse term-by-time matrix per feed. The resulting
corpus can be tf-idf normalized and stored/loaded losslessly as a
directory of ``meta.json`` + ``matrix.csv``.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from . import __version__
from .exceptions import (
    AlreadyNormalized,
    EmptyCorpus,
    FormatError,
    NoBins,
    UnknownFeed,
)
from .stemmer import stem as porter_stem

FORMAT_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_NUMERIC_RE = re.compile(r"\d+")


@dataclass(frozen=True)
class Document:
    """One raw document: a feed id, a timezone-aware timestamp and text."""

    feed_id: str
    timestamp: datetime
    text: str

    def __post_init__(self):
        if not self.feed_id:
            raise ValueError("feed_id must be non-empty")
        if self.timestamp.tzinfo is None:
            raise ValueError("timestamp must be timezone-aware")


class Vocabulary:
    """Ordered term list with a term -> index bijection."""

    def __init__(self, terms: Sequence[str]):
        terms = list(terms)
        if len(set(terms)) != len(terms):
            raise ValueError("vocabulary terms must be unique")
        self.terms = terms
        self.index = {t: i for i, t in enumerate(terms)}

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.terms == other.terms

    def __repr__(self) -> str:
        return f"Vocabulary({len(self.terms)} terms)"


@dataclass
class FeedSeries:
    """Sparse term-by-time matrix (W x T) for one feed."""

    feed_id: str
    matrix: sp.csc_matrix

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeedSeries) or self.feed_id != other.feed_id:
            return False
        return _sparse_equal(self.matrix, other.matrix)


@dataclass
class Corpus:
    """Shared vocabulary + regular time axis + one FeedSeries per feed."""

    vocabulary: Vocabulary
    t0: datetime
    bin_hours: float
    T: int
    feeds: list[FeedSeries]
    normalization: str = "counts"  # "counts" | "tfidf"
    synthetic: bool = False
    n_dropped: int = field(default=0, compare=False)

    @property
    def W(self) -> int:
        return len(self.vocabulary)

    @property
    def F(self) -> int:
        return len(self.feeds)

    @property
    def feed_ids(self) -> list[str]:
        return [f.feed_id for f in self.feeds]

    def feed(self, feed_id: str) -> FeedSeries:
        for f in self.feeds:
            if f.feed_id == feed_id:
                return f
        raise UnknownFeed(f"no feed named {feed_id!r}")

    def validate(self):
        """Check shape consistency, finiteness and (non-synthetic) sign."""
        ids = self.feed_ids
        if len(set(ids)) != len(ids):
            raise ValueError("feed ids must be unique")
        if self.normalization not in ("counts", "tfidf"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        for f in self.feeds:
            if f.matrix.shape != (self.W, self.T):
                raise ValueError(
                    f"feed {f.feed_id!r} has shape {f.matrix.shape}, "
                    f"expected {(self.W, self.T)}"
                )
            if f.matrix.nnz and not np.all(np.isfinite(f.matrix.data)):
                raise ValueError(f"feed {f.feed_id!r} contains non-finite values")
            if not self.synthetic and f.matrix.nnz and f.matrix.data.min() < 0:
                raise ValueError(f"feed {f.feed_id!r} contains negative values")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Corpus)
            and self.vocabulary == other.vocabulary
            and self.t0 == other.t0
            and self.bin_hours == other.bin_hours
            and self.T == other.T
            and self.normalization == other.normalization
            and self.synthetic == other.synthetic
            and self.feeds == other.feeds
        )


def _sparse_equal(a: sp.spmatrix, b: sp.spmatrix) -> bool:
    if a.shape != b.shape:
        return False
    d = (a - b).tocoo()
    return d.nnz == 0 or not np.any(d.data)


def tokenize(text: str, stopwords: frozenset[str] | set[str] = frozenset(),
             stem: bool = False) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop numbers and stop words.

    Porter stemming is applied after stop word removal when ``stem`` is on.
    Total function: empty or all-noise input yields an empty list.
    """
    out = []
    for tok in _TOKEN_RE.findall(text.lower()):
        if _NUMERIC_RE.fullmatch(tok):
            continue
        if tok in stopwords:
            continue
        out.append(porter_stem(tok) if stem else tok)
    return out


def build_vocabulary(docs: Iterable[Document],
                     stopwords: frozenset[str] | set[str] = frozenset(),
                     stem: bool = False, min_df: int = 1) -> Vocabulary:
    """Collect all tokens across documents into a sorted vocabulary.

    ``min_df`` keeps only terms appearing in at least that many documents.
    Raises EmptyCorpus when nothing survives.
    """
    df: dict[str, int] = {}
    for doc in docs:
        for term in set(tokenize(doc.text, stopwords, stem)):
            df[term] = df.get(term, 0) + 1
    terms = sorted(t for t, n in df.items() if n >= min_df)
    if not terms:
        raise EmptyCorpus("no term survived tokenization and filtering")
    return Vocabulary(terms)


def featurize(docs: Iterable[Document], vocab: Vocabulary, t0: datetime,
              bin_width: timedelta = timedelta(hours=1), T: int = 0,
              feeds: Sequence[str] | None = None,
              stopwords: frozenset[str] | set[str] = frozenset(),
              stem: bool = False) -> Corpus:
    """Count term occurrences into per-feed W x T matrices.

    Cell (w, t) of feed f is the number of occurrences of term w in
    documents of feed f whose timestamp falls in bin t. Documents outside
    [t0, t0 + T*bin_width) are dropped and counted in ``Corpus.n_dropped``.
    Order of documents does not matter. When ``feeds`` is None the feed
    list is inferred from the documents (sorted); otherwise every
    document's feed_id must be in ``feeds``.
    """
    if T <= 0:
        raise NoBins(f"need at least one time bin, got T={T}")
    if t0.tzinfo is None:
        raise ValueError("t0 must be timezone-aware")
    bin_seconds = bin_width.total_seconds()

    docs = list(docs)
    if feeds is None:
        feed_list = sorted({d.feed_id for d in docs})
    else:
        feed_list = list(feeds)
        known = set(feed_list)
        for d in docs:
            if d.feed_id not in known:
                raise UnknownFeed(f"document feed {d.feed_id!r} has no feed slot")
    slot = {fid: i for i, fid in enumerate(feed_list)}

    W = len(vocab)
    rows: list[list[int]] = [[] for _ in feed_list]
    cols: list[list[int]] = [[] for _ in feed_list]
    dropped = 0
    for d in docs:
        t = math.floor((d.timestamp - t0).total_seconds() / bin_seconds)
        if t < 0 or t >= T:
            dropped += 1
            continue
        fi = slot[d.feed_id]
        for term in tokenize(d.text, stopwords, stem):
            w = vocab.index.get(term)
            if w is not None:
                rows[fi].append(w)
                cols[fi].append(t)

    series = []
    for fi, fid in enumerate(feed_list):
        m = sp.coo_matrix(
            (np.ones(len(rows[fi])), (rows[fi], cols[fi])), shape=(W, T)
        ).tocsc()
        m.sum_duplicates()
        series.append(FeedSeries(fid, m))
    corpus = Corpus(vocab, t0, bin_seconds / 3600.0, T, series,
                    normalization="counts", n_dropped=dropped)
    corpus.validate()
    return corpus


def tfidf_normalize(c: Corpus) -> Corpus:
    """Scale each term row by its pooled inverse document frequency.

    The document frequency df(w) counts (feed, bin) cells with a positive
    count anywhere in the pool; idf(w) = ln(F*T / (1 + df(w))), clamped at
    zero so ubiquitous terms are zeroed out rather than negated.
    """
    if c.normalization == "tfidf":
        raise AlreadyNormalized("corpus is already tf-idf normalized")
    df = np.zeros(c.W)
    for f in c.feeds:
        df += np.asarray((f.matrix > 0).sum(axis=1)).ravel()
    n_cells = c.F * c.T
    with np.errstate(divide="ignore"):
        idf = np.log(n_cells / (1.0 + df))
    idf = np.maximum(idf, 0.0)
    scale = sp.diags(idf)
    feeds = []
    for f in c.feeds:
        m = (scale @ f.matrix).tocsc()
        m.eliminate_zeros()
        feeds.append(FeedSeries(f.feed_id, m))
    return Corpus(c.vocabulary, c.t0, c.bin_hours, c.T, feeds,
                  normalization="tfidf", synthetic=c.synthetic,
                  n_dropped=c.n_dropped)


# ---------------------------------------------------------------------------
# disk format

def _fmt17(x: float) -> str:
    """Format a float with 17 significant digits (lossless round trip)."""
    return format(float(x), ".17g")


def _parse_rfc3339(s: str) -> datetime:
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as e:
        raise FormatError(f"bad RFC-3339 timestamp {s!r}: {e}") from None
    if dt.tzinfo is None:
        raise FormatError(f"timestamp {s!r} lacks a timezone offset")
    return dt


def store_corpus(c: Corpus, directory: str | Path) -> Path:
    """Write ``meta.json`` and ``matrix.csv``; returns the directory path."""
    c.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "vocabulary": c.vocabulary.terms,
        "feeds": c.feed_ids,
        "t0": c.t0.isoformat(),
        "bin_hours": c.bin_hours,
        "T": c.T,
        "normalization": c.normalization,
        "synthetic": c.synthetic,
        "tool_version": __version__,
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    lines = ["feed_index,term_index,time_index,value"]
    for fi, f in enumerate(c.feeds):
        coo = f.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for w, t, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            lines.append(f"{fi},{w},{t},{_fmt17(v)}")
    (directory / "matrix.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return directory


def load_corpus(directory: str | Path) -> Corpus:
    """Inverse of :func:`store_corpus`; the round trip is bit-exact."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read corpus meta {meta_path}: {e}") from None
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"unsupported corpus format: expected version {FORMAT_VERSION}, "
            f"found {version!r}"
        )
    for key in ("vocabulary", "feeds", "t0", "bin_hours", "T", "normalization"):
        if key not in meta:
            raise FormatError(f"corpus meta is missing key {key!r}")

    vocab = Vocabulary(meta["vocabulary"])
    feed_ids = meta["feeds"]
    T = int(meta["T"])
    W = len(vocab)
    rows = [[] for _ in feed_ids]
    cols = [[] for _ in feed_ids]
    vals = [[] for _ in feed_ids]
    csv_path = directory / "matrix.csv"
    with open(csv_path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "feed_index,term_index,time_index,value":
            raise FormatError(f"bad matrix.csv header: {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                fi_s, w_s, t_s, v_s = line.split(",")
                fi, w, t, v = int(fi_s), int(w_s), int(t_s), float(v_s)
            except ValueError:
                raise FormatError(
                    f"bad matrix.csv row at line {lineno}: {line!r}"
                ) from None
            if not (0 <= fi < len(feed_ids) and 0 <= w < W and 0 <= t < T):
                raise FormatError(f"index out of range at line {lineno}: {line!r}")
            rows[fi].append(w)
            cols[fi].append(t)
            vals[fi].append(v)
    feeds = [
        FeedSeries(fid, sp.coo_matrix((vals[i], (rows[i], cols[i])),
                                      shape=(W, T)).tocsc())
        for i, fid in enumerate(feed_ids)
    ]
    corpus = Corpus(vocab, _parse_rfc3339(meta["t0"]), float(meta["bin_hours"]),
                    T, feeds, normalization=meta["normalization"],
                    synthetic=bool(meta.get("synthetic", False)))
    corpus.validate()
    return corpus


def corpus_content_hash(directory: str | Path) -> str:
    """sha256 over meta.json and matrix.csv, used to bind models to data."""
    directory = Path(directory)
    h = hashlib.sha256()
    for name in ("meta.json", "matrix.csv"):
        h.update((directory / name).read_bytes())
    return h.hexdigest()


def read_documents_jsonl(path: str | Path) -> Iterator[Document]:
    """Yield documents from a JSON-lines file.

    Each line is {"feed": str, "timestamp": RFC-3339 str, "text": str}.
    Raises FormatError naming the offending line number on malformed input.
    """
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                feed = obj["feed"]
                ts = obj["timestamp"]
                text = obj["text"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FormatError(f"malformed document at line {lineno}: {e}") from None
            try:
                yield Document(feed, _parse_rfc3339(ts), text)
            except (FormatError, ValueError) as e:
                raise FormatError(f"malformed document at line {lineno}: {e}") from None
