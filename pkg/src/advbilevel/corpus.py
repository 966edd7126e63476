"""Text ingestion: tokens, vocabulary, binary bag-of-words, time splits.

Pipelines read a UTF-8 TSV corpus (timestamp<TAB>label<TAB>text, ISO dates,
labels 0/1), split it chronologically into a training prefix and per-period
test sets, build a vocabulary from the training split only, and encode every
split as a binary presence matrix.

Also provides a seeded synthetic corpus whose class-1 feature rates drift
toward the class-0 rates over the test periods, a desk-scale stand-in for
text streams whose adversarial class mutates to evade detection.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from .objectives import BowDataset

# alphanumeric runs; \w minus underscore so punctuation and dashes split
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class EmptyVocabularyError(ValueError):
    """No tokens survive stopword removal."""


class CorpusFormatError(ValueError):
    """Malformed corpus TSV input."""


@dataclass(frozen=True)
class Record:
    timestamp: date
    label: int
    text: str


@dataclass(frozen=True)
class Vocabulary:
    """Ranked token list: descending count, ties broken alphabetically."""

    words: Tuple[str, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {w: j for j, w in enumerate(self.words)})

    def __len__(self) -> int:
        return len(self.words)

    def index_of(self, word: str) -> int:
        return self._index.get(word, -1)


@dataclass(frozen=True)
class SplitSpec:
    train_size: int = 2000
    period: str = "year"

    def __post_init__(self):
        if self.train_size < 1:
            raise ValueError("train_size must be at least 1")
        if self.period != "year":
            raise ValueError(f"unsupported period {self.period!r}")


def tokenize(text: str) -> List[str]:
    """Lowercase and split on runs of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


def build_vocabulary(records: Sequence[Record], stopwords: Set[str], q_target: int,
                     count_mode: str = "document") -> Vocabulary:
    """Top q_target training tokens by count, stopwords removed.

    count_mode "document" counts each token once per record (the downstream
    encoding is binary presence); "token" counts every occurrence.
    """
    if q_target < 1:
        raise ValueError("q_target must be at least 1")
    if count_mode not in ("document", "token"):
        raise ValueError(f"unknown count_mode {count_mode!r}")
    if not records:
        raise ValueError("cannot build a vocabulary from an empty training set")
    counts: Counter = Counter()
    for rec in records:
        toks = tokenize(rec.text)
        counts.update(set(toks) if count_mode == "document" else toks)
    for sw in stopwords:
        counts.pop(sw, None)
    if not counts:
        raise EmptyVocabularyError("every training token is a stopword")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:q_target]
    return Vocabulary(tuple(w for w, _ in ranked), tuple(c for _, c in ranked))


def encode(records: Sequence[Record], vocab: Vocabulary) -> BowDataset:
    """Binary presence matrix over the vocabulary, labels and dates copied."""
    if not len(vocab):
        raise ValueError("vocabulary is empty")
    X = np.zeros((len(records), len(vocab)))
    y = np.zeros(len(records))
    for i, rec in enumerate(records):
        for tok in tokenize(rec.text):
            j = vocab.index_of(tok)
            if j >= 0:
                X[i, j] = 1.0
        y[i] = rec.label
    return BowDataset(X, y, timestamps=tuple(r.timestamp for r in records))


def chronological_split(records: Sequence[Record], spec: SplitSpec):
    """Stable time sort; earliest train_size records train, rest per period.

    Returns (train_records, {period_key: records}) with period keys sorted.
    """
    if len(records) < spec.train_size:
        raise ValueError(f"need at least {spec.train_size} records, got {len(records)}")
    ordered = sorted(records, key=lambda r: r.timestamp)
    train = list(ordered[:spec.train_size])
    tests: Dict[str, List[Record]] = {}
    for rec in ordered[spec.train_size:]:
        tests.setdefault(str(rec.timestamp.year), []).append(rec)
    return train, dict(sorted(tests.items()))


def synth_drift_corpus(seed: int, n_total: int, q: int, drift_strength: float,
                       train_size: int = 2000, periods: int = 4) -> List[Record]:
    """Seeded synthetic corpus with an evading class-1 population.

    Class-0 rows draw feature tokens at fixed Bernoulli rates; class-1 rates
    start systematically higher and, over test periods p = 1..periods, are
    interpolated toward the class-0 rates by drift_strength * p / periods.
    At drift_strength = 1 the final period's class-1 rows are statistically
    indistinguishable from class 0.  Training rows (period 0) never drift.

    Tokens are named w000..w{q-1}; timestamps put period p in year 2000 + p.
    """
    if min(n_total, q, train_size, periods) < 1 or n_total < train_size:
        raise ValueError("need n_total >= train_size and positive q, periods")
    if not (0.0 <= drift_strength <= 1.0):
        raise ValueError("drift_strength must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    width = max(3, len(str(q - 1)))
    names = [f"w{j:0{width}d}" for j in range(q)]
    rate0 = rng.uniform(0.05, 0.45, q)
    rate1 = np.minimum(rate0 + rng.uniform(0.25, 0.50, q), 0.95)

    n_test = n_total - train_size
    per_period = [n_test // periods + (1 if p < n_test % periods else 0) for p in range(periods)]
    sizes = [train_size] + per_period

    records: List[Record] = []
    for p, size in enumerate(sizes):
        drift = drift_strength * p / periods
        drifted1 = rate1 + (rate0 - rate1) * drift
        for i in range(size):
            label = int(rng.integers(0, 2))
            rates = rate0 if label == 0 else drifted1
            present = rng.random(q) < rates
            text = " ".join(name for name, on in zip(names, present) if on)
            ts = date(2000 + p, 1, 1) + timedelta(days=i % 360)
            records.append(Record(ts, label, text))
    return records


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def read_corpus_tsv(path) -> List[Record]:
    """Parse timestamp<TAB>label<TAB>text lines; blank lines are skipped."""
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split("\t", 2)
            if len(parts) != 3:
                raise CorpusFormatError(f"{path}:{lineno}: expected 3 tab-separated fields")
            ts_raw, label_raw, text = parts
            try:
                ts = date.fromisoformat(ts_raw)
            except ValueError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad timestamp {ts_raw!r}") from exc
            if label_raw not in ("0", "1"):
                raise CorpusFormatError(f"{path}:{lineno}: label must be 0 or 1, got {label_raw!r}")
            records.append(Record(ts, int(label_raw), text))
    return records


def write_corpus_tsv(records: Iterable[Record], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(f"{rec.timestamp.isoformat()}\t{rec.label}\t{rec.text}\n")


def write_vocabulary(vocab: Vocabulary, path) -> None:
    """Dump word<TAB>count in rank order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word, count in zip(vocab.words, vocab.counts):
            fh.write(f"{word}\t{count}\n")


def read_vocabulary(path) -> Vocabulary:
    words, counts = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                word, count = line.rstrip("\n").split("\t")
                words.append(word)
                counts.append(int(count))
    return Vocabulary(tuple(words), tuple(counts))


def write_encoded(dataset: BowDataset, path) -> None:
    """Dump `n q` header then one `x_1 .. x_q label` row per sample."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{dataset.n} {dataset.q}\n")
        for i in range(dataset.n):
            row = " ".join(str(int(v)) for v in dataset.X[i])
            fh.write(f"{row} {int(dataset.y[i])}\n")


def read_encoded(path) -> BowDataset:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusFormatError(f"{path}: bad header, expected 'n q'")
        n, q = int(header[0]), int(header[1])
        X = np.zeros((n, q))
        y = np.zeros(n)
        for i in range(n):
            vals = fh.readline().split()
            if len(vals) != q + 1:
                raise CorpusFormatError(f"{path}: row {i} has {len(vals)} fields, expected {q + 1}")
            X[i] = [float(v) for v in vals[:q]]
            y[i] = float(vals[q])
    return BowDataset(X, y)


def read_stopwords(path) -> Set[str]:
    """One token per line; blank lines ignored."""
    with open(path, "r", encoding="utf-8") as fh:
        return {line.strip() for line in fh if line.strip()}
