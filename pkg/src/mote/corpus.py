"""Timestamped document corpora: temporal partitioning and synthetic drift.

Documents are whitespace-tokenized, single-label, and carry a demographic
group tag. A corpus is a chronologically ordered list of time domains; the
most recent domain is the adaptation target. The generator produces corpora
whose token and label distributions drift linearly across domains.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CorpusError",
    "CorpusFormatError",
    "Document",
    "TimeDomain",
    "TemporalCorpus",
    "DriftConfig",
    "partition_by_time",
    "downsample_to_smallest",
    "split_train_test",
    "generate_drift_corpus",
    "drift_class_priors",
    "drift_token_distributions",
    "load_documents",
    "save_documents",
]

DOMAIN_SPAN = 1000  # synthetic timestamps: domain t covers [(t-1)*SPAN, t*SPAN)

# Token distributions mix a heavy, peaky shared background (era style
# markers, the dominant axis of variation that makes eras clusterable) with
# light per-class token signatures; drift moves both components.
_BACKGROUND_WEIGHT = 0.9
_SIGNAL_ALPHA = 12.0  # total Dirichlet concentration of a class signature
_BACKGROUND_ALPHA = 10.0  # total Dirichlet concentration of a background
_PRIOR_DECAY = 3.0  # base class priors fall off geometrically by this ratio


class CorpusError(ValueError):
    """Corpus-level precondition violated."""


class CorpusFormatError(CorpusError):
    """Malformed corpus file; message carries path and line number."""


@dataclass(frozen=True)
class Document:
    id: str
    tokens: tuple[str, ...]
    label: int
    timestamp: int
    group: int | str
    language: str = "syn"

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError(f"document {self.id!r} has no tokens")
        if self.label < 0:
            raise CorpusError(f"document {self.id!r} has a negative label")


@dataclass(frozen=True)
class TimeDomain:
    """One contiguous time interval of a corpus, 1-based index."""

    index: int
    interval: tuple[int, int]
    documents: tuple[Document, ...]

    @property
    def size(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class TemporalCorpus:
    domains: tuple[TimeDomain, ...]
    num_classes: int
    groups: tuple

    def __post_init__(self):
        for earlier, later in zip(self.domains, self.domains[1:]):
            if earlier.interval[1] > later.interval[0]:
                raise CorpusError(
                    f"domain intervals overlap or are unordered: "
                    f"{earlier.interval} then {later.interval}"
                )

    @property
    def target_index(self) -> int:
        """1-based index of the target (most recent) domain."""
        return self.domains[-1].index

    @property
    def target_domain(self) -> TimeDomain:
        return self.domains[-1]

    @property
    def source_domains(self) -> tuple[TimeDomain, ...]:
        return self.domains[:-1]

    def all_documents(self) -> list[Document]:
        return [doc for domain in self.domains for doc in domain.documents]


@dataclass(frozen=True)
class DriftConfig:
    vocab_size: int = 1000
    num_classes: int = 3
    num_domains: int = 4
    docs_per_domain: int = 500
    doc_len_min: int = 80
    doc_len_max: int = 160
    token_drift: float = 0.6
    label_shift: float = 0.3
    group_balance: float = 0.5
    seed: int = 1

    def __post_init__(self):
        if self.vocab_size < self.num_classes:
            raise CorpusError("vocab_size must be at least num_classes")
        if self.num_classes < 2:
            raise CorpusError("num_classes must be at least 2")
        if self.num_domains < 1:
            raise CorpusError("num_domains must be at least 1")
        if self.docs_per_domain < 10:
            raise CorpusError("docs_per_domain must be at least 10")
        if not (1 <= self.doc_len_min <= self.doc_len_max):
            raise CorpusError("doc length range must satisfy 1 <= min <= max")
        if not (0.0 <= self.token_drift <= 1.0 and 0.0 <= self.label_shift <= 1.0):
            raise CorpusError("token_drift and label_shift must lie in [0, 1]")
        if not (0.0 < self.group_balance < 1.0):
            raise CorpusError("group_balance must lie in (0, 1)")


def partition_by_time(
    documents: Iterable[Document],
    boundaries: Sequence[int],
    num_classes: int | None = None,
) -> TemporalCorpus:
    """Bucket documents into the half-open intervals [b[t], b[t+1])."""
    bounds = list(boundaries)
    if len(bounds) < 2 or any(a >= b for a, b in zip(bounds, bounds[1:])):
        raise CorpusError(f"boundaries must be strictly increasing, got {bounds}")
    buckets: list[list[Document]] = [[] for _ in range(len(bounds) - 1)]
    max_label = -1
    groups = set()
    for doc in documents:
        if doc.timestamp < bounds[0] or doc.timestamp >= bounds[-1]:
            raise CorpusError(
                f"document {doc.id!r} timestamp {doc.timestamp} outside "
                f"[{bounds[0]}, {bounds[-1]})"
            )
        slot = bisect.bisect_right(bounds, doc.timestamp) - 1
        buckets[slot].append(doc)
        max_label = max(max_label, doc.label)
        groups.add(doc.group)
    if num_classes is None:
        num_classes = max_label + 1
    elif max_label >= num_classes:
        raise CorpusError(f"label {max_label} exceeds declared class count {num_classes}")
    domains = tuple(
        TimeDomain(index=t + 1, interval=(bounds[t], bounds[t + 1]), documents=tuple(docs))
        for t, docs in enumerate(buckets)
    )
    return TemporalCorpus(domains=domains, num_classes=num_classes, groups=tuple(sorted(groups, key=repr)))


def downsample_to_smallest(corpus: TemporalCorpus, seed: int) -> TemporalCorpus:
    """Uniformly subsample every domain, without replacement, to the smallest domain size."""
    sizes = [d.size for d in corpus.domains]
    if min(sizes) == 0:
        empty = corpus.domains[int(np.argmin(sizes))]
        raise CorpusError(f"domain {empty.index} is empty; cannot downsample")
    target = min(sizes)
    rng = np.random.default_rng(seed)
    new_domains = []
    for domain in corpus.domains:
        keep = np.sort(rng.choice(domain.size, size=target, replace=False))
        docs = tuple(domain.documents[i] for i in keep)
        new_domains.append(replace(domain, documents=docs))
    return replace(corpus, domains=tuple(new_domains))


def split_train_test(
    domain: TimeDomain, ratio: float = 0.7, seed: int = 0
) -> tuple[list[Document], list[Document]]:
    """Disjoint, exhaustive train/test split with train size = round(ratio * n)."""
    n = domain.size
    if n < 2:
        raise CorpusError(f"domain {domain.index} has {n} documents; need at least 2 to split")
    k = int(round(ratio * n))
    if k < 1 or k >= n:
        raise CorpusError(f"ratio {ratio} leaves an empty train or test side for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:k])
    test_idx = np.sort(perm[k:])
    train = [domain.documents[i] for i in train_idx]
    test = [domain.documents[i] for i in test_idx]
    return train, test


def drift_class_priors(cfg: DriftConfig) -> np.ndarray:
    """Configured per-domain class priors, shape (num_domains, num_classes).

    The base prior falls off geometrically (imbalanced, as in real review
    ratings); domain t interpolates toward the reversed prior with weight
    label_shift * (t-1)/(T-1), so minority classes grow over time.
    """
    c = cfg.num_classes
    base = _PRIOR_DECAY ** np.arange(c - 1, -1, -1, dtype=float)
    base /= base.sum()
    shifted = base[::-1].copy()
    priors = np.empty((cfg.num_domains, c))
    for t in range(cfg.num_domains):
        u = _drift_weight(cfg.label_shift, t, cfg.num_domains)
        priors[t] = (1.0 - u) * base + u * shifted
    return priors


def _drift_weight(rate: float, t: int, num_domains: int) -> float:
    if num_domains == 1:
        return 0.0
    return rate * t / (num_domains - 1)


def drift_token_distributions(cfg: DriftConfig) -> np.ndarray:
    """Configured token distributions, shape (num_domains, num_classes, vocab).

    Each class mixes a shared background with a peaky class signal; domain t
    blends toward a per-class drift distribution with weight
    token_drift * (t-1)/(T-1). Drift changes both the shared background
    (era-wide style change, which makes eras separable in feature space) and
    the class signals, which borrow mass from the next class's signal so
    token-class associations genuinely change over time instead of merely
    rotating marginals.
    """
    rng = np.random.default_rng([cfg.seed, 0])
    v, c = cfg.vocab_size, cfg.num_classes
    alpha = np.full(v, _SIGNAL_ALPHA / v)
    bg_alpha = np.full(v, _BACKGROUND_ALPHA / v)
    background = rng.dirichlet(bg_alpha)
    late_background = rng.dirichlet(bg_alpha)
    base_signals = np.stack([rng.dirichlet(alpha) for _ in range(c)])
    fresh_signals = np.stack([rng.dirichlet(alpha) for _ in range(c)])
    drift_signals = 0.25 * fresh_signals + 0.75 * np.roll(base_signals, -1, axis=0)
    base = _BACKGROUND_WEIGHT * background + (1 - _BACKGROUND_WEIGHT) * base_signals
    drifted = _BACKGROUND_WEIGHT * late_background + (1 - _BACKGROUND_WEIGHT) * drift_signals
    out = np.empty((cfg.num_domains, c, v))
    for t in range(cfg.num_domains):
        w = _drift_weight(cfg.token_drift, t, cfg.num_domains)
        out[t] = (1.0 - w) * base + w * drifted
    return out


def generate_drift_corpus(cfg: DriftConfig) -> TemporalCorpus:
    """Sample a corpus whose token and label distributions drift across domains.

    Fully deterministic per cfg.seed. Domain t owns timestamps in
    [(t-1)*DOMAIN_SPAN, t*DOMAIN_SPAN).
    """
    token_dists = drift_token_distributions(cfg)
    priors = drift_class_priors(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    documents: list[Document] = []
    for t in range(cfg.num_domains):
        lo = t * DOMAIN_SPAN
        for i in range(cfg.docs_per_domain):
            label = int(rng.choice(cfg.num_classes, p=priors[t]))
            length = int(rng.integers(cfg.doc_len_min, cfg.doc_len_max + 1))
            token_ids = rng.choice(cfg.vocab_size, size=length, p=token_dists[t, label])
            group = int(rng.random() < cfg.group_balance)
            timestamp = lo + int(rng.integers(0, DOMAIN_SPAN))
            documents.append(
                Document(
                    id=f"syn-{t + 1:02d}-{i:05d}",
                    tokens=tuple(f"w{tok}" for tok in token_ids),
                    label=label,
                    timestamp=timestamp,
                    group=group,
                )
            )
    boundaries = [t * DOMAIN_SPAN for t in range(cfg.num_domains + 1)]
    return partition_by_time(documents, boundaries, num_classes=cfg.num_classes)


def load_documents(path: str | Path, min_tokens: int = 10) -> list[Document]:
    """Read the tab-separated corpus format.

    One document per line: id, timestamp, label, group, language, and
    space-joined tokens. Lines starting with '#' are comments. Documents
    shorter than min_tokens are dropped. Malformed lines abort with the
    offending line number.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusFormatError(f"corpus file not found: {path}")
    docs: list[Document] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 6:
                raise CorpusFormatError(
                    f"{path}:{lineno}: expected 6 tab-separated fields, got {len(fields)}"
                )
            doc_id, ts_str, label_str, group, language, token_blob = fields
            try:
                timestamp = int(ts_str)
                label = int(label_str)
            except ValueError as exc:
                raise CorpusFormatError(
                    f"{path}:{lineno}: timestamp and label must be integers"
                ) from exc
            tokens = tuple(token_blob.split())
            if not tokens:
                raise CorpusFormatError(f"{path}:{lineno}: document has no tokens")
            if label < 0:
                raise CorpusFormatError(f"{path}:{lineno}: negative label")
            if len(tokens) < min_tokens:
                continue
            docs.append(
                Document(
                    id=doc_id,
                    tokens=tokens,
                    label=label,
                    timestamp=timestamp,
                    group=group,
                    language=language,
                )
            )
    return docs


def save_documents(documents: Iterable[Document], path: str | Path) -> None:
    """Write documents in the format load_documents reads."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in documents:
            fh.write(
                f"{doc.id}\t{doc.timestamp}\t{doc.label}\t{doc.group}\t"
                f"{doc.language}\t{' '.join(doc.tokens)}\n"
            )
