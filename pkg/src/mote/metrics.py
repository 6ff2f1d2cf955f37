"""Evaluation metrics and the cross-era performance-variation matrix.

Conventions, applied everywhere: macro-F1 averages over all declared
classes (absent classes contribute 0); samples-F1 degenerates to accuracy
for single-label records; AUC is one-vs-rest with midranks for ties; the
fairness score sums, over groups, the absolute gap between each group's
false positive/negative rate and the overall rate, averaged over classes.
Rates with an empty denominator are 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import Document, TemporalCorpus, split_train_test

__all__ = [
    "MetricError",
    "EvalRecord",
    "MetricReport",
    "TemporalEffectMatrix",
    "records_from_probs",
    "macro_f1",
    "samples_f1",
    "auc_macro",
    "fairness_equality_difference",
    "group_rate_breakdown",
    "metric_report",
    "temporal_effect_matrices",
    "METRIC_FUNCTIONS",
]


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalRecord:
    true_label: int
    pred_label: int
    scores: tuple[float, ...]  # length C, one score per class
    group: int | str


@dataclass(frozen=True)
class MetricReport:
    f1_macro: float
    f1_samples: float
    auc_macro: float
    fair: float
    group_rates: dict
    auc_skipped_classes: tuple[int, ...]

    def as_row(self) -> dict[str, float]:
        return {
            "f1_macro": self.f1_macro,
            "f1_samples": self.f1_samples,
            "auc_macro": self.auc_macro,
            "fair": self.fair,
        }


@dataclass(frozen=True)
class TemporalEffectMatrix:
    metric: str
    p: np.ndarray  # (T, T): train on row domain, test on column domain
    delta: np.ndarray  # p_ij - p_jj
    seeds: tuple[int, ...]


def records_from_probs(
    documents: Sequence[Document], probs: np.ndarray
) -> list[EvalRecord]:
    probs = np.asarray(probs, dtype=float)
    if probs.shape[0] != len(documents):
        raise MetricError(f"{probs.shape[0]} score rows for {len(documents)} documents")
    return [
        EvalRecord(
            true_label=doc.label,
            pred_label=int(np.argmax(row)),
            scores=tuple(float(v) for v in row),
            group=doc.group,
        )
        for doc, row in zip(documents, probs)
    ]


def _num_classes(records: Sequence[EvalRecord]) -> int:
    if not records:
        raise MetricError("no evaluation records")
    c = len(records[0].scores)
    for r in records:
        if len(r.scores) != c:
            raise MetricError("records carry inconsistent score widths")
        if not (0 <= r.true_label < c and 0 <= r.pred_label < c):
            raise MetricError(f"label outside [0, {c})")
    return c


def macro_f1(records: Sequence[EvalRecord]) -> float:
    """Unweighted mean of per-class F1 over all declared classes."""
    c = _num_classes(records)
    true = np.array([r.true_label for r in records])
    pred = np.array([r.pred_label for r in records])
    scores = []
    for k in range(c):
        tp = int(np.sum((true == k) & (pred == k)))
        fp = int(np.sum((true != k) & (pred == k)))
        fn = int(np.sum((true == k) & (pred != k)))
        denom = 2 * tp + fp + fn
        scores.append(2.0 * tp / denom if denom else 0.0)
    return float(np.mean(scores))


def samples_f1(records: Sequence[EvalRecord]) -> float:
    """Per-sample F1; for single-label records this is exactly accuracy."""
    _num_classes(records)
    return float(np.mean([r.true_label == r.pred_label for r in records]))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.shape[0])
    i = 0
    while i < values.shape[0]:
        j = i
        while j + 1 < values.shape[0] and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _auc_per_class(records: Sequence[EvalRecord]) -> tuple[dict[int, float], tuple[int, ...]]:
    c = _num_classes(records)
    true = np.array([r.true_label for r in records])
    scores = np.array([r.scores for r in records])
    per_class: dict[int, float] = {}
    skipped = []
    for k in range(c):
        positives = true == k
        n_pos = int(positives.sum())
        n_neg = len(records) - n_pos
        if n_pos == 0 or n_neg == 0:
            skipped.append(k)
            continue
        ranks = _midranks(scores[:, k])
        rank_sum = float(ranks[positives].sum())
        per_class[k] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    return per_class, tuple(skipped)


def auc_macro(records: Sequence[EvalRecord]) -> float:
    """One-vs-rest AUC via the rank-sum formulation, averaged over classes
    that have both a positive and a negative example."""
    per_class, _ = _auc_per_class(records)
    if not per_class:
        raise MetricError("no class has both positive and negative examples")
    return float(np.mean(list(per_class.values())))


def _rate(numerator: int, denominator: int) -> float:
    return numerator / denominator if denominator else 0.0


def _fpr_fnr(true: np.ndarray, pred: np.ndarray, k: int) -> tuple[float, float]:
    fp = int(np.sum((true != k) & (pred == k)))
    tn = int(np.sum((true != k) & (pred != k)))
    fn = int(np.sum((true == k) & (pred != k)))
    tp = int(np.sum((true == k) & (pred == k)))
    return _rate(fp, fp + tn), _rate(fn, fn + tp)


def group_rate_breakdown(records: Sequence[EvalRecord]) -> dict:
    """Per-class overall and per-group FPR/FNR; `defined` marks non-empty
    denominators."""
    c = _num_classes(records)
    groups = sorted({r.group for r in records}, key=repr)
    true = np.array([r.true_label for r in records])
    pred = np.array([r.pred_label for r in records])
    membership = {g: np.array([r.group == g for r in records]) for g in groups}
    breakdown: dict = {}
    for k in range(c):
        overall = _fpr_fnr(true, pred, k)
        by_group = {}
        for g in groups:
            m = membership[g]
            fpr, fnr = _fpr_fnr(true[m], pred[m], k)
            neg = int(np.sum(true[m] != k))
            pos = int(np.sum(true[m] == k))
            by_group[g] = {
                "fpr": fpr,
                "fnr": fnr,
                "fpr_defined": neg > 0,
                "fnr_defined": pos > 0,
            }
        breakdown[k] = {"overall": {"fpr": overall[0], "fnr": overall[1]}, "groups": by_group}
    return breakdown


def fairness_equality_difference(records: Sequence[EvalRecord]) -> float:
    """Sum of FPR and FNR equality differences, averaged over classes."""
    groups = {r.group for r in records}
    if len(groups) < 2:
        raise MetricError("fairness needs at least two demographic groups")
    breakdown = group_rate_breakdown(records)
    ed_fpr = []
    ed_fnr = []
    for per_class in breakdown.values():
        overall = per_class["overall"]
        ed_fpr.append(
            sum(abs(g["fpr"] - overall["fpr"]) for g in per_class["groups"].values())
        )
        ed_fnr.append(
            sum(abs(g["fnr"] - overall["fnr"]) for g in per_class["groups"].values())
        )
    return float(np.mean(ed_fpr) + np.mean(ed_fnr))


METRIC_FUNCTIONS: dict[str, Callable[[Sequence[EvalRecord]], float]] = {
    "f1_macro": macro_f1,
    "f1_samples": samples_f1,
    "auc_macro": auc_macro,
    "fair": fairness_equality_difference,
}


def metric_report(records: Sequence[EvalRecord]) -> MetricReport:
    per_class_auc, skipped = _auc_per_class(records)
    if not per_class_auc:
        raise MetricError("no class has both positive and negative examples")
    return MetricReport(
        f1_macro=macro_f1(records),
        f1_samples=samples_f1(records),
        auc_macro=float(np.mean(list(per_class_auc.values()))),
        fair=fairness_equality_difference(records),
        group_rates=group_rate_breakdown(records),
        auc_skipped_classes=skipped,
    )


TrainerFn = Callable[[Sequence[Document], int], Callable[[Sequence[Document]], list[EvalRecord]]]


def temporal_effect_matrices(
    corpus: TemporalCorpus,
    trainer: TrainerFn,
    metrics: Mapping[str, Callable[[Sequence[EvalRecord]], float]],
    seeds: Sequence[int],
    split_ratio: float = 0.7,
) -> dict[str, TemporalEffectMatrix]:
    """Train on each domain's train split, evaluate on every domain's test
    split, and average p_ij over seeds. delta_ij = p_ij - p_jj."""
    if not seeds:
        raise MetricError("at least one seed required")
    t = len(corpus.domains)
    totals = {name: np.zeros((t, t)) for name in metrics}
    for seed in seeds:
        splits = [split_train_test(dom, split_ratio, seed) for dom in corpus.domains]
        for i, (train_docs, _) in enumerate(splits):
            try:
                predictor = trainer(train_docs, seed)
            except Exception as exc:
                raise RuntimeError(
                    f"training failed for source domain {i + 1}, seed {seed}"
                ) from exc
            for j, (_, test_docs) in enumerate(splits):
                try:
                    records = predictor(test_docs)
                except Exception as exc:
                    raise RuntimeError(
                        f"evaluation failed for domain pair ({i + 1}, {j + 1}), seed {seed}"
                    ) from exc
                for name, fn in metrics.items():
                    totals[name][i, j] += fn(records)
    out = {}
    for name, total in totals.items():
        p = total / len(seeds)
        delta = p - p.diagonal()[None, :]
        out[name] = TemporalEffectMatrix(metric=name, p=p, delta=delta, seeds=tuple(seeds))
    return out
