"""Independent brute-force oracles the tests check the library against.

Deliberately naive implementations: confusion tables by loops, AUC by
all-pairs comparison, k-means optimum by exhaustive assignment enumeration.
They share no code with the library paths they verify.
"""

from __future__ import annotations

import itertools

import numpy as np


def oracle_macro_f1(true, pred, num_classes):
    scores = []
    for c in range(num_classes):
        tp = fp = fn = 0
        for t, p in zip(true, pred):
            if p == c and t == c:
                tp += 1
            elif p == c and t != c:
                fp += 1
            elif p != c and t == c:
                fn += 1
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return sum(scores) / num_classes


def oracle_accuracy(true, pred):
    return sum(int(t == p) for t, p in zip(true, pred)) / len(true)


def oracle_auc_pairs(true, scores, num_classes):
    """One-vs-rest AUC by counting concordant pairs; ties count half."""
    per_class = []
    for c in range(num_classes):
        pos = [s[c] for t, s in zip(true, scores) if t == c]
        neg = [s[c] for t, s in zip(true, scores) if t != c]
        if not pos or not neg:
            continue
        wins = 0.0
        for sp in pos:
            for sn in neg:
                if sp > sn:
                    wins += 1.0
                elif sp == sn:
                    wins += 0.5
        per_class.append(wins / (len(pos) * len(neg)))
    if not per_class:
        raise ValueError("no evaluable class")
    return sum(per_class) / len(per_class)


def _oracle_rates(true, pred, c):
    fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
    tn = sum(1 for t, p in zip(true, pred) if t != c and p != c)
    fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
    tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
    fpr = fp / (fp + tn) if (fp + tn) else 0.0
    fnr = fn / (fn + tp) if (fn + tp) else 0.0
    return fpr, fnr


def oracle_fairness(true, pred, groups, num_classes):
    """Sum of per-class-mean FPR and FNR equality differences."""
    group_names = sorted(set(groups), key=repr)
    ed_fpr_total = 0.0
    ed_fnr_total = 0.0
    for c in range(num_classes):
        fpr_all, fnr_all = _oracle_rates(true, pred, c)
        for g in group_names:
            sub = [(t, p) for t, p, gg in zip(true, pred, groups) if gg == g]
            fpr_g, fnr_g = _oracle_rates([t for t, _ in sub], [p for _, p in sub], c)
            ed_fpr_total += abs(fpr_g - fpr_all)
            ed_fnr_total += abs(fnr_g - fnr_all)
    return ed_fpr_total / num_classes + ed_fnr_total / num_classes


def oracle_kmeans_optimum(points: np.ndarray, k: int) -> float:
    """Global k-means objective by enumerating every assignment (tiny n only)."""
    n = points.shape[0]
    best = np.inf
    for assignment in itertools.product(range(k), repeat=n):
        inertia = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if assignment[i] == c]]
            if len(members):
                centroid = members.mean(axis=0)
                inertia += float(((members - centroid) ** 2).sum())
        best = min(best, inertia)
    return best


def oracle_nearest_centroid(point: np.ndarray, centroids: np.ndarray) -> int:
    best_j, best_d = 0, np.inf
    for j, c in enumerate(centroids):
        d = float(((point - c) ** 2).sum())
        if d < best_d:
            best_j, best_d = j, d
    return best_j
