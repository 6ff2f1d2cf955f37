"""Clustering-based shift evaluator.

K-means over source-era representations (one cluster per source time
domain), the warmup dataset pairing each representation with its nearest
cluster, and shift vectors measuring a representation's displacement from a
centroid. Ties in nearest-centroid always break to the lowest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "ClusteringError",
    "ClusterModel",
    "WarmupDataset",
    "ShiftVector",
    "fit_clusters",
    "nearest_centroids",
    "build_warmup_dataset",
    "compute_shift_vector",
    "save_centroids",
    "load_centroids",
]


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # (T, d)
    assignments: np.ndarray  # (n,)
    inertia: float
    iterations_run: int
    inertia_history: tuple[float, ...]

    @property
    def num_clusters(self) -> int:
        return self.centroids.shape[0]

    @property
    def width(self) -> int:
        return self.centroids.shape[1]


@dataclass(frozen=True)
class WarmupDataset:
    representations: np.ndarray  # (n, d)
    labels: np.ndarray  # (n,) cluster indices

    def __len__(self) -> int:
        return self.labels.shape[0]


@dataclass(frozen=True)
class ShiftVector:
    vector: np.ndarray
    source_cluster: int


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def nearest_centroids(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid per point; ties go to the lowest index."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != centroids.shape[1]:
        raise ClusteringError(
            f"representation width {points.shape[1]} does not match "
            f"centroid width {centroids.shape[1]}"
        )
    return _squared_distances(points, centroids).argmin(axis=1)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[int(rng.integers(n))]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # remaining mass is zero: every point coincides with a chosen
            # centroid; fall back to the first point not yet chosen exactly
            chosen = {tuple(c) for c in centroids[:j]}
            idx = next(i for i in range(n) if tuple(points[i]) not in chosen)
        centroids[j] = points[idx]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def fit_clusters(
    representations,
    num_clusters: int,
    seed: int,
    max_iters: int = 100,
    tol: float = 1e-8,
) -> ClusterModel:
    """Lloyd's algorithm with k-means++ initialization, deterministic per seed.

    Stops when assignments stabilize or the inertia improvement drops below
    tol. Emptied clusters are reseeded at the point farthest from its
    current centroid.
    """
    points = np.asarray(representations, dtype=float)
    if points.ndim != 2:
        points = np.atleast_2d(points)
    n = points.shape[0]
    if num_clusters < 1:
        raise ClusteringError("num_clusters must be positive")
    distinct = np.unique(points, axis=0).shape[0]
    if distinct < num_clusters:
        raise ClusteringError(
            f"need at least {num_clusters} distinct representations, found {distinct}"
        )
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, num_clusters, rng)
    history: list[float] = []
    prev_assign: np.ndarray | None = None
    assignments = np.zeros(n, dtype=int)
    iterations = 0
    while iterations < max_iters:
        d2 = _squared_distances(points, centroids)
        assignments = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assignments].sum())
        history.append(inertia)
        iterations += 1
        if prev_assign is not None and np.array_equal(assignments, prev_assign):
            break
        if len(history) >= 2 and history[-2] - history[-1] < tol:
            break
        new_centroids = centroids.copy()
        empties = []
        for j in range(num_clusters):
            members = assignments == j
            if members.any():
                new_centroids[j] = points[members].mean(axis=0)
            else:
                empties.append(j)
        if empties:
            # reseed each emptied cluster at a distinct high-cost point
            costs = d2[np.arange(n), assignments]
            farthest = np.argsort(-costs, kind="stable")
            for j, idx in zip(empties, farthest):
                new_centroids[j] = points[idx]
        centroids = new_centroids
        prev_assign = assignments
    return ClusterModel(
        centroids=centroids,
        assignments=assignments,
        inertia=history[-1],
        iterations_run=iterations,
        inertia_history=tuple(history),
    )


def build_warmup_dataset(representations, model: ClusterModel) -> WarmupDataset:
    """Pair each representation with its nearest cluster index."""
    points = np.atleast_2d(np.asarray(representations, dtype=float))
    labels = nearest_centroids(points, model.centroids)
    return WarmupDataset(representations=points, labels=labels)


def compute_shift_vector(z, model: ClusterModel, cluster: int) -> ShiftVector:
    """Displacement of a representation from centroid `cluster`."""
    z = np.asarray(z, dtype=float).reshape(-1)
    if not 0 <= cluster < model.num_clusters:
        raise IndexError(f"cluster index {cluster} out of range [0, {model.num_clusters})")
    if z.shape[0] != model.width:
        raise ClusteringError(
            f"representation width {z.shape[0]} does not match centroid width {model.width}"
        )
    return ShiftVector(vector=z - model.centroids[cluster], source_cluster=cluster)


def save_centroids(model: ClusterModel, path: str | Path) -> None:
    """One centroid per line, space-separated reals."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in model.centroids:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_centroids(path: str | Path) -> np.ndarray:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split()])
    return np.asarray(rows)
