"""Initial latent assignments for CCCP training.

Three strategies: iid uniform draws, k-means on the pooled segment features,
and k-means on 1-of-N encoded per-segment categorical labels (e.g. object
affordances). Everything is a pure function of its inputs and the seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import HiactError, SegmentSequence, check_labels

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100


class DegenerateInput(HiactError, ValueError):
    pass


@dataclass
class KmeansResult:
    assignments: np.ndarray
    centers: np.ndarray
    sse: float
    # SSE after every Lloyd iteration of the returned restart
    sse_history: list = field(default_factory=list)
    # final SSE of every restart, in run order
    restart_sse: list = field(default_factory=list)


def _sq_dists(points, centers):
    d = (points * points).sum(1)[:, None] - 2.0 * points @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _sse(points, centers, assign):
    return float(((points - centers[assign]) ** 2).sum())


def _plusplus(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    closest = ((points - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = closest.sum()
        probs = closest / total
        idx = int(rng.choice(n, p=probs))
        centers.append(points[idx])
        closest = np.minimum(closest, ((points - points[idx]) ** 2).sum(1))
    return np.array(centers)


def _lloyd(points, centers, max_iter):
    k = len(centers)
    assign = _sq_dists(points, centers).argmin(1)
    history = [_sse(points, centers, assign)]
    for _ in range(max_iter):
        centers = centers.copy()
        for c in range(k):
            members = assign == c
            if members.any():
                centers[c] = points[members].mean(0)
        # an empty cluster takes the point farthest from its own center
        for c in range(k):
            if not (assign == c).any():
                far = int(((points - centers[assign]) ** 2).sum(1).argmax())
                assign[far] = c
                centers[c] = points[far]
        history.append(_sse(points, centers, assign))
        new_assign = _sq_dists(points, centers).argmin(1)
        # keep the current label when it is tied with the argmin
        cur = ((points - centers[assign]) ** 2).sum(1)
        best = ((points - centers[new_assign]) ** 2).sum(1)
        new_assign = np.where(best < cur, new_assign, assign)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        history.append(_sse(points, centers, assign))
    return assign, centers, history


def kmeans(points, k: int, restarts: int = KMEANS_RESTARTS, seed: int = 0,
           max_iter: int = KMEANS_MAX_ITER) -> KmeansResult:
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` runs by SSE."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n_distinct = len(np.unique(points, axis=0)) if len(points) else 0
    if k < 1 or n_distinct < k:
        raise DegenerateInput(f"need at least k={k} distinct points, got {n_distinct}")

    rng = np.random.default_rng(seed)
    best = None
    sses = []
    for _ in range(restarts):
        assign, centers, history = _lloyd(points, _plusplus(points, k, rng), max_iter)
        sse = _sse(points, centers, assign)
        sses.append(sse)
        if best is None or sse < best.sse:
            best = KmeansResult(assign.astype(np.int64), centers, sse, history)
    best.restart_sse = sses
    return best


def _split(flat, lengths):
    return [np.asarray(a, dtype=np.int64) for a in np.split(flat, np.cumsum(lengths)[:-1])]


def init_random(dataset: Sequence[SegmentSequence], n_latent: int, seed: int = 0) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.integers(0, n_latent, size=len(s)) for s in dataset]


def init_kmeans_features(dataset: Sequence[SegmentSequence], n_latent: int,
                         seed: int = 0) -> list[np.ndarray]:
    lengths = [len(s) for s in dataset]
    if n_latent == 1:
        return [np.zeros(n, dtype=np.int64) for n in lengths]
    dims = {s.segments.shape[1] for s in dataset}
    if len(dims) != 1:
        raise DegenerateInput(f"segment dimensions differ across the dataset: {sorted(dims)}")
    points = np.concatenate([s.segments for s in dataset])
    res = kmeans(points, n_latent, restarts=KMEANS_RESTARTS, seed=seed)
    return _split(res.assignments, lengths)


def init_kmeans_categorical(labels: Sequence, n_cats: int, n_latent: int,
                            seed: int = 0) -> list[np.ndarray]:
    """Cluster per-segment categorical labels after 1-of-N encoding.

    ``labels`` holds one id array per sequence.
    """
    labels = [np.asarray(l, dtype=np.int64) for l in labels]
    for l in labels:
        check_labels(l, n_cats, "categorical label")
    lengths = [len(l) for l in labels]
    if n_latent == 1:
        return [np.zeros(n, dtype=np.int64) for n in lengths]
    onehot = np.eye(n_cats)[np.concatenate(labels)]
    res = kmeans(onehot, n_latent, restarts=KMEANS_RESTARTS, seed=seed)
    return _split(res.assignments, lengths)


def initialize(strategy: str, dataset, n_latent: int, seed: int = 0, categories=None,
               n_categories=None) -> list[np.ndarray]:
    if strategy == "random":
        return init_random(dataset, n_latent, seed)
    if strategy == "kmeans_features":
        return init_kmeans_features(dataset, n_latent, seed)
    if strategy == "kmeans_categorical":
        if categories is None:
            raise ValueError("kmeans_categorical initialization needs per-segment categories")
        if n_categories is None:
            n_categories = int(max(int(np.max(c)) for c in categories)) + 1
        return init_kmeans_categorical(categories, n_categories, n_latent, seed)
    raise ValueError(f"unknown init strategy {strategy!r}")
