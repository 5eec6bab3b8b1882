"""Deterministic Lloyd's k-means with k-means++ seeding.

Written in-tree rather than delegated to a library so that the
initialization stream, the stopping rule, and the empty-cluster repair
are fully pinned: identical (features, k, seed) inputs always produce
identical assignments.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # (n, k) matrix of squared Euclidean distances.
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[rng.integers(n)]
    d2 = np.sum((points - centroids[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            choice = int(rng.integers(n))
        else:
            choice = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[choice]
        d2 = np.minimum(d2, np.sum((points - centroids[j]) ** 2, axis=1))
    return centroids


def _repair_empty_clusters(
    assignment: np.ndarray, centroids: np.ndarray, points: np.ndarray
) -> np.ndarray:
    # Refill each empty cluster with the point farthest from its current
    # centroid, stealing only from clusters that keep >= 1 member.
    counts = np.bincount(assignment, minlength=centroids.shape[0])
    for j in np.flatnonzero(counts == 0):
        dist = np.sqrt(np.sum((points - centroids[assignment]) ** 2, axis=1))
        dist[counts[assignment] <= 1] = -np.inf
        thief = int(np.argmax(dist))
        counts[assignment[thief]] -= 1
        assignment[thief] = j
        counts[j] += 1
    return assignment


def kmeans_cluster(
    features: Sequence[np.ndarray] | np.ndarray,
    k: int,
    seed: int = 42,
    max_iters: int = 100,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster feature vectors; returns (assignment, centroids).

    ``assignment`` maps each input row to a cluster in [0, k); every
    cluster is nonempty.  Iteration stops after ``max_iters`` rounds or
    once the largest centroid displacement drops below ``tol``.
    """
    points = np.asarray(features, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"features must be a 2-D array, got shape {points.shape}")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of feature vectors ({n})")
    if np.isnan(points).any():
        raise ValueError("features contain NaN")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    assignment = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        assignment = np.argmin(_squared_distances(points, centroids), axis=1)
        assignment = _repair_empty_clusters(assignment, centroids, points)
        new_centroids = np.empty_like(centroids)
        for j in range(k):
            new_centroids[j] = points[assignment == j].mean(axis=0)
        shift = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if shift < tol:
            break
    assignment = np.argmin(_squared_distances(points, centroids), axis=1)
    assignment = _repair_empty_clusters(assignment, centroids, points)
    return assignment, centroids
