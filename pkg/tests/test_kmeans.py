"""Clustering against a brute-force minimal-WCSS partition oracle."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from cola.kmeans import kmeans_cluster


def partition_of(assignment) -> frozenset:
    groups: dict[int, set[int]] = {}
    for idx, label in enumerate(assignment):
        groups.setdefault(int(label), set()).add(idx)
    return frozenset(frozenset(g) for g in groups.values())


def wcss(points: np.ndarray, assignment) -> float:
    cost = 0.0
    for label in set(int(a) for a in assignment):
        members = points[[i for i, a in enumerate(assignment) if int(a) == label]]
        cost += float(((members - members.mean(axis=0)) ** 2).sum())
    return cost


def brute_force_best_partition(points: np.ndarray, k: int) -> tuple[frozenset, float]:
    """Exhaustive search over all assignments with exactly k nonempty groups."""
    best_cost = float("inf")
    best = None
    for assignment in itertools.product(range(k), repeat=len(points)):
        if len(set(assignment)) != k:
            continue
        cost = wcss(points, assignment)
        if cost < best_cost - 1e-12:
            best_cost = cost
            best = partition_of(assignment)
    return best, best_cost


def planted_blobs(rng, n_blobs: int, sizes, spread=0.05, gap=10.0):
    centers = rng.normal(size=(n_blobs, 3)) * gap + np.arange(n_blobs)[:, None] * 4 * gap
    points, labels = [], []
    for b, size in enumerate(sizes):
        points.extend(centers[b] + rng.normal(scale=spread, size=(size, 3)))
        labels.extend([b] * size)
    return np.array(points), labels


class TestAgainstBruteForce:
    def test_two_planted_blobs(self):
        rng = np.random.default_rng(17)
        points, _ = planted_blobs(rng, 2, (3, 3))
        assignment, _ = kmeans_cluster(points, 2, seed=0)
        expected, _ = brute_force_best_partition(points, 2)
        assert partition_of(assignment) == expected

    @pytest.mark.parametrize("seed", range(8))
    def test_random_planted_instances(self, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(2, 4))
        sizes = [int(rng.integers(1, 4)) for _ in range(k)]
        while sum(sizes) > 8:
            sizes[sizes.index(max(sizes))] -= 1
        points, _ = planted_blobs(rng, k, sizes)
        assignment, _ = kmeans_cluster(points, k, seed=seed)
        expected, best_cost = brute_force_best_partition(points, k)
        assert partition_of(assignment) == expected
        assert wcss(points, assignment) == pytest.approx(best_cost, rel=1e-9)


class TestContracts:
    def test_k_equals_n_puts_every_point_alone(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0]])
        assignment, centroids = kmeans_cluster(points, 4, seed=2)
        assert sorted(assignment) == [0, 1, 2, 3]
        for i, label in enumerate(assignment):
            assert np.allclose(centroids[label], points[i])

    def test_k_one_gives_global_mean(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(10, 5))
        assignment, centroids = kmeans_cluster(points, 1, seed=0)
        assert set(assignment.tolist()) == {0}
        assert np.allclose(centroids[0], points.mean(axis=0))

    def test_determinism(self):
        rng = np.random.default_rng(6)
        points = rng.normal(size=(20, 4))
        a1, c1 = kmeans_cluster(points, 5, seed=99)
        a2, c2 = kmeans_cluster(points, 5, seed=99)
        assert np.array_equal(a1, a2)
        assert np.array_equal(c1, c2)

    def test_all_clusters_nonempty_even_with_duplicates(self):
        points = np.zeros((6, 2))
        points[5] = (9.0, 9.0)
        assignment, _ = kmeans_cluster(points, 3, seed=1)
        assert len(set(assignment.tolist())) == 3

    def test_errors(self):
        points = np.zeros((3, 2))
        with pytest.raises(ValueError, match="k="):
            kmeans_cluster(points, 4)
        with pytest.raises(ValueError, match="k must be"):
            kmeans_cluster(points, 0)
        bad = points.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            kmeans_cluster(bad, 2)
