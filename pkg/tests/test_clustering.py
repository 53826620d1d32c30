import itertools

import numpy as np
import pytest

from saferl.clustering import KMeansModel, assign, fit_kmeans


def brute_force_best_partition(points, k):
    """Minimum-WCSS assignment by enumerating every labeling (tiny inputs only)."""
    n = len(points)
    best = None
    best_obj = np.inf
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) != k:
            continue
        labels = np.array(labels)
        obj = 0.0
        cents = []
        for j in range(k):
            cluster = points[labels == j]
            c = cluster.mean(axis=0)
            cents.append(c)
            obj += ((cluster - c) ** 2).sum()
        if obj < best_obj:
            best_obj = obj
            best = np.array(cents)
    return best, best_obj


def test_single_cluster_is_mean():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    model = fit_kmeans(pts, 1, seed=0)
    assert np.allclose(model.centroids, [[0.5, 0.5]])
    assert model.k == 1


def test_two_clusters_match_enumeration_oracle():
    pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    oracle_cents, oracle_obj = brute_force_best_partition(pts, 2)
    model = fit_kmeans(pts, 2, seed=3)
    assert model.objective == pytest.approx(oracle_obj, abs=1e-9)
    got = sorted(map(tuple, model.centroids))
    want = sorted(map(tuple, oracle_cents))
    assert np.allclose(got, want)


def test_k_equals_n_gives_zero_objective():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(6, 3))
    model = fit_kmeans(pts, 6, seed=5)
    assert model.objective == 0.0
    assert sorted(model.assignments.tolist()) == list(range(6))


def test_argument_errors():
    pts = np.zeros((3, 2))
    with pytest.raises(ValueError):
        fit_kmeans(pts, 4)
    with pytest.raises(ValueError):
        fit_kmeans(pts, 0)
    with pytest.raises(ValueError):
        fit_kmeans(np.zeros((0, 2)), 1)


def test_assign_exact_hit_and_tie_break():
    model = KMeansModel(
        centroids=np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0], [9.0, 9.0]]),
        assignments=np.zeros(1, dtype=int),
        k=4,
        objective=0.0,
    )
    assert assign(model, np.array([9.0, 9.0])) == 3  # exact hit
    assert assign(model, np.array([1.0, 0.0])) == 0  # equidistant -> lowest index
    with pytest.raises(ValueError):
        assign(model, np.array([1.0, 0.0, 0.0]))


def test_assign_matches_linear_scan_oracle(rng):
    for _ in range(200):
        k = int(rng.integers(1, 10))
        dim = int(rng.integers(1, 6))
        cents = rng.normal(size=(k, dim))
        point = rng.normal(size=dim)
        model = KMeansModel(cents, np.zeros(1, dtype=int), k, 0.0)
        best, best_d = 0, np.inf
        for j in range(k):
            d = float(np.dot(point - cents[j], point - cents[j]))
            if d < best_d:
                best, best_d = j, d
        assert assign(model, point) == best


def test_objective_monotone_and_assignments_optimal(rng):
    for _ in range(50):
        n = int(rng.integers(5, 40))
        dim = int(rng.integers(1, 6))
        k = int(rng.integers(1, n + 1))
        pts = rng.normal(size=(n, dim))
        model = fit_kmeans(pts, k, seed=int(rng.integers(1 << 30)))
        for prev, cur in zip(model.history, model.history[1:]):
            assert cur <= prev + 1e-9
        # every point sits with its nearest centroid
        d2 = ((pts[:, None, :] - model.centroids[None, :, :]) ** 2).sum(axis=2)
        best = d2.min(axis=1)
        chosen = d2[np.arange(n), model.assignments]
        assert np.all(chosen <= best + 1e-9)
        assert len(np.unique(model.assignments)) == k or n < k


def test_no_empty_clusters_on_random_data(rng):
    for _ in range(30):
        n = int(rng.integers(8, 30))
        pts = rng.normal(size=(n, 3))
        k = int(rng.integers(2, min(n, 8)))
        model = fit_kmeans(pts, k, seed=int(rng.integers(1 << 30)))
        assert set(np.unique(model.assignments)) == set(range(k))


def test_determinism_under_fixed_seed(rng):
    pts = rng.normal(size=(25, 4))
    a = fit_kmeans(pts, 5, seed=77)
    b = fit_kmeans(pts, 5, seed=77)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)
    assert a.objective == b.objective
