"""Seeded k-means: k-means++ initialization followed by Lloyd iterations.

Deterministic for a given (points, k, seed); ties in nearest-centroid
assignment always resolve to the lowest centroid index.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class KMeansModel:
    centroids: np.ndarray  # (k, dim)
    assignments: np.ndarray  # (n,) nearest-centroid index per fitted point
    k: int
    objective: float  # within-cluster sum of squared distances
    history: list = field(default_factory=list)  # objective after each assignment pass


def assign(model: KMeansModel, point: np.ndarray) -> int:
    """Index of the centroid nearest to `point` (Euclidean, lowest index wins ties)."""
    point = np.asarray(point, dtype=float)
    if point.shape != (model.centroids.shape[1],):
        raise ValueError(
            f"point has dimension {point.shape}, centroids have {model.centroids.shape[1]}"
        )
    d2 = ((model.centroids - point) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # |x|^2 + |c|^2 - 2 x.c keeps memory at n*k instead of n*k*dim
    d2 = (
        (points**2).sum(axis=1)[:, None]
        + (centroids**2).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _pairwise_sq_dists_exact(
    points: np.ndarray, centroids: np.ndarray, chunk: int = 1024
) -> np.ndarray:
    # direct (x - c)^2 sums: slower but exactly 0 when a point equals a centroid
    out = np.empty((points.shape[0], centroids.shape[0]))
    for i in range(0, points.shape[0], chunk):
        diff = points[i : i + chunk, None, :] - centroids[None, :, :]
        out[i : i + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=float)
    idx = int(rng.integers(n))
    centroids[0] = points[idx]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # remaining mass is all duplicates of chosen centroids
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[j] = points[idx]
        np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1), out=d2)
    return centroids


def fit_kmeans(
    points, k: int, max_iter: int = 50, tol: float = 1e-4, seed: int = 0
) -> KMeansModel:
    """Cluster `points` into k groups.

    Runs k-means++ seeding then Lloyd iterations until the largest centroid
    shift drops below `tol` or `max_iter` is reached. Emptied clusters are
    reseeded to the point farthest from its currently assigned centroid.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ValueError("points must be a non-empty 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must satisfy 1 <= k <= {n}, got {k}")

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(points, k, rng)
    history = []

    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centroids)
        labels = np.argmin(d2, axis=1)
        nearest_d2 = d2[np.arange(n), labels]
        history.append(float(nearest_d2.sum()))

        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]

        if not nonempty.all():
            # reseed each empty cluster to the farthest remaining point
            spare = nearest_d2.copy()
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(spare))
                new_centroids[j] = points[far]
                spare[far] = -1.0

        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break

    # final assignment so labels always match the returned centroids
    d2 = _pairwise_sq_dists_exact(points, centroids)
    labels = np.argmin(d2, axis=1)
    objective = float(d2[np.arange(n), labels].sum())
    history.append(objective)
    return KMeansModel(
        centroids=centroids,
        assignments=labels,
        k=k,
        objective=objective,
        history=history,
    )
