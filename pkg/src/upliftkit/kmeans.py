"""Seeded Lloyd k-means used for cluster featureization and score clustering.

Kept dependency-free and fully deterministic: k-means++ seeding from a
``numpy`` generator, fixed iteration order, ties in assignment broken by the
lowest centroid index (``argmin`` semantics), empty clusters re-seeded with
the point currently farthest from its centroid.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

MAX_ITER = 100
REL_TOL = 1e-4


def _pairwise_sq_dists(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Loop over centroids instead of one big broadcast so memory stays O(n*k)
    # and the reduction order is fixed.
    out = np.empty((X.shape[0], centroids.shape[0]))
    for j in range(centroids.shape[0]):
        diff = X - centroids[j]
        out[:, j] = np.einsum("ij,ij->i", diff, diff)
    return out


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    closest = np.einsum("ij,ij->i", X - centroids[0], X - centroids[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining mass sits on already-chosen points; fall back to
            # uniform choice so we still return k centroids.
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(closest), r))
            idx = min(idx, n - 1)
        centroids[j] = X[idx]
        diff = X - centroids[j]
        closest = np.minimum(closest, np.einsum("ij,ij->i", diff, diff))
    return centroids


def kmeans_fit(
    X: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER, tol: float = REL_TOL
) -> tuple[np.ndarray, np.ndarray]:
    """Run Lloyd iterations and return ``(centroids, labels)``.

    Converges when the relative inertia improvement drops below ``tol`` or
    after ``max_iter`` rounds. Deterministic given ``seed``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if k > n:
        raise ValidationError(f"k={k} exceeds the number of points n={n}")
    if k == n:
        return X.copy(), np.arange(n)

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(X, k, rng)
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(X, centroids)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        for j in range(k):
            mask = labels == j
            if mask.any():
                centroids[j] = X[mask].mean(axis=0)
            else:
                # Re-seed an empty cluster with the worst-fit point.
                worst = int(np.argmax(d2[np.arange(n), labels]))
                centroids[j] = X[worst]
        if prev_inertia - inertia <= tol * max(prev_inertia, 1e-300):
            break
        prev_inertia = inertia

    d2 = _pairwise_sq_dists(X, centroids)
    labels = np.argmin(d2, axis=1)
    return centroids, labels


def assign(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Nearest-centroid labels (ties to the lowest centroid index)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return np.argmin(_pairwise_sq_dists(X, centroids), axis=1)
