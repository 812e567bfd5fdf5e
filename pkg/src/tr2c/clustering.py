"""Normalized-cut spectral clustering of the learned affinity."""
from __future__ import annotations

import numpy as np
from scipy.linalg import eigh

from .errors import InvalidInputError

KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 100


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (np.sum(points**2, axis=1)[:, None] - 2 * points @ centers.T
         + np.sum(centers**2, axis=1)[None, :])
    return np.maximum(d, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(points, points[chosen]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        closest = np.minimum(closest, _sq_dists(points, points[[nxt]]).ravel())
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int):
    labels = None
    for _ in range(max_iter):
        dist = _sq_dists(points, centers)
        new = np.argmin(dist, axis=1)  # ties -> lowest centroid index
        for j in range(centers.shape[0]):
            members = new == j
            if members.any():
                centers[j] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(dist[np.arange(len(points)), new]))
                centers[j] = points[far]
                new[far] = j
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    inertia = float(_sq_dists(points, centers)[np.arange(len(points)), labels].sum())
    return labels, inertia


def kmeans(points, k: int, seed: int = 0, n_init: int = KMEANS_RESTARTS,
           max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """k-means++ seeded Lloyd iterations; best of ``n_init`` restarts by inertia.

    Ties in inertia go to the earliest restart.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise InvalidInputError("points must be a 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= {n}, got {k}")
    rng = np.random.default_rng(seed)
    best, best_inertia = None, np.inf
    for _ in range(n_init):
        centers = _kmeans_pp(points, k, rng)
        labels, inertia = _lloyd(points, centers, max_iter)
        if inertia < best_inertia:
            best, best_inertia = labels, inertia
    return best.astype(int)


def spectral_embedding(gamma, k: int) -> np.ndarray:
    """Row-normalized eigenvectors of the ``k`` smallest eigenvalues of the
    symmetric normalized Laplacian of ``(gamma + gamma^T) / 2``."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0]
    A = 0.5 * (gamma + gamma.T)
    deg = A.sum(axis=1)
    if np.any(deg <= 0):
        raise RuntimeError("affinity has a zero-degree row")
    inv_sqrt = 1.0 / np.sqrt(deg)
    lap = np.eye(n) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    _, vecs = eigh(lap, subset_by_index=[0, k - 1])
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs / np.where(norms > 0, norms, 1.0)


def spectral_cluster(gamma, k: int, seed: int = 0) -> np.ndarray:
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise InvalidInputError(f"affinity must be square, got {gamma.shape}")
    n = gamma.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"need 1 <= k <= {n}, got {k}")
    if k == 1:
        return np.zeros(n, dtype=int)
    return kmeans(spectral_embedding(gamma, k), k, seed=seed)
