"""Seeded Lloyd k-means with farthest-point initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionError


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    objective: float
    history: list = field(default_factory=list)  # objective after init and after every iteration
    n_iter: int = 0
    converged: bool = False


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def objective(X: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    """Sum of squared distances of each point to its assigned centroid."""
    return float(((X - centroids[labels]) ** 2).sum())


def farthest_point_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    nearest = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        cand = nearest.copy()
        cand[chosen] = -np.inf
        nxt = int(np.argmax(cand))
        chosen.append(nxt)
        nearest = np.minimum(nearest, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _reseed_empty(X: np.ndarray, C: np.ndarray, labels: np.ndarray) -> None:
    """Give each empty cluster the point farthest from its own centroid."""
    k = len(C)
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j] > 0:
            continue
        dist = ((X - C[labels]) ** 2).sum(axis=1)
        dist[counts[labels] <= 1] = -np.inf  # never empty another cluster
        i = int(np.argmax(dist))
        if not np.isfinite(dist[i]):
            continue
        C[j] = X[i]
        labels[i] = j


def _assign(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.argmin(_sq_dists(X, C), axis=1)


def kmeans(vectors, k: int, max_iter: int = 100, seed: int = 0) -> KMeansResult:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError("vectors must all have the same dimension")
    n = len(X)
    if not 1 <= k <= n:
        raise ConfigError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    C = farthest_point_init(X, k, rng)
    labels = _assign(X, C)
    _reseed_empty(X, C, labels)
    history = [objective(X, C, labels)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        new = _assign(X, C)
        _reseed_empty(X, C, new)
        history.append(objective(X, C, new))
        if np.array_equal(new, labels):
            converged = True
            break
        labels = new
    return KMeansResult(labels, C, history[-1], history, it, converged)
