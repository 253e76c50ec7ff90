import logging
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from ..utils.errors import ConfigurationException


@dataclass
class KMeansResult:
    """
    Attributes:
        labels (np.ndarray): cluster id of every point, shape (n,)
        centroids (np.ndarray): cluster centers, shape (k, 2)
        inertia (float): sum of squared distances to the assigned centroids
        n_iter (int): number of Lloyd iterations run
        converged (bool): whether the centers settled before `max_iters`
    """

    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    converged: bool


def kmeans_geo(
    points: np.ndarray, k: int = 60, max_iters: int = 300, seed: int = 42
) -> KMeansResult:
    """
    Lloyd's algorithm on (lat, lon) pairs treated as points of the Euclidean plane.

    Centroids start at `k` points drawn with the seeded generator and a single run is
    made, so the result only depends on `points`, `k` and `seed`. The returned labels
    are the assignment to the returned centroids.

    Args:
        points (np.ndarray):
            coordinates of shape (n, 2)
        k (int):
            number of clusters
        max_iters (int):
            maximum number of Lloyd iterations
        seed (int):
            seed of the initialization
    Returns:
        KMeansResult: assignment, centroids and final objective
    Raises:
        ConfigurationException: when `k` exceeds the number of distinct points or
        `max_iters` is not positive
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n_distinct = np.unique(points, axis=0).shape[0]
    if k < 1 or k > n_distinct:
        raise ConfigurationException(
            f"cannot build {k} clusters from {n_distinct} distinct points",
            key="dataset.n_geo_clusters",
        )
    if max_iters < 1:
        raise ConfigurationException(
            f"{max_iters} should be >= 1", key="dataset.kmeans_max_iters"
        )

    kmeans = KMeans(
        n_clusters=k,
        init="random",
        n_init=1,
        max_iter=max_iters,
        random_state=seed,
        algorithm="lloyd",
    ).fit(points)
    result = KMeansResult(
        labels=kmeans.labels_.astype(np.int64),
        centroids=kmeans.cluster_centers_.astype(np.float64),
        inertia=float(kmeans.inertia_),
        n_iter=int(kmeans.n_iter_),
        converged=int(kmeans.n_iter_) < max_iters,
    )
    logging.info(
        f"k-means with k={k} stopped after {result.n_iter} iterations"
        f" (converged={result.converged}, inertia={result.inertia:.6f})"
    )
    return result
