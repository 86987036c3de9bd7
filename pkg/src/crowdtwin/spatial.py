"""Nearest-neighbor search over point positions.

Thin wrapper around scipy's kd-tree that pins down the result contract the
rest of the pipeline relies on: k-NN results are sorted by nondecreasing
distance and padded entries are stripped, radius queries return all and
only points within the radius.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class SpatialIndex:
    """Balanced k-d tree over an (n, d) position array."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise ValueError("points must be a 2-d array")
        self._points = points
        self._tree = cKDTree(points) if len(points) else None

    def __len__(self) -> int:
        return len(self._points)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def query_knn(self, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the min(k, n) nearest points to `query`.

        `query` may be a single point or an (m, d) batch; results keep the
        batch axis and are sorted by nondecreasing distance.
        """
        if self._tree is None:
            q = np.atleast_2d(np.asarray(query, dtype=np.float64))
            return np.zeros((len(q), 0)), np.zeros((len(q), 0), dtype=np.intp)
        k_eff = min(k, len(self._points))
        dists, idx = self._tree.query(query, k=k_eff)
        if k_eff == 1:
            dists = np.atleast_1d(dists)[..., None]
            idx = np.atleast_1d(idx)[..., None]
        return dists, idx

    def query_knn_within(
        self, query: np.ndarray, k: int, radius: float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Up to k nearest points within `radius`; padded slots carry index -1."""
        if self._tree is None:
            q = np.atleast_2d(np.asarray(query, dtype=np.float64))
            return np.zeros((len(q), 0)), np.full((len(q), 0), -1, dtype=np.intp)
        k_eff = min(k, len(self._points))
        dists, idx = self._tree.query(query, k=k_eff, distance_upper_bound=radius)
        if k_eff == 1:
            dists = np.atleast_1d(dists)[..., None]
            idx = np.atleast_1d(idx)[..., None]
        missing = ~np.isfinite(dists)
        idx = np.where(missing, -1, idx)
        dists = np.where(missing, np.inf, dists)
        return dists, idx

    def query_radius(self, point: np.ndarray, radius: float) -> np.ndarray:
        """Indices of all points within `radius` of `point`, sorted by distance."""
        if self._tree is None:
            return np.zeros(0, dtype=np.intp)
        idx = np.asarray(self._tree.query_ball_point(np.asarray(point, dtype=np.float64), radius), dtype=np.intp)
        if len(idx) == 0:
            return idx
        d = np.linalg.norm(self._points[idx] - np.asarray(point, dtype=np.float64), axis=1)
        return idx[np.argsort(d, kind="stable")]

    def nearest(self, query: np.ndarray, max_distance: float = np.inf) -> tuple[np.ndarray, np.ndarray]:
        """1-NN distances and indices for a query batch; misses get inf / -1."""
        dists, idx = self.query_knn_within(query, 1, max_distance)
        if dists.shape[1] == 0:
            q = np.atleast_2d(query)
            return np.full(len(q), np.inf), np.full(len(q), -1, dtype=np.intp)
        return dists[:, 0], idx[:, 0]
