"""Fast point feature histograms and mutual-NN correspondence matching.

Two-pass descriptor: per point, a histogram over the three Darboux-frame
angles of its neighbor pairs (SPFH), then a distance-weighted aggregation
of neighboring SPFHs. 11 bins per angle, 33 dimensions total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloudops import NormalField, ParameterError, point_spacing
from .points import PointCloud
from .spatial import SpatialIndex

BINS_PER_FEATURE = 11
DESCRIPTOR_DIM = 3 * BINS_PER_FEATURE

_PAIR_CHUNK = 2_000_000
_QUERY_CHUNK = 20_000


@dataclass(frozen=True)
class FpfhConfig:
    radius_factor: float = 5.0  # radius = factor * mean point spacing
    max_nn: int = 100
    radius: float | None = None  # explicit radius wins over the factor

    def __post_init__(self):
        if self.radius_factor <= 0:
            raise ParameterError("radius_factor must be positive")
        if self.max_nn < 1:
            raise ParameterError("max_nn must be >= 1")
        if self.radius is not None and self.radius <= 0:
            raise ParameterError("radius must be positive")


@dataclass
class FeatureSet:
    """Per-point descriptors, index-aligned with the cloud they came from.

    Invalid rows (no usable normal) are zero and excluded from matching.
    """

    descriptors: np.ndarray  # (n, 33) float64, nonnegative
    valid: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.descriptors)


def _neighbor_pairs(positions: np.ndarray, radius: float, max_nn: int, usable: np.ndarray):
    """Flat (i, j, distance) arrays of neighbor pairs within `radius`.

    Neighbors are the nearest `max_nn` usable points within the radius,
    excluding the point itself; pairs where either endpoint is unusable
    are dropped.
    """
    n = len(positions)
    index = SpatialIndex(positions)
    rows_i: list[np.ndarray] = []
    rows_j: list[np.ndarray] = []
    rows_d: list[np.ndarray] = []
    for start in range(0, n, _QUERY_CHUNK):
        stop = min(start + _QUERY_CHUNK, n)
        dists, idx = index.query_knn_within(positions[start:stop], max_nn + 1, radius)
        rows = np.arange(start, stop)[:, None]
        keep = (idx >= 0) & (idx != rows)
        keep &= usable[np.where(idx >= 0, idx, 0)]
        keep[~usable[start:stop]] = False
        # closest slots first; cap at max_nn true neighbors
        rank = np.cumsum(keep, axis=1)
        keep &= rank <= max_nn
        ii = np.broadcast_to(rows, idx.shape)[keep]
        rows_i.append(ii.astype(np.int64))
        rows_j.append(idx[keep].astype(np.int64))
        rows_d.append(dists[keep])
    if rows_i:
        return np.concatenate(rows_i), np.concatenate(rows_j), np.concatenate(rows_d)
    return (np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))


def _pair_angle_features(p_i, p_j, n_i, n_j):
    """Darboux-frame angles (alpha, phi, theta) for each pair, plus a
    validity mask for degenerate geometry."""
    d = p_j - p_i
    dist = np.linalg.norm(d, axis=1)
    ok = dist > 0
    dhat = np.where(ok[:, None], d / np.where(ok, dist, 1.0)[:, None], 0.0)

    dot_i = np.einsum("ij,ij->i", n_i, dhat)
    dot_j = np.einsum("ij,ij->i", n_j, dhat)
    swap = np.abs(dot_i) < np.abs(dot_j)

    u = np.where(swap[:, None], n_j, n_i)
    n_t = np.where(swap[:, None], n_i, n_j)
    dhat = np.where(swap[:, None], -dhat, dhat)

    cross = np.cross(dhat, u)
    cross_norm = np.linalg.norm(cross, axis=1)
    ok &= cross_norm > 1e-12
    v = cross / np.where(ok, cross_norm, 1.0)[:, None]
    w = np.cross(u, v)

    alpha = np.einsum("ij,ij->i", v, n_t)
    phi = np.einsum("ij,ij->i", u, dhat)
    theta = np.arctan2(np.einsum("ij,ij->i", w, n_t), np.einsum("ij,ij->i", u, n_t))
    return alpha, phi, theta, ok


def _bin_indices(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    scaled = np.floor((values - lo) * (BINS_PER_FEATURE / (hi - lo)))
    return np.clip(scaled, 0, BINS_PER_FEATURE - 1).astype(np.int64)


def compute_fpfh(cloud: PointCloud, normals: NormalField, cfg: FpfhConfig = FpfhConfig()) -> FeatureSet:
    """Descriptors for every point; rows without a valid normal are zero."""
    n = len(cloud)
    if len(normals) != n:
        raise ParameterError("normal field is not aligned with the cloud")
    descriptors = np.zeros((n, DESCRIPTOR_DIM))
    usable = normals.valid.copy()
    if n < 2 or not usable.any():
        return FeatureSet(descriptors, usable & False)

    if cfg.radius is not None:
        radius = cfg.radius
    else:
        radius = cfg.radius_factor * point_spacing(cloud)
    positions = cloud.positions.astype(np.float64)
    nrm = normals.normals

    pair_i, pair_j, pair_d = _neighbor_pairs(positions, radius, cfg.max_nn, usable)

    flat_bins = n * DESCRIPTOR_DIM
    spfh_flat = np.zeros(flat_bins)
    pair_counts = np.zeros(n)
    for start in range(0, len(pair_i), _PAIR_CHUNK):
        sl = slice(start, min(start + _PAIR_CHUNK, len(pair_i)))
        i, j = pair_i[sl], pair_j[sl]
        alpha, phi, theta, ok = _pair_angle_features(
            positions[i], positions[j], nrm[i], nrm[j]
        )
        i = i[ok]
        base = i * DESCRIPTOR_DIM
        bins_a = _bin_indices(alpha[ok], -1.0, 1.0)
        bins_p = _bin_indices(phi[ok], -1.0, 1.0)
        bins_t = _bin_indices(theta[ok], -np.pi, np.pi)
        spfh_flat += np.bincount(base + bins_a, minlength=flat_bins)
        spfh_flat += np.bincount(base + BINS_PER_FEATURE + bins_p, minlength=flat_bins)
        spfh_flat += np.bincount(base + 2 * BINS_PER_FEATURE + bins_t, minlength=flat_bins)
        pair_counts += np.bincount(i, minlength=n)

    spfh = spfh_flat.reshape(n, DESCRIPTOR_DIM)
    nonzero = pair_counts > 0
    spfh[nonzero] /= pair_counts[nonzero, None]

    # distance-weighted aggregation over the same neighbor lists
    weighted = np.zeros((n, DESCRIPTOR_DIM))
    neighbor_counts = np.bincount(pair_i, minlength=n).astype(np.float64)
    for start in range(0, len(pair_i), _PAIR_CHUNK):
        sl = slice(start, min(start + _PAIR_CHUNK, len(pair_i)))
        i, j, d = pair_i[sl], pair_j[sl], pair_d[sl]
        inv_d = 1.0 / np.maximum(d, 1e-12)
        for c in range(DESCRIPTOR_DIM):
            weighted[:, c] += np.bincount(i, weights=spfh[j, c] * inv_d, minlength=n)
    has_neighbors = neighbor_counts > 0
    descriptors[has_neighbors] = (
        spfh[has_neighbors] + weighted[has_neighbors] / neighbor_counts[has_neighbors, None]
    )
    descriptors[~usable] = 0.0
    valid = usable & has_neighbors
    descriptors[~valid] = 0.0
    return FeatureSet(descriptors, valid)


def _nearest_in(queries: np.ndarray, corpus: np.ndarray) -> np.ndarray:
    """Index of each query's nearest corpus row (Euclidean, first on ties)."""
    corpus_sq = np.einsum("ij,ij->i", corpus, corpus)
    out = np.empty(len(queries), dtype=np.int64)
    chunk = max(1, int(4_000_000 // max(len(corpus), 1)))
    for start in range(0, len(queries), chunk):
        q = queries[start : start + chunk]
        d2 = corpus_sq[None, :] - 2.0 * (q @ corpus.T)
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def match_features(src: FeatureSet, dst: FeatureSet) -> np.ndarray:
    """Mutual nearest neighbors in descriptor space.

    Returns an (m, 2) array of (src_index, dst_index) pairs, ordered by
    src index. Invalid rows never match; ties resolve to the lowest index.
    """
    if len(src) == 0 or len(dst) == 0:
        raise ParameterError("feature sets must be nonempty")
    src_rows = np.flatnonzero(src.valid)
    dst_rows = np.flatnonzero(dst.valid)
    if len(src_rows) == 0 or len(dst_rows) == 0:
        return np.zeros((0, 2), dtype=np.int64)

    a = src.descriptors[src_rows]
    b = dst.descriptors[dst_rows]
    fwd = _nearest_in(a, b)  # src -> dst (positions within dst_rows)
    candidates = np.unique(fwd)
    back = _nearest_in(b[candidates], a)  # candidate dst -> src
    back_of = dict(zip(candidates.tolist(), back.tolist()))
    keep = np.array([back_of[j] == i for i, j in enumerate(fwd)], dtype=bool)
    pairs = np.column_stack([src_rows[keep], dst_rows[fwd[keep]]])
    return pairs.astype(np.int64)
