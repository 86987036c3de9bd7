"""Point-cloud domain algebra.

Reliability filtering, statistical outlier removal, voxel-grid
downsampling, normal estimation, merging, and point-spacing estimation.
All operations are pure: they return new clouds and never mutate inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .points import CloudError, PointCloud
from .spatial import SpatialIndex

log = logging.getLogger(__name__)


class ParameterError(CloudError):
    """Operation called with an out-of-domain parameter."""


class MergeError(CloudError):
    """Inputs to merge disagree on schema or frame."""


@dataclass(frozen=True)
class FilterConfig:
    """Reliability cutoffs: drop far points and the lowest confidence level."""

    max_depth: float = 5.0
    min_confidence: int = 1

    def __post_init__(self):
        if self.max_depth <= 0:
            raise ParameterError("max_depth must be positive")
        if self.min_confidence not in (0, 1, 2):
            raise ParameterError("min_confidence must be 0, 1 or 2")


@dataclass(frozen=True)
class SorConfig:
    k_neighbors: int = 20
    std_ratio: float = 2.0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ParameterError("k_neighbors must be >= 1")
        if self.std_ratio <= 0:
            raise ParameterError("std_ratio must be positive")


@dataclass
class NormalField:
    """Per-point unit normals, index-aligned with the source cloud.

    Points with fewer than 3 in-radius neighbors are flagged invalid and
    carry a zero vector instead of an arbitrary direction. `ambiguous`
    marks normals whose facing could not be resolved by the orientation
    rule (dot product exactly zero).
    """

    normals: np.ndarray  # (n, 3) float64
    valid: np.ndarray  # (n,) bool
    ambiguous: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.normals)


def filter_reliability(cloud: PointCloud, cfg: FilterConfig = FilterConfig()) -> PointCloud:
    """Keep points with depth <= max_depth and confidence >= min_confidence.

    A criterion whose attribute is absent from the schema is skipped; the
    skip is recorded in the result's meta under 'filters_skipped'.
    """
    mask = np.ones(len(cloud), dtype=bool)
    applied, skipped = [], []
    if "depth" in cloud.schema:
        mask &= cloud.data["depth"][:, 0] <= cfg.max_depth
        applied.append("depth")
    else:
        skipped.append("depth")
    if "confidence" in cloud.schema:
        mask &= cloud.data["confidence"][:, 0] >= cfg.min_confidence
        applied.append("confidence")
    else:
        skipped.append("confidence")
    out = cloud.select(mask)
    out.meta["filters_applied"] = applied
    out.meta["filters_skipped"] = skipped
    return out


def statistical_outlier_removal(cloud: PointCloud, cfg: SorConfig = SorConfig()) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds mu + std_ratio * sigma.

    Needs at least k_neighbors + 1 points; smaller clouds are returned
    unchanged with a warning.
    """
    n = len(cloud)
    if n <= cfg.k_neighbors:
        log.warning("SOR skipped: %d points <= k_neighbors=%d", n, cfg.k_neighbors)
        out = cloud.select(np.ones(n, dtype=bool))
        out.meta["sor_skipped"] = f"{n} points <= k_neighbors={cfg.k_neighbors}"
        return out
    index = SpatialIndex(cloud.positions)
    # k+1 nearest include the point itself at distance zero
    dists, _ = index.query_knn(cloud.positions, cfg.k_neighbors + 1)
    mean_dist = dists[:, 1:].mean(axis=1)
    mu = mean_dist.mean()
    sigma = mean_dist.std()
    keep = mean_dist <= mu + cfg.std_ratio * sigma
    return cloud.select(keep)


_VOXEL_MEAN_KINDS = ("float32", "uint8")


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """One point per occupied cube of side `voxel_size`, anchored at the origin.

    Positions and float attributes take the member centroid, colors the
    per-channel average, confidence the member minimum. Output order is
    the lexicographic order of voxel keys.
    """
    if voxel_size <= 0:
        raise ParameterError("voxel_size must be positive")
    n = len(cloud)
    if n == 0:
        return cloud.select(np.zeros(0, dtype=bool))
    keys = np.floor(cloud.positions.astype(np.float64) / voxel_size).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    groups = len(uniq)
    counts = np.bincount(inverse, minlength=groups).astype(np.float64)

    data: dict[str, np.ndarray] = {}
    for attr in cloud.schema:
        col = cloud.data[attr.name]
        if attr.name == "confidence" or attr.kind == "uint32":
            agg = np.full((groups, attr.arity), np.iinfo(np.uint32).max, dtype=np.uint32)
            np.minimum.at(agg, inverse, col)
            data[attr.name] = agg
        elif attr.kind in _VOXEL_MEAN_KINDS:
            sums = np.zeros((groups, attr.arity), dtype=np.float64)
            np.add.at(sums, inverse, col.astype(np.float64))
            mean = sums / counts[:, None]
            if attr.kind == "uint8":
                data[attr.name] = np.rint(mean).astype(np.uint8)
            else:
                data[attr.name] = mean.astype(np.float32)
        else:  # pragma: no cover - schema kinds are closed
            raise ParameterError(f"no downsample rule for kind {attr.kind}")
    out = PointCloud(schema=cloud.schema, data=data, frame=cloud.frame, meta=dict(cloud.meta))
    return out


def estimate_normals(cloud: PointCloud, radius: float, max_nn: int = 30) -> NormalField:
    """Smallest-covariance-eigenvector normals from in-radius neighborhoods.

    Normals face the recording device when the cloud carries
    device_position, +z otherwise.
    """
    if radius <= 0:
        raise ParameterError("radius must be positive")
    if max_nn < 1:
        raise ParameterError("max_nn must be >= 1")
    n = len(cloud)
    positions = cloud.positions.astype(np.float64)
    normals = np.zeros((n, 3))
    valid = np.zeros(n, dtype=bool)
    ambiguous = np.zeros(n, dtype=bool)
    if n == 0:
        return NormalField(normals, valid, ambiguous)

    index = SpatialIndex(positions)
    dists, idx = index.query_knn_within(positions, max_nn, radius)
    member = idx >= 0
    counts = member.sum(axis=1)
    valid = counts >= 3

    safe_idx = np.where(member, idx, 0)
    coords = positions[safe_idx]  # (n, k, 3)
    w = member.astype(np.float64)[..., None]
    denom = np.maximum(counts, 1).astype(np.float64)[:, None]
    mean = (coords * w).sum(axis=1) / denom
    centered = (coords - mean[:, None, :]) * w
    cov = np.matmul(centered.transpose(0, 2, 1), centered) / denom[..., None]
    # batched symmetric eigendecomposition; eigenvalues ascending
    _, vecs = np.linalg.eigh(cov)
    candidate = vecs[:, :, 0]

    if "device_position" in cloud.schema:
        toward = cloud.data["device_position"].astype(np.float64) - positions
    else:
        toward = np.tile(np.array([0.0, 0.0, 1.0]), (n, 1))
    dots = np.einsum("ij,ij->i", candidate, toward)
    candidate = np.where((dots < 0)[:, None], -candidate, candidate)
    ambiguous = valid & (dots == 0)

    norms = np.linalg.norm(candidate, axis=1)
    nonzero = norms > 0
    candidate[nonzero] /= norms[nonzero, None]
    normals[valid] = candidate[valid]
    return NormalField(normals, valid, ambiguous)


def merge(clouds) -> PointCloud:
    """Concatenate clouds sharing one schema and frame, preserving order."""
    clouds = list(clouds)
    if not clouds:
        return PointCloud.empty()
    first = clouds[0]
    for i, c in enumerate(clouds[1:], start=1):
        if c.schema != first.schema:
            raise MergeError(f"cloud {i} schema differs from cloud 0")
        if c.frame != first.frame:
            raise MergeError(f"cloud {i} frame {c.frame!r} differs from {first.frame!r}")
    data = {
        name: np.concatenate([c.data[name] for c in clouds], axis=0)
        for name in first.schema.names
    }
    return PointCloud(schema=first.schema, data=data, frame=first.frame)


def point_spacing(cloud: PointCloud) -> float:
    """Mean distance from each point to its single nearest neighbor."""
    n = len(cloud)
    if n < 2:
        raise ParameterError("point_spacing needs at least 2 points")
    index = SpatialIndex(cloud.positions)
    dists, _ = index.query_knn(cloud.positions, 2)
    return float(dists[:, 1].mean())
