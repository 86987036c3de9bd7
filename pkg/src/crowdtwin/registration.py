"""Dynamic alignment of an incoming partial cloud against a region tile.

Pipeline stages: preprocess (outlier removal, voxel downsample, normals),
FPFH descriptors, mutual-NN matching, RANSAC global alignment with
edge-similarity pruning, point-to-point ICP refinement, and the merge of
accepted chunks into the tile.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cloudops import (
    NormalField,
    ParameterError,
    SorConfig,
    estimate_normals,
    merge,
    statistical_outlier_removal,
    voxel_downsample,
)
from .features import FeatureSet, FpfhConfig, compute_fpfh, match_features
from .points import PointCloud
from .rigid import (
    DegenerateCorrespondenceError,
    RigidTransform,
    estimate_rigid_transform,
    estimate_rigid_transform_batch,
)
from .spatial import SpatialIndex

STATUS_SUCCESS = "success"
STATUS_FAILED_GLOBAL = "failed_global"
STATUS_FAILED_LOCAL = "failed_local"
STATUS_PENDING_REVIEW = "pending_review"

_RANSAC_BATCH = 512
_SCORE_CHUNK_CELLS = 2_000_000


class DegenerateInputError(ParameterError):
    """Cloud too sparse to register after preprocessing."""


class InsufficientCorrespondenceError(ParameterError):
    """Fewer correspondences than the RANSAC sample size."""


@dataclass(frozen=True)
class RansacConfig:
    sample_size: int = 3  # correspondences per hypothesis
    edge_similarity: float = 0.9
    distance_threshold: float | None = None  # defaults to 1.5 * voxel size
    max_iterations: int = 100_000
    confidence: float = 0.999
    rng_seed: int = 0

    def __post_init__(self):
        if self.sample_size < 3:
            raise ParameterError("sample_size must be >= 3")
        if not (0 < self.edge_similarity <= 1):
            raise ParameterError("edge_similarity must be in (0, 1]")
        if not (0 < self.confidence < 1):
            raise ParameterError("confidence must be in (0, 1)")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")


@dataclass(frozen=True)
class IcpConfig:
    max_correspondence_distance: float | None = None  # defaults to 2 * voxel size
    max_iterations: int = 30
    relative_rmse_epsilon: float = 1e-6
    relative_fitness_epsilon: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything integrate() needs, keyed off the voxel size."""

    voxel_size: float = 0.6
    sor: SorConfig = field(default_factory=SorConfig)
    fpfh: FpfhConfig = field(default_factory=FpfhConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    icp: IcpConfig = field(default_factory=IcpConfig)
    min_fitness: float = 0.25
    max_rmse_factor: float = 1.0  # accept when rmse <= factor * voxel_size

    def ransac_distance(self) -> float:
        return self.ransac.distance_threshold or 1.5 * self.voxel_size

    def icp_distance(self) -> float:
        return self.icp.max_correspondence_distance or 2.0 * self.voxel_size


@dataclass
class RegistrationResult:
    transform: RigidTransform
    fitness: float
    inlier_rmse: float
    stage_timings: dict[str, float] = field(default_factory=dict)
    status: str = STATUS_SUCCESS
    rmse_sequence: list[float] = field(default_factory=list)  # accepted ICP iterations
    iterations: int = 0
    failure_reason: str | None = None
    merged_chunk: PointCloud | None = None  # transformed chunk, set on merge

    @property
    def total_time(self) -> float:
        return sum(self.stage_timings.values())

    def to_dict(self) -> dict:
        return {
            "transform": self.transform.to_dict(),
            "fitness": self.fitness,
            "inlier_rmse": None if math.isinf(self.inlier_rmse) else self.inlier_rmse,
            "stage_timings": self.stage_timings,
            "status": self.status,
            "iterations": self.iterations,
            "failure_reason": self.failure_reason,
        }


def transform_cloud(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Rigidly move a cloud: positions and, when present, the recorded
    device positions (the viewpoint travels with the data)."""
    out = cloud.with_positions(
        transform.apply(cloud.positions.astype(np.float64)).astype(np.float32)
    )
    if "device_position" in cloud.schema:
        moved = transform.apply(cloud.data["device_position"].astype(np.float64))
        out.data["device_position"] = moved.astype(np.float32)
    return out


def preprocess(
    cloud: PointCloud, voxel_size: float, sor: SorConfig = SorConfig(), apply_sor: bool = True
) -> tuple[PointCloud, NormalField]:
    """Outlier removal, density equalization, and normal estimation."""
    if len(cloud) == 0:
        raise DegenerateInputError("cannot preprocess an empty cloud")
    cleaned = statistical_outlier_removal(cloud, sor) if apply_sor else cloud
    down = voxel_downsample(cleaned, voxel_size)
    if len(down) < 10:
        raise DegenerateInputError(f"only {len(down)} points after preprocessing")
    normals = estimate_normals(down, radius=2.0 * voxel_size, max_nn=30)
    return down, normals


def evaluate(
    src: PointCloud, dst: PointCloud, transform: RigidTransform, max_distance: float
) -> tuple[float, float]:
    """Inlier fraction of source points and RMS distance over those inliers."""
    if max_distance <= 0:
        raise ParameterError("max_distance must be positive")
    index = SpatialIndex(dst.positions)
    return _evaluate_indexed(src.positions.astype(np.float64), index, transform, max_distance)


def _evaluate_indexed(
    src_pts: np.ndarray, dst_index: SpatialIndex, transform: RigidTransform, max_distance: float
) -> tuple[float, float]:
    if len(src_pts) == 0:
        return 0.0, math.inf
    moved = transform.apply(src_pts)
    dists, _ = dst_index.nearest(moved, max_distance)
    inlier = np.isfinite(dists)
    if not inlier.any():
        return 0.0, math.inf
    fitness = float(inlier.mean())
    rmse = float(np.sqrt(np.mean(dists[inlier] ** 2)))
    return fitness, rmse


def _sample_without_replacement(rng: np.random.Generator, batch: int, m: int, k: int) -> np.ndarray:
    """(batch, k) index samples, each row without repeats; deterministic."""
    draws = rng.integers(0, m, size=(batch, k))
    for _ in range(64):
        sorted_rows = np.sort(draws, axis=1)
        dup = (np.diff(sorted_rows, axis=1) == 0).any(axis=1)
        if not dup.any():
            break
        draws[dup] = rng.integers(0, m, size=(int(dup.sum()), k))
    return draws


def ransac_global(
    src: PointCloud,
    dst: PointCloud,
    correspondences: np.ndarray,
    cfg: RansacConfig = RansacConfig(),
    distance_threshold: float = 0.9,
) -> RegistrationResult:
    """Sample-consensus global alignment over a feature correspondence set.

    Hypotheses are pruned by pairwise edge-length similarity before the
    transform is estimated, then required to place every sampled
    correspondence within the distance threshold; survivors are scored by
    inlier count over the full correspondence set.
    """
    t0 = time.perf_counter()
    corrs = np.asarray(correspondences, dtype=np.int64).reshape(-1, 2)
    m = len(corrs)
    if m < cfg.sample_size:
        raise InsufficientCorrespondenceError(
            f"{m} correspondences < sample size {cfg.sample_size}"
        )
    src_pts = src.positions.astype(np.float64)[corrs[:, 0]]
    dst_pts = dst.positions.astype(np.float64)[corrs[:, 1]]
    rng = np.random.default_rng(cfg.rng_seed)
    pair_a, pair_b = np.triu_indices(cfg.sample_size, k=1)
    thr2 = distance_threshold * distance_threshold

    best_count = 0
    best_rmse = math.inf
    best_R = None
    best_t = None
    done = 0
    while done < cfg.max_iterations:
        batch = min(_RANSAC_BATCH, cfg.max_iterations - done)
        picks = _sample_without_replacement(rng, batch, m, cfg.sample_size)
        done += batch

        s = src_pts[picks]  # (b, N, 3)
        d = dst_pts[picks]
        e_src = np.linalg.norm(s[:, pair_a] - s[:, pair_b], axis=2)
        e_dst = np.linalg.norm(d[:, pair_a] - d[:, pair_b], axis=2)
        hi = np.maximum(e_src, e_dst)
        lo = np.minimum(e_src, e_dst)
        ratio = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), 0.0)
        ok = (ratio >= cfg.edge_similarity).all(axis=1)
        if not ok.any():
            continue

        R, t, est_ok = estimate_rigid_transform_batch(s[ok], d[ok])
        cand_rows = np.flatnonzero(ok)[est_ok]
        if len(cand_rows) == 0:
            continue
        R, t = R[est_ok], t[est_ok]

        moved = np.einsum("bij,bnj->bni", R, s[cand_rows]) + t[:, None, :]
        within = ((moved - d[cand_rows]) ** 2).sum(axis=2) <= thr2
        passing = within.all(axis=1)
        if not passing.any():
            continue
        R, t = R[passing], t[passing]

        # score survivors over the full correspondence set, chunked
        rows = max(1, _SCORE_CHUNK_CELLS // m)
        for start in range(0, len(R), rows):
            Rc = R[start : start + rows]
            tc = t[start : start + rows]
            moved_all = np.einsum("bij,nj->bni", Rc, src_pts) + tc[:, None, :]
            d2 = ((moved_all - dst_pts[None, :, :]) ** 2).sum(axis=2)
            inl = d2 <= thr2
            counts = inl.sum(axis=1)
            for k in range(len(Rc)):
                c = int(counts[k])
                if c == 0:
                    continue
                rmse = float(np.sqrt(d2[k][inl[k]].mean()))
                if c > best_count or (c == best_count and rmse < best_rmse):
                    best_count, best_rmse = c, rmse
                    best_R, best_t = Rc[k], tc[k]

        if best_count > 0:
            w = (best_count / m) ** cfg.sample_size
            if w >= 1.0:
                break
            needed = math.log(1.0 - cfg.confidence) / math.log(1.0 - w)
            if done >= needed:
                break

    elapsed = time.perf_counter() - t0
    if best_R is None:
        return RegistrationResult(
            transform=RigidTransform.identity(),
            fitness=0.0,
            inlier_rmse=math.inf,
            stage_timings={"ransac": elapsed},
            status=STATUS_FAILED_GLOBAL,
            iterations=done,
            failure_reason="no hypothesis passed the consensus checks",
        )
    transform = RigidTransform(best_R, best_t)
    fitness, rmse = evaluate(src, dst, transform, distance_threshold)
    return RegistrationResult(
        transform=transform,
        fitness=fitness,
        inlier_rmse=rmse,
        stage_timings={"ransac": time.perf_counter() - t0},
        status=STATUS_SUCCESS,
        iterations=done,
    )


def icp_refine(
    src: PointCloud,
    dst: PointCloud,
    init: RigidTransform,
    cfg: IcpConfig = IcpConfig(),
    max_distance: float | None = None,
) -> RegistrationResult:
    """Point-to-point ICP from an initial alignment.

    Candidate iterations that would raise the inlier RMSE are rejected and
    iteration stops, so the accepted RMSE sequence is nonincreasing.
    """
    t0 = time.perf_counter()
    if len(src) == 0 or len(dst) == 0:
        raise ParameterError("ICP requires nonempty clouds")
    max_dist = max_distance or cfg.max_correspondence_distance
    if not max_dist or max_dist <= 0:
        raise ParameterError("max_correspondence_distance must be positive")

    src_pts = src.positions.astype(np.float64)
    index = SpatialIndex(dst.positions)
    dst_pts = index.points

    def correspond(transform: RigidTransform):
        moved = transform.apply(src_pts)
        dists, idx = index.nearest(moved, max_dist)
        matched = np.isfinite(dists)
        return matched, idx, dists

    transform = init
    matched, idx, dists = correspond(transform)
    if not matched.any():
        return RegistrationResult(
            transform=init,
            fitness=0.0,
            inlier_rmse=math.inf,
            stage_timings={"icp": time.perf_counter() - t0},
            status=STATUS_FAILED_LOCAL,
            failure_reason="no correspondences at the initial alignment",
        )
    fitness = float(matched.mean())
    rmse = float(np.sqrt(np.mean(dists[matched] ** 2)))
    accepted = [rmse]

    iterations = 0
    for _ in range(cfg.max_iterations):
        iterations += 1
        try:
            candidate = estimate_rigid_transform(src_pts[matched], dst_pts[idx[matched]])
        except DegenerateCorrespondenceError:
            break
        new_matched, new_idx, new_dists = correspond(candidate)
        if not new_matched.any():
            break
        new_fitness = float(new_matched.mean())
        new_rmse = float(np.sqrt(np.mean(new_dists[new_matched] ** 2)))
        if new_rmse > rmse:
            break  # reject: would violate monotone inlier RMSE
        d_rmse = abs(rmse - new_rmse) / max(rmse, 1e-12)
        d_fit = abs(new_fitness - fitness) / max(fitness, 1e-12)
        transform, matched, idx = candidate, new_matched, new_idx
        fitness, rmse = new_fitness, new_rmse
        accepted.append(rmse)
        if d_rmse < cfg.relative_rmse_epsilon and d_fit < cfg.relative_fitness_epsilon:
            break

    return RegistrationResult(
        transform=transform,
        fitness=fitness,
        inlier_rmse=rmse,
        stage_timings={"icp": time.perf_counter() - t0},
        status=STATUS_SUCCESS,
        rmse_sequence=accepted,
        iterations=iterations,
    )


def register_clouds(
    src: PointCloud,
    dst: PointCloud,
    cfg: PipelineConfig = PipelineConfig(),
    apply_sor: bool = True,
    dst_prepared: tuple[PointCloud, FeatureSet] | None = None,
) -> RegistrationResult:
    """Full pipeline from raw clouds to a refined transform.

    `dst_prepared` short-circuits destination preprocessing and feature
    extraction with cached results (the destination side of a tile or
    benchmark region rarely changes between calls).
    """
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    src_down, src_normals = preprocess(src, cfg.voxel_size, cfg.sor, apply_sor=apply_sor)
    if dst_prepared is None:
        dst_down, dst_normals = preprocess(dst, cfg.voxel_size, cfg.sor, apply_sor=apply_sor)
    timings["preprocess"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    src_feats = compute_fpfh(src_down, src_normals, cfg.fpfh)
    if dst_prepared is None:
        dst_feats = compute_fpfh(dst_down, dst_normals, cfg.fpfh)
    else:
        dst_down, dst_feats = dst_prepared
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    corrs = match_features(src_feats, dst_feats)
    timings["matching"] = time.perf_counter() - t0

    if len(corrs) < cfg.ransac.sample_size:
        timings["ransac"] = 0.0
        timings["icp"] = 0.0
        return RegistrationResult(
            transform=RigidTransform.identity(),
            fitness=0.0,
            inlier_rmse=math.inf,
            stage_timings=timings,
            status=STATUS_FAILED_GLOBAL,
            failure_reason=f"only {len(corrs)} correspondences",
        )

    coarse = ransac_global(src_down, dst_down, corrs, cfg.ransac, cfg.ransac_distance())
    timings["ransac"] = coarse.stage_timings["ransac"]
    if coarse.status != STATUS_SUCCESS:
        timings["icp"] = 0.0
        coarse.stage_timings = timings
        return coarse

    # wide pass captures poses at the edge of the convergence basin, the
    # tight pass polishes at the configured distance
    wide = icp_refine(src_down, dst_down, coarse.transform, cfg.icp, 2.0 * cfg.icp_distance())
    fine = icp_refine(src_down, dst_down, wide.transform, cfg.icp, cfg.icp_distance())
    timings["icp"] = wide.stage_timings["icp"] + fine.stage_timings["icp"]
    fine.stage_timings = timings
    return fine


def _passes_gate(result: RegistrationResult, cfg: PipelineConfig) -> bool:
    return (
        result.status == STATUS_SUCCESS
        and result.fitness >= cfg.min_fitness
        and result.inlier_rmse <= cfg.max_rmse_factor * cfg.voxel_size
    )


def integrate(partial: PointCloud, shard, cfg: PipelineConfig = PipelineConfig()):
    """Register a partial cloud into a shard's tile and merge on success.

    Chunks arrive self-localized in their session frame, so a local
    refinement from the identity prior is tried first; when the quality
    gate rejects it, the full feature-matching global pipeline runs.
    Returns (result, shard). Failures leave the tile and version untouched
    and surface as pending_review for the operator queue; an empty tile is
    seeded with the preprocessed partial under the identity transform.
    """
    from .points import FRAME_UDT

    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        src_down, src_normals = preprocess(partial, cfg.voxel_size, cfg.sor)
    except DegenerateInputError as exc:
        return (
            RegistrationResult(
                transform=RigidTransform.identity(),
                fitness=0.0,
                inlier_rmse=math.inf,
                stage_timings={"preprocess": time.perf_counter() - t0},
                status=STATUS_PENDING_REVIEW,
                failure_reason=str(exc),
            ),
            shard,
        )
    timings["preprocess"] = time.perf_counter() - t0

    tile = shard.udt_tile
    if len(tile) == 0:
        seed = src_down.select(np.ones(len(src_down), dtype=bool))
        seed.frame = FRAME_UDT
        shard.set_tile(seed)
        return (
            RegistrationResult(
                transform=RigidTransform.identity(),
                fitness=1.0,
                inlier_rmse=0.0,
                stage_timings=timings,
                status=STATUS_SUCCESS,
                merged_chunk=seed,
            ),
            shard,
        )

    # self-localized chunks usually need only local refinement
    t0 = time.perf_counter()
    prior = icp_refine(src_down, tile, RigidTransform.identity(), cfg.icp, cfg.icp_distance())
    timings["icp"] = prior.stage_timings["icp"]
    if _passes_gate(prior, cfg):
        prior.stage_timings = {**timings, "features": 0.0, "matching": 0.0, "ransac": 0.0}
        prior.merged_chunk = merge_chunk_into_tile(shard, src_down, prior.transform, cfg.voxel_size)
        return prior, shard

    t0 = time.perf_counter()
    tile_normals = estimate_normals(tile, radius=2.0 * cfg.voxel_size, max_nn=30)
    src_feats = compute_fpfh(src_down, src_normals, cfg.fpfh)
    tile_feats = compute_fpfh(tile, tile_normals, cfg.fpfh)
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    corrs = match_features(src_feats, tile_feats)
    timings["matching"] = time.perf_counter() - t0

    result = RegistrationResult(
        transform=RigidTransform.identity(),
        fitness=0.0,
        inlier_rmse=math.inf,
        stage_timings=timings,
        status=STATUS_PENDING_REVIEW,
    )
    if len(corrs) < cfg.ransac.sample_size:
        result.failure_reason = f"only {len(corrs)} correspondences"
        result.stage_timings.setdefault("ransac", 0.0)
        return result, shard

    coarse = ransac_global(src_down, tile, corrs, cfg.ransac, cfg.ransac_distance())
    timings["ransac"] = coarse.stage_timings["ransac"]
    if coarse.status != STATUS_SUCCESS:
        result.failure_reason = coarse.failure_reason or "global alignment failed"
        result.stage_timings.update(timings)
        return result, shard

    fine = icp_refine(src_down, tile, coarse.transform, cfg.icp, cfg.icp_distance())
    timings["icp"] += fine.stage_timings["icp"]
    fine.stage_timings = timings

    if not _passes_gate(fine, cfg):
        fine.status = STATUS_PENDING_REVIEW
        if fine.failure_reason is None:
            fine.failure_reason = (
                f"alignment below acceptance: fitness={fine.fitness:.3f}, rmse={fine.inlier_rmse:.3f}"
            )
        return fine, shard

    fine.merged_chunk = merge_chunk_into_tile(shard, src_down, fine.transform, cfg.voxel_size)
    return fine, shard


def merge_chunk_into_tile(shard, chunk: PointCloud, transform: RigidTransform, voxel_size: float):
    """Apply `transform` to the chunk, merge into the tile, re-equalize density.

    When chunk and tile carry different canonical subsets, both narrow to
    their common attributes rather than inventing values for the gap.
    """
    from .points import FRAME_UDT

    moved = transform_cloud(chunk, transform)
    moved.frame = FRAME_UDT
    tile = shard.udt_tile
    if len(tile) == 0:
        combined = moved
    else:
        if tile.schema != moved.schema:
            common = set(tile.schema.names) & set(moved.schema.names)
            tile = tile.project(common)
            moved = moved.project(common)
        combined = merge([tile, moved])
    shard.set_tile(voxel_downsample(combined, voxel_size))
    return moved
