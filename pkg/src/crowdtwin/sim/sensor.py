"""Wearable scanner simulation.

Walks a trajectory through a scene casting a depth-camera-style ray grid
each frame, producing full-schema points (noisy depth, range-based
confidence, device pose) and emitting a chunk the first frame the buffer
exceeds the upload threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import geohash as gh
from ..points import FRAME_SESSION, PointCloud
from .scene import SceneModel, raycast

CHUNK_THRESHOLD = 200_000


@dataclass(frozen=True)
class SensorModel:
    """Range/confidence model of the neck-worn device."""

    max_capture_range: float = 8.0
    reliable_range: float = 5.0
    high_confidence_range: float = 3.0
    fov_h_deg: float = 70.0
    fov_v_deg: float = 50.0
    rays_h: int = 40
    rays_v: int = 25
    range_noise_sigma: float = 0.01
    pitch_deg: float = -12.0  # worn on the chest, looking slightly down
    height: float = 1.4
    frame_interval: float = 0.1

    @property
    def rays_per_frame(self) -> int:
        return self.rays_h * self.rays_v

    def confidence_for_range(self, true_range: np.ndarray) -> np.ndarray:
        """2 within 3 m, 1 within (3, 5] m, 0 beyond 5 m."""
        level = np.zeros(len(true_range), dtype=np.uint32)
        level[true_range <= self.reliable_range] = 1
        level[true_range <= self.high_confidence_range] = 2
        return level

    def ray_grid(self) -> np.ndarray:
        """Unit direction grid in the device frame (+x forward, +z up)."""
        h = np.radians(np.linspace(-self.fov_h_deg / 2, self.fov_h_deg / 2, self.rays_h))
        v = np.radians(np.linspace(-self.fov_v_deg / 2, self.fov_v_deg / 2, self.rays_v))
        yaw, pitch = np.meshgrid(h, v, indexing="ij")
        pitch = pitch + np.radians(self.pitch_deg)
        dirs = np.stack(
            [
                np.cos(pitch) * np.cos(yaw),
                np.cos(pitch) * np.sin(yaw),
                np.sin(pitch),
            ],
            axis=-1,
        )
        return dirs.reshape(-1, 3)


@dataclass
class Trajectory:
    """Walk along local-frame waypoints at constant speed.

    The anchor maps the local frame onto lat/lon so chunks can be routed
    to geohash cells.
    """

    waypoints: np.ndarray  # (k, 2) local meters
    speed: float = 1.2
    anchor: gh.GeoAnchor = field(default_factory=lambda: gh.GeoAnchor(35.90, 139.41))

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        if len(self.waypoints) < 1:
            raise ValueError("trajectory needs at least one waypoint")
        if self.speed <= 0:
            raise ValueError("speed must be positive")

    @property
    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def waypoints_latlon(self) -> list[tuple[float, float]]:
        return [self.anchor.to_latlon(x, y) for x, y in self.waypoints]

    def poses(self, dt: float):
        """(position (x, y), heading rad) sampled every `dt` seconds."""
        pts = self.waypoints
        if len(pts) < 2 or self.length == 0.0:
            yield pts[0].copy(), 0.0
            return
        seg_vec = np.diff(pts, axis=0)
        seg_len = np.linalg.norm(seg_vec, axis=1)
        headings = np.arctan2(seg_vec[:, 1], seg_vec[:, 0])
        cum = np.concatenate([[0.0], np.cumsum(seg_len)])
        total = cum[-1]
        s = 0.0
        while s <= total:
            seg = int(np.searchsorted(cum, s, side="right") - 1)
            seg = min(seg, len(seg_len) - 1)
            if seg_len[seg] > 0:
                frac = (s - cum[seg]) / seg_len[seg]
            else:
                frac = 0.0
            pos = pts[seg] + frac * seg_vec[seg]
            yield pos, float(headings[seg])
            s += self.speed * dt


def _rotz(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def passive_scan(
    scene: SceneModel,
    trajectory: Trajectory,
    sensor: SensorModel = SensorModel(),
    chunk_threshold: int = CHUNK_THRESHOLD,
    seed: int = 0,
    session_id: str = "sim",
) -> list[PointCloud]:
    """Scan the scene along the trajectory; returns the emitted chunks.

    Every non-final chunk strictly exceeds `chunk_threshold` points and
    overshoots it by less than one frame's rays. Points are in the
    session-local frame (the scene frame; self-localization is ideal).
    """
    w, h = scene.extent
    if (trajectory.waypoints[:, 0].min() < 0 or trajectory.waypoints[:, 0].max() > w
            or trajectory.waypoints[:, 1].min() < 0 or trajectory.waypoints[:, 1].max() > h):
        raise ValueError("trajectory leaves the scene extent")

    rng = np.random.default_rng(seed)
    grid = sensor.ray_grid()
    chunks: list[PointCloud] = []
    buf: list[dict] = []
    buf_count = 0
    prev_yaw = None
    timestamp = 0.0

    def flush(final: bool):
        nonlocal buf, buf_count
        if buf_count == 0:
            return
        data = {
            key: np.concatenate([frame[key] for frame in buf])
            for key in ("position", "color", "confidence", "depth", "orientation",
                        "angular_velocity", "device_position")
        }
        cloud = PointCloud.from_positions(
            data["position"],
            frame=FRAME_SESSION,
            color=data["color"],
            confidence=data["confidence"],
            depth=data["depth"],
            orientation=data["orientation"],
            angular_velocity=data["angular_velocity"],
            device_position=data["device_position"],
        )
        centroid = data["device_position"][:, :2].astype(np.float64).mean(axis=0)
        lat, lon = trajectory.anchor.to_latlon(float(centroid[0]), float(centroid[1]))
        cloud.meta.update(
            session_id=session_id,
            sequence=len(chunks),
            geohash=gh.encode(lat, lon, 8),
            timestamp=timestamp,
            final=final,
        )
        chunks.append(cloud)
        buf = []
        buf_count = 0

    for pos, yaw in trajectory.poses(sensor.frame_interval):
        origin = np.array([pos[0], pos[1], sensor.height])
        dirs = grid @ _rotz(yaw).T
        ranges, _, surf_idx = raycast(scene, origin, dirs)
        hit = np.isfinite(ranges) & (ranges <= sensor.max_capture_range)
        if prev_yaw is None:
            yaw_rate = 0.0
        else:
            yaw_rate = (yaw - prev_yaw) / sensor.frame_interval
        prev_yaw = yaw
        timestamp += sensor.frame_interval
        n_hit = int(hit.sum())
        if n_hit:
            true_range = ranges[hit]
            measured = np.maximum(true_range + rng.normal(0.0, sensor.range_noise_sigma, n_hit), 0.01)
            points = origin[None, :] + measured[:, None] * dirs[hit]
            colors = np.array(
                [scene.surfaces[s].color for s in surf_idx[hit]], dtype=np.uint8
            )
            frame = {
                "position": points.astype(np.float32),
                "color": colors,
                "confidence": sensor.confidence_for_range(true_range),
                "depth": measured.astype(np.float32)[:, None],
                "orientation": np.tile(
                    np.array([0.0, math.radians(sensor.pitch_deg), yaw], dtype=np.float32),
                    (n_hit, 1),
                ),
                "angular_velocity": np.tile(
                    np.array([0.0, 0.0, yaw_rate], dtype=np.float32), (n_hit, 1)
                ),
                "device_position": np.tile(origin.astype(np.float32), (n_hit, 1)),
            }
            buf.append(frame)
            buf_count += n_hit
        if buf_count > chunk_threshold:
            flush(final=False)
    flush(final=True)
    return chunks
