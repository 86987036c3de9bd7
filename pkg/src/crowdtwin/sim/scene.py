"""Deterministic synthetic urban scene: ground, building facades, obstacles.

Surfaces are axis-aligned rectangles, which keeps ray casting exact and
the expected-coverage oracle computable in closed form. Buildings sit on
a jittered grid so that any city-block-sized window contains structure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..points import PointCloud

GROUND_COLOR = (96, 96, 88, 255)


@dataclass(frozen=True)
class Surface:
    """Axis-aligned rectangle: plane `axis` = `offset`, bounded on the
    other two axes (u, v follow axis order with `axis` removed).
    `outward_sign` gives the open-space side along the plane axis."""

    axis: int  # 0: x-normal, 1: y-normal, 2: z-normal
    offset: float
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    color: tuple[int, int, int, int]
    kind: str  # ground | facade | top
    outward_sign: float = 1.0

    @property
    def outward(self) -> tuple[float, float, float]:
        n = [0.0, 0.0, 0.0]
        n[self.axis] = self.outward_sign
        return tuple(n)

    @property
    def u_axis(self) -> int:
        return 1 if self.axis == 0 else 0

    @property
    def v_axis(self) -> int:
        return 1 if self.axis == 2 else 2

    @property
    def area(self) -> float:
        return (self.u_range[1] - self.u_range[0]) * (self.v_range[1] - self.v_range[0])


@dataclass
class SceneModel:
    seed: int
    extent: tuple[float, float]
    surfaces: list[Surface] = field(default_factory=list)

    @property
    def facades(self) -> list[Surface]:
        return [s for s in self.surfaces if s.kind == "facade"]


def _box_surfaces(x0, x1, y0, y1, height, color, kind="facade") -> list[Surface]:
    return [
        Surface(0, x0, (y0, y1), (0.0, height), color, kind, outward_sign=-1.0),
        Surface(0, x1, (y0, y1), (0.0, height), color, kind, outward_sign=1.0),
        Surface(1, y0, (x0, x1), (0.0, height), color, kind, outward_sign=-1.0),
        Surface(1, y1, (x0, x1), (0.0, height), color, kind, outward_sign=1.0),
        Surface(2, height, (x0, x1), (y0, y1), color, "top", outward_sign=1.0),
    ]


def generate_scene(seed: int, extent: tuple[float, float]) -> SceneModel:
    """Ground plane plus buildings on a jittered ~15 m grid and scattered
    box obstacles; identical seeds produce identical scenes."""
    w, h = float(extent[0]), float(extent[1])
    if w <= 0 or h <= 0:
        raise ValueError("extent must be positive")
    rng = np.random.default_rng(seed)
    scene = SceneModel(seed=seed, extent=(w, h))
    scene.surfaces.append(Surface(2, 0.0, (0.0, w), (0.0, h), GROUND_COLOR, "ground"))

    cell = 15.0
    nx = max(2, int(round(w / cell)))
    ny = max(2, int(round(h / cell)))
    sx, sy = w / nx, h / ny
    for ix in range(nx):
        for iy in range(ny):
            if rng.random() < 0.15:  # leave some open plazas
                continue
            bw = rng.uniform(0.3, 0.6) * sx
            bh = rng.uniform(0.3, 0.6) * sy
            cx = (ix + rng.uniform(0.35, 0.65)) * sx
            cy = (iy + rng.uniform(0.35, 0.65)) * sy
            x0 = float(np.clip(cx - bw / 2, 0.0, w - bw))
            y0 = float(np.clip(cy - bh / 2, 0.0, h - bh))
            height = float(rng.uniform(5.0, 16.0))
            color = tuple(int(v) for v in rng.integers(60, 220, 3)) + (255,)
            scene.surfaces.extend(_box_surfaces(x0, x0 + bw, y0, y0 + bh, height, color))
            if rng.random() < 0.5:  # annex wing makes the footprint L-shaped
                ww = rng.uniform(0.4, 0.8) * bw
                wh = rng.uniform(0.4, 0.8) * bh
                wx0 = float(np.clip(x0 + rng.uniform(-0.5, 0.9) * bw, 0.0, w - ww))
                wy0 = float(np.clip(y0 + rng.uniform(-0.5, 0.9) * bh, 0.0, h - wh))
                wing_h = float(rng.uniform(3.0, height))
                scene.surfaces.extend(
                    _box_surfaces(wx0, wx0 + ww, wy0, wy0 + wh, wing_h, color)
                )

    # street furniture: dense, continuously-sized boxes give neighborhoods
    # distinctive local geometry
    n_obstacles = max(8, int(w * h / 35.0))
    for _ in range(n_obstacles):
        ow = float(rng.uniform(0.4, 3.0))
        od = float(rng.uniform(0.4, 3.0))
        oh = float(rng.uniform(0.3, 2.2))
        x0 = float(rng.uniform(0.0, max(w - ow, 1e-6)))
        y0 = float(rng.uniform(0.0, max(h - od, 1e-6)))
        color = tuple(int(v) for v in rng.integers(40, 255, 3)) + (255,)
        scene.surfaces.extend(_box_surfaces(x0, x0 + ow, y0, y0 + od, oh, color, kind="facade"))
    return scene


def raycast(scene: SceneModel, origin: np.ndarray, directions: np.ndarray):
    """First surface hit per ray.

    Returns (ranges, points, surface_index); misses carry range inf and
    index -1. Vectorized over rays x surfaces.
    """
    origin = np.asarray(origin, dtype=np.float64)
    dirs = np.asarray(directions, dtype=np.float64)
    n = len(dirs)
    best_t = np.full(n, np.inf)
    best_s = np.full(n, -1, dtype=np.int64)
    for s_idx, surf in enumerate(scene.surfaces):
        da = dirs[:, surf.axis]
        hits_plane = np.abs(da) > 1e-12
        t = np.where(hits_plane, (surf.offset - origin[surf.axis]) / np.where(hits_plane, da, 1.0), np.inf)
        valid = hits_plane & (t > 1e-6)
        t_safe = np.where(valid, t, 0.0)  # keep inf out of the bounds math
        u = origin[surf.u_axis] + t_safe * dirs[:, surf.u_axis]
        v = origin[surf.v_axis] + t_safe * dirs[:, surf.v_axis]
        valid &= (u >= surf.u_range[0]) & (u <= surf.u_range[1])
        valid &= (v >= surf.v_range[0]) & (v <= surf.v_range[1])
        closer = valid & (t < best_t)
        best_t = np.where(closer, t, best_t)
        best_s = np.where(closer, s_idx, best_s)
    points = origin[None, :] + best_t[:, None] * dirs
    return best_t, points, best_s


def sample_scene_cloud(scene: SceneModel, spacing: float, jitter: float = 0.3, seed: int = 0,
                       viewpoint_standoff: float = 2.0) -> PointCloud:
    """Sample every surface on a jittered grid at roughly `spacing`.

    Produces a position+color+device_position cloud dense enough to stand
    in for a city-scale capture of the scene; the synthetic viewpoint sits
    `viewpoint_standoff` meters off each surface on its open side, which
    keeps normal orientation consistent and rotation-covariant.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    rng = np.random.default_rng(seed)
    pts = []
    cols = []
    views = []
    for surf in scene.surfaces:
        u0, u1 = surf.u_range
        v0, v1 = surf.v_range
        nu = max(1, int(np.ceil((u1 - u0) / spacing)))
        nv = max(1, int(np.ceil((v1 - v0) / spacing)))
        uu, vv = np.meshgrid(
            u0 + (np.arange(nu) + 0.5) * (u1 - u0) / nu,
            v0 + (np.arange(nv) + 0.5) * (v1 - v0) / nv,
            indexing="ij",
        )
        uu = uu.ravel() + rng.uniform(-jitter, jitter, uu.size) * spacing
        vv = vv.ravel() + rng.uniform(-jitter, jitter, vv.size) * spacing
        uu = np.clip(uu, u0, u1)
        vv = np.clip(vv, v0, v1)
        p = np.empty((uu.size, 3))
        p[:, surf.axis] = surf.offset
        p[:, surf.u_axis] = uu
        p[:, surf.v_axis] = vv
        pts.append(p)
        cols.append(np.tile(np.array(surf.color, dtype=np.uint8), (uu.size, 1)))
        views.append(p + viewpoint_standoff * np.asarray(surf.outward))
    positions = np.concatenate(pts).astype(np.float32)
    colors = np.concatenate(cols)
    device = np.concatenate(views).astype(np.float32)
    return PointCloud.from_positions(positions, color=colors, device_position=device)
