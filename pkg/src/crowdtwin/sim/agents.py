"""Scripted agents for the territory-coloring game.

Each step, agents discover and paint grid nodes around them and emit a
scan frame from their pose, like a handheld device would while its owner
plays. The cell-local frame shares its origin with the scene frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..game import Agent, ColorEvent, GameState, paint_step
from ..points import FRAME_SESSION, PointCloud
from .scene import SceneModel, raycast
from .sensor import SensorModel, _rotz


def active_game_step(
    state: GameState,
    agents: list[Agent],
    scene: SceneModel | None = None,
    sensor: SensorModel = SensorModel(),
    rng: np.random.Generator | None = None,
) -> tuple[GameState, list[PointCloud], list[ColorEvent]]:
    """Advance the game one step; returns (state, scan frames, events)."""
    state, events = paint_step(state, agents)
    scans: list[PointCloud] = []
    if scene is not None:
        rng = rng or np.random.default_rng(0)
        grid = sensor.ray_grid()
        for agent in agents:
            yaw = float(rng.uniform(-math.pi, math.pi))
            origin = np.array([agent.x, agent.y, sensor.height])
            dirs = grid @ _rotz(yaw).T
            ranges, _, surf_idx = raycast(scene, origin, dirs)
            hit = np.isfinite(ranges) & (ranges <= sensor.max_capture_range)
            n_hit = int(hit.sum())
            if not n_hit:
                continue
            true_range = ranges[hit]
            measured = np.maximum(
                true_range + rng.normal(0.0, sensor.range_noise_sigma, n_hit), 0.01
            )
            points = origin[None, :] + measured[:, None] * dirs[hit]
            colors = np.array([scene.surfaces[s].color for s in surf_idx[hit]], dtype=np.uint8)
            frame = PointCloud.from_positions(
                points.astype(np.float32),
                frame=FRAME_SESSION,
                color=colors,
                confidence=sensor.confidence_for_range(true_range),
                depth=measured.astype(np.float32)[:, None],
                orientation=np.tile(
                    np.array([0.0, math.radians(sensor.pitch_deg), yaw], dtype=np.float32),
                    (n_hit, 1),
                ),
                angular_velocity=np.zeros((n_hit, 3), dtype=np.float32),
                device_position=np.tile(origin.astype(np.float32), (n_hit, 1)),
            )
            frame.meta.update(team=agent.team, step=state.step)
            scans.append(frame)
    return state, scans, events


@dataclass
class SweepPolicy:
    """Boustrophedon sweep across the cell, painting as it goes."""

    team: str
    cell_width: float
    cell_height: float
    stride: float = 2.0
    step_length: float = 1.5
    paint_radius: float = 2.0
    sense_radius: float = 5.0

    def positions(self):
        y = self.stride / 2
        left_to_right = True
        while y < self.cell_height:
            xs = np.arange(self.step_length / 2, self.cell_width, self.step_length)
            if not left_to_right:
                xs = xs[::-1]
            for x in xs:
                yield float(x), float(y)
            left_to_right = not left_to_right
            y += self.stride

    def agent_at(self, x: float, y: float) -> Agent:
        return Agent(self.team, x, y, self.paint_radius, self.sense_radius)
