import numpy as np
import pytest

from crowdtwin import geohash as gh
from crowdtwin.game import Agent, GameState, ar_node_stats, paint_step, snapshot_counts
from crowdtwin.sim import generate_scene
from crowdtwin.sim.agents import SweepPolicy, active_game_step


CELL = gh.encode(35.90, 139.41, 8)


def fresh_state():
    return GameState(geohash=CELL)


class TestGameState:
    def test_grid_dimensions_from_cell(self):
        state = fresh_state()
        height, width = gh.cell_dimensions(CELL)
        assert state.cols == int(width / 0.5)
        assert state.rows == int(height / 0.5)

    def test_paint_uncolored_scores(self):
        state = fresh_state()
        state, events = paint_step(state, [Agent("red", 5.0, 5.0, paint_radius=1.2)])
        assert len(events) == state.scores["red"] > 0
        assert state.scores["blue"] == 0
        assert state.check_scores()

    def test_recolor_flips_ownership(self):
        state = fresh_state()
        state, _ = paint_step(state, [Agent("red", 5.0, 5.0, paint_radius=1.2)])
        red = state.scores["red"]
        state, events = paint_step(state, [Agent("blue", 5.0, 5.0, paint_radius=1.2)])
        assert state.scores["red"] == 0
        assert state.scores["blue"] == red
        assert len(events) == red
        assert state.check_scores()

    def test_own_nodes_idempotent_except_timestamps(self):
        state = fresh_state()
        state, _ = paint_step(state, [Agent("red", 5.0, 5.0, paint_radius=1.2)])
        before = {nid: n.team for nid, n in state.nodes.items()}
        scores = dict(state.scores)
        state, events = paint_step(state, [Agent("red", 5.0, 5.0, paint_radius=1.2)])
        assert events == []
        assert {nid: n.team for nid, n in state.nodes.items()} == before
        assert state.scores == scores

    def test_score_conservation_randomized(self, rng):
        state = fresh_state()
        teams = ("red", "blue")
        for _ in range(300):
            agents = [
                Agent(teams[int(rng.integers(2))],
                      float(rng.uniform(0, 25)), float(rng.uniform(0, 15)),
                      paint_radius=float(rng.uniform(0.5, 3.0)))
                for _ in range(int(rng.integers(1, 4)))
            ]
            prev_total = state.total_nodes
            prev_colored = state.colored_nodes
            state, _ = paint_step(state, agents)
            assert state.check_scores()
            assert state.total_nodes >= prev_total
            assert state.colored_nodes >= prev_colored

    def test_node_cap(self):
        state = GameState(geohash=CELL, max_nodes=10)
        state, _ = paint_step(state, [Agent("red", 5.0, 5.0, paint_radius=3.0, sense_radius=6.0)])
        assert state.total_nodes == 10

    def test_serialization_round_trip(self):
        state = fresh_state()
        state, _ = paint_step(state, [Agent("red", 3.0, 3.0)])
        back = GameState.from_dict(state.to_dict())
        assert back.scores == state.scores
        assert set(back.nodes) == set(state.nodes)
        assert back.check_scores()


class TestArNodeStats:
    def test_empty_history_rejected(self):
        with pytest.raises(ValueError):
            ar_node_stats([])

    def test_constant_without_agents(self):
        state = fresh_state()
        history = [snapshot_counts(state) for _ in range(5)]
        series = ar_node_stats(history)
        assert series == [(0, 0)] * 5

    def test_sweep_reaches_full_coloring(self):
        state = GameState(geohash=CELL, node_spacing=2.0)
        policy = SweepPolicy(
            team="red",
            cell_width=state.cols * 2.0,
            cell_height=state.rows * 2.0,
            stride=2.0,
            step_length=2.0,
            paint_radius=3.0,
            sense_radius=6.0,
        )
        history = []
        for x, y in policy.positions():
            state, _, _ = active_game_step(state, [policy.agent_at(x, y)])
            history.append(snapshot_counts(state))
        series = ar_node_stats(history)
        totals = [t for t, _ in series]
        colored = [c for _, c in series]
        assert all(b >= a for a, b in zip(totals, totals[1:]))
        assert all(b >= a for a, b in zip(colored, colored[1:]))
        assert colored[-1] == totals[-1] == state.rows * state.cols

    def test_recolor_phase_constant_counts(self):
        state = GameState(geohash=CELL, node_spacing=2.0)
        state, _ = paint_step(state, [Agent("red", 10.0, 8.0, paint_radius=4.0, sense_radius=4.0)])
        total, colored = state.total_nodes, state.colored_nodes
        for _ in range(5):
            state, _ = paint_step(state, [Agent("blue", 10.0, 8.0, paint_radius=4.0, sense_radius=4.0)])
            state, _ = paint_step(state, [Agent("red", 10.0, 8.0, paint_radius=4.0, sense_radius=4.0)])
            assert (state.total_nodes, state.colored_nodes) == (total, colored)
            assert state.check_scores()


class TestActiveScans:
    def test_agents_emit_scan_frames(self):
        scene = generate_scene(4, (30, 20))
        state = GameState(geohash=CELL)
        agents = [Agent("red", 10.0, 10.0), Agent("blue", 20.0, 10.0)]
        state, scans, events = active_game_step(
            state, agents, scene=scene, rng=np.random.default_rng(0)
        )
        assert len(scans) == 2
        for frame in scans:
            assert len(frame) > 0
            assert "confidence" in frame.schema
            assert frame.meta["team"] in ("red", "blue")
