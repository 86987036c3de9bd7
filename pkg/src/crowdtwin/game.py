"""Territory-coloring game state for one geohash cell.

Nodes live on a fixed-pitch grid over the cell and are discovered lazily
as agents sense them; each node is uncolored or owned by a team. Team
score always equals the number of nodes the team currently owns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import geohash as gh

DEFAULT_NODE_SPACING = 0.5
DEFAULT_TEAMS = ("red", "blue")


@dataclass
class ArNode:
    node_id: str
    x: float  # cell-local meters from the SW corner
    y: float
    team: str | None = None
    colored_at: int | None = None  # game step counter


@dataclass
class ColorEvent:
    node_id: str
    old_team: str | None
    new_team: str
    step: int


@dataclass
class GameState:
    geohash: str
    node_spacing: float = DEFAULT_NODE_SPACING
    teams: tuple[str, ...] = DEFAULT_TEAMS
    nodes: dict[str, ArNode] = field(default_factory=dict)
    scores: dict[str, int] = field(default_factory=dict)
    step: int = 0
    cols: int = 0
    rows: int = 0
    max_nodes: int | None = None  # optional cap on discovered nodes

    def __post_init__(self):
        if not self.scores:
            self.scores = {t: 0 for t in self.teams}
        if self.cols == 0 or self.rows == 0:
            height, width = gh.cell_dimensions(self.geohash)
            self.cols = max(1, int(width / self.node_spacing))
            self.rows = max(1, int(height / self.node_spacing))

    def node_id_at(self, ix: int, iy: int) -> str:
        return f"{ix}_{iy}"

    def node_position(self, ix: int, iy: int) -> tuple[float, float]:
        return ((ix + 0.5) * self.node_spacing, (iy + 0.5) * self.node_spacing)

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.cols and 0 <= iy < self.rows

    def parse_node_id(self, node_id: str) -> tuple[int, int]:
        try:
            ix_s, iy_s = node_id.split("_")
            ix, iy = int(ix_s), int(iy_s)
        except ValueError:
            raise KeyError(f"malformed node id {node_id!r}") from None
        if not self.in_grid(ix, iy):
            raise KeyError(f"node {node_id!r} outside the {self.cols}x{self.rows} grid")
        return ix, iy

    def grid_indices_within(self, x: float, y: float, radius: float):
        """Grid (ix, iy) pairs whose node centers fall within `radius`."""
        p = self.node_spacing
        lo_x = max(0, int((x - radius) / p - 0.5))
        hi_x = min(self.cols - 1, int((x + radius) / p))
        lo_y = max(0, int((y - radius) / p - 0.5))
        hi_y = min(self.rows - 1, int((y + radius) / p))
        out = []
        r2 = radius * radius
        for ix in range(lo_x, hi_x + 1):
            for iy in range(lo_y, hi_y + 1):
                nx, ny = self.node_position(ix, iy)
                if (nx - x) ** 2 + (ny - y) ** 2 <= r2:
                    out.append((ix, iy))
        return out

    def discover(self, ix: int, iy: int) -> ArNode:
        """Add the grid node if unseen; discovery never removes nodes."""
        node_id = self.node_id_at(ix, iy)
        node = self.nodes.get(node_id)
        if node is None:
            if self.max_nodes is not None and len(self.nodes) >= self.max_nodes:
                return None
            x, y = self.node_position(ix, iy)
            node = ArNode(node_id, x, y)
            self.nodes[node_id] = node
        return node

    def paint(self, node: ArNode, team: str) -> ColorEvent | None:
        """Color or recolor one node; returns the change event, if any."""
        if team not in self.scores:
            raise KeyError(f"unknown team {team!r}")
        old = node.team
        node.colored_at = self.step
        if old == team:
            return None
        if old is not None:
            self.scores[old] -= 1
        self.scores[team] += 1
        node.team = team
        return ColorEvent(node.node_id, old, team, self.step)

    @property
    def total_nodes(self) -> int:
        return len(self.nodes)

    @property
    def colored_nodes(self) -> int:
        return sum(1 for n in self.nodes.values() if n.team is not None)

    def check_scores(self) -> bool:
        """Score conservation: per-team counts match node ownership."""
        counts = {t: 0 for t in self.scores}
        for n in self.nodes.values():
            if n.team is not None:
                counts[n.team] += 1
        return counts == self.scores

    def to_dict(self) -> dict:
        return {
            "geohash": self.geohash,
            "node_spacing": self.node_spacing,
            "teams": list(self.teams),
            "cols": self.cols,
            "rows": self.rows,
            "step": self.step,
            "max_nodes": self.max_nodes,
            "scores": dict(self.scores),
            "nodes": {
                nid: {"x": n.x, "y": n.y, "team": n.team, "colored_at": n.colored_at}
                for nid, n in self.nodes.items()
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "GameState":
        state = GameState(
            geohash=d["geohash"],
            node_spacing=d["node_spacing"],
            teams=tuple(d["teams"]),
            scores=dict(d["scores"]),
            step=d.get("step", 0),
            cols=d["cols"],
            rows=d["rows"],
            max_nodes=d.get("max_nodes"),
        )
        for nid, nd in d.get("nodes", {}).items():
            state.nodes[nid] = ArNode(nid, nd["x"], nd["y"], nd["team"], nd["colored_at"])
        return state


@dataclass(frozen=True)
class Agent:
    team: str
    x: float
    y: float
    paint_radius: float = 2.0
    sense_radius: float = 5.0


def paint_step(state: GameState, agents) -> tuple[GameState, list[ColorEvent]]:
    """Advance the game one step: discover in-range nodes, then paint.

    Uncolored nodes gain the visiting team, opposing nodes flip; nodes the
    team already owns only refresh their timestamp.
    """
    state.step += 1
    events: list[ColorEvent] = []
    for agent in agents:
        for ix, iy in state.grid_indices_within(agent.x, agent.y, agent.sense_radius):
            state.discover(ix, iy)
        for ix, iy in state.grid_indices_within(agent.x, agent.y, agent.paint_radius):
            node = state.nodes.get(state.node_id_at(ix, iy))
            if node is None:
                continue
            event = state.paint(node, agent.team)
            if event is not None:
                events.append(event)
    return state, events


def ar_node_stats(history) -> list[tuple[int, int]]:
    """(total nodes, colored nodes) per recorded game state snapshot."""
    history = list(history)
    if not history:
        raise ValueError("history must be nonempty")
    return [(s["total"], s["colored"]) if isinstance(s, dict) else (s.total_nodes, s.colored_nodes) for s in history]


def snapshot_counts(state: GameState) -> dict:
    return {"total": state.total_nodes, "colored": state.colored_nodes}
