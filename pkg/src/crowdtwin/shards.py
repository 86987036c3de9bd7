"""Region-sharded persistence keyed by geohash code.

One directory per cell holds its immutable chunk files, the rewritable
merged tile, the game-state document, and the review queue. Mutations on
one shard are serialized by a per-shard lock and bump a version counter;
different shards never contend.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geohash as gh
from .game import GameState
from .plyio import parse_ply, write_ply
from .points import FRAME_UDT, PointCloud

_CHUNK_RE = re.compile(r"^chunk_(\d{5})\.ply$")

REVIEW_PENDING = "pending"
REVIEW_APPROVED = "approved"
REVIEW_REJECTED = "rejected"


class ShardError(Exception):
    pass


class ReviewConflictError(ShardError):
    """Review verdict submitted for an item that is no longer pending."""


@dataclass
class ReviewItem:
    item_id: str
    chunk_id: str
    geohash: str
    proposed: dict  # RegistrationResult.to_dict()
    status: str = REVIEW_PENDING
    created_at: float = field(default_factory=time.time)
    resolved_at: float | None = None
    adjustment: dict | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "chunk_id": self.chunk_id,
            "geohash": self.geohash,
            "proposed": self.proposed,
            "status": self.status,
            "created_at": self.created_at,
            "resolved_at": self.resolved_at,
            "adjustment": self.adjustment,
        }

    @staticmethod
    def from_dict(d: dict) -> "ReviewItem":
        return ReviewItem(**d)


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class RegionShard:
    """All state for one geohash cell."""

    def __init__(self, code: str, directory: Path):
        self.geohash = code
        self.dir = Path(directory)
        self.lock = threading.RLock()
        self.chunk_ids: list[str] = []
        self.udt_tile: PointCloud = PointCloud.empty(frame=FRAME_UDT)
        self.game: GameState | None = None
        self.reviews: dict[str, ReviewItem] = {}
        self.version = 0

    # -- persistence ------------------------------------------------------

    def load(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        self.chunk_ids = sorted(
            name[:-4] for name in os.listdir(self.dir) if _CHUNK_RE.match(name)
        )
        tile_path = self.dir / "tile.ply"
        if tile_path.exists():
            tile = parse_ply(tile_path.read_bytes())
            tile.frame = FRAME_UDT
            self.udt_tile = tile
        game_path = self.dir / "game.json"
        if game_path.exists():
            self.game = GameState.from_dict(json.loads(game_path.read_text()))
        reviews_path = self.dir / "reviews.json"
        if reviews_path.exists():
            for d in json.loads(reviews_path.read_text()):
                item = ReviewItem.from_dict(d)
                self.reviews[item.item_id] = item
        meta_path = self.dir / "meta.json"
        if meta_path.exists():
            self.version = json.loads(meta_path.read_text()).get("version", 0)

    def _persist_meta(self):
        _atomic_write(self.dir / "meta.json", json.dumps({"version": self.version}).encode())

    def _persist_reviews(self):
        payload = json.dumps([r.to_dict() for r in self.reviews.values()], indent=1)
        _atomic_write(self.dir / "reviews.json", payload.encode())

    def _bump(self):
        self.version += 1
        self._persist_meta()

    # -- mutations (call under self.lock) ---------------------------------

    def add_chunk(self, raw: bytes) -> str:
        with self.lock:
            chunk_id = f"chunk_{len(self.chunk_ids) + 1:05d}"
            _atomic_write(self.dir / f"{chunk_id}.ply", raw)
            self.chunk_ids.append(chunk_id)
            self._bump()
            return chunk_id

    def read_chunk(self, chunk_id: str) -> PointCloud:
        path = self.dir / f"{chunk_id}.ply"
        if not path.exists():
            raise ShardError(f"unknown chunk {chunk_id} in {self.geohash}")
        return parse_ply(path.read_bytes())

    def set_tile(self, tile: PointCloud):
        with self.lock:
            tile.frame = FRAME_UDT
            self.udt_tile = tile
            _atomic_write(self.dir / "tile.ply", write_ply(tile, "binary"))
            self._bump()

    def get_or_create_game(self, node_spacing: float = 0.5) -> GameState:
        with self.lock:
            if self.game is None:
                self.game = GameState(geohash=self.geohash, node_spacing=node_spacing)
                self.persist_game()
            return self.game

    def persist_game(self):
        if self.game is not None:
            _atomic_write(self.dir / "game.json", json.dumps(self.game.to_dict(), indent=1).encode())

    def add_review(self, chunk_id: str, proposed: dict) -> ReviewItem:
        with self.lock:
            item = ReviewItem(
                item_id=uuid.uuid4().hex[:12],
                chunk_id=chunk_id,
                geohash=self.geohash,
                proposed=proposed,
            )
            self.reviews[item.item_id] = item
            self._persist_reviews()
            return item

    def resolve_review(self, item_id: str, status: str, adjustment: dict | None = None) -> ReviewItem:
        """pending -> approved/rejected exactly once; anything else conflicts."""
        with self.lock:
            item = self.reviews.get(item_id)
            if item is None:
                raise ShardError(f"unknown review item {item_id}")
            if item.status != REVIEW_PENDING:
                raise ReviewConflictError(f"review {item_id} already {item.status}")
            item.status = status
            item.adjustment = adjustment
            item.resolved_at = time.time()
            self._persist_reviews()
            return item


class RegionStore:
    """Shards on disk under one root, created on demand."""

    def __init__(self, root: Path, precision: int = 8):
        self.root = Path(root)
        self.precision = precision
        self._shards: dict[str, RegionShard] = {}
        self._lock = threading.Lock()
        self.root.mkdir(parents=True, exist_ok=True)
        for name in sorted(os.listdir(self.root)):
            if (self.root / name).is_dir() and all(c in gh.BASE32 for c in name):
                shard = RegionShard(name, self.root / name)
                shard.load()
                self._shards[name] = shard

    def shard_for_code(self, code: str) -> RegionShard:
        with self._lock:
            shard = self._shards.get(code)
            if shard is None:
                shard = RegionShard(code, self.root / code)
                shard.load()
                self._shards[code] = shard
            return shard

    def shard_for(self, lat: float, lon: float, precision: int | None = None) -> RegionShard:
        code = gh.encode(lat, lon, precision or self.precision)
        return self.shard_for_code(code)

    def codes(self) -> list[str]:
        with self._lock:
            return sorted(self._shards)

    def pending_reviews(self) -> list[ReviewItem]:
        out = []
        with self._lock:
            shards = list(self._shards.values())
        for shard in shards:
            with shard.lock:
                out.extend(r for r in shard.reviews.values() if r.status == REVIEW_PENDING)
        return sorted(out, key=lambda r: r.created_at)

    def find_review(self, item_id: str) -> tuple[RegionShard, ReviewItem] | None:
        with self._lock:
            shards = list(self._shards.values())
        for shard in shards:
            item = shard.reviews.get(item_id)
            if item is not None:
                return shard, item
        return None


def chunk_centroid_latlon(cloud: PointCloud, anchor: gh.GeoAnchor) -> tuple[float, float]:
    """Map the chunk's device-position centroid into lat/lon via the anchor."""
    if "device_position" in cloud.schema and len(cloud) > 0:
        xy = cloud.data["device_position"][:, :2].astype(np.float64)
    else:
        xy = cloud.positions[:, :2].astype(np.float64)
    cx, cy = xy.mean(axis=0) if len(xy) else (0.0, 0.0)
    return anchor.to_latlon(float(cx), float(cy))
