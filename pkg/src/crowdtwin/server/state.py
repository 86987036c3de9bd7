"""In-process server state: sessions, integration jobs, and stream fan-out.

Shard data itself lives in the RegionStore; everything here is transient
and rebuilt empty on restart.
"""

from __future__ import annotations

import base64
import queue
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..geohash import GeoAnchor
from ..points import PointCloud

MODE_ACTIVE = "active"
MODE_PASSIVE = "passive"

EVENT_INCREMENTAL = "incremental"
EVENT_FRAME = "frame"
EVENT_SITUATIONAL = "situational"
EVENT_GAME = "game"

CONFIDENCE_PALETTE = {
    0: (220, 60, 60, 255),
    1: (240, 200, 70, 255),
    2: (80, 200, 120, 255),
}

SITUATIONAL_RULES = ("by-confidence",)


@dataclass
class Session:
    session_id: str
    mode: str
    team: str | None
    anchor: GeoAnchor
    geohash: str
    created_at: float = field(default_factory=time.time)
    last_seen: float = field(default_factory=time.time)


class SessionRegistry:
    def __init__(self, teams=("red", "blue")):
        self.teams = tuple(teams)
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, mode: str, anchor: GeoAnchor, geohash: str, team_preference: str | None) -> Session:
        with self._lock:
            team = None
            if mode == MODE_ACTIVE:
                team = self._assign_team(team_preference)
            session = Session(
                session_id=uuid.uuid4().hex,
                mode=mode,
                team=team,
                anchor=anchor,
                geohash=geohash,
            )
            self._sessions[session.session_id] = session
            return session

    def _assign_team(self, preference: str | None) -> str:
        sizes = {t: 0 for t in self.teams}
        for s in self._sessions.values():
            if s.team in sizes:
                sizes[s.team] += 1
        smallest = min(sizes.values())
        if preference in sizes and sizes[preference] <= smallest:
            return preference
        # balance within +/-1: always join a smallest team
        return min(self.teams, key=lambda t: (sizes[t], self.teams.index(t)))

    def get(self, session_id: str) -> Session | None:
        with self._lock:
            session = self._sessions.get(session_id)
            if session:
                session.last_seen = time.time()
            return session

    def team_sizes(self) -> dict[str, int]:
        with self._lock:
            sizes = {t: 0 for t in self.teams}
            for s in self._sessions.values():
                if s.team in sizes:
                    sizes[s.team] += 1
            return sizes


@dataclass
class Job:
    job_id: str
    chunk_id: str
    geohash: str
    status: str = "queued"  # queued | running | done | failed
    result: dict | None = None
    error: str | None = None
    review_item_id: str | None = None


class JobQueue:
    """Integration jobs on a small worker pool; per-shard locks serialize
    writers while different shards integrate in parallel."""

    def __init__(self, workers: int = 2):
        self._jobs: dict[str, Job] = {}
        self._lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="integrate")

    def submit(self, chunk_id: str, geohash: str, fn) -> Job:
        job = Job(job_id=uuid.uuid4().hex[:12], chunk_id=chunk_id, geohash=geohash)
        with self._lock:
            self._jobs[job.job_id] = job

        def run():
            job.status = "running"
            try:
                fn(job)
                job.status = "done"
            except Exception as exc:  # surfaced via the job endpoint
                job.status = "failed"
                job.error = str(exc)

        self._pool.submit(run)
        return job

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def drain(self, timeout: float = 60.0) -> bool:
        """Wait until no job is queued or running (test/ops helper)."""
        deadline = time.time() + timeout
        while time.time() < deadline:
            with self._lock:
                busy = any(j.status in ("queued", "running") for j in self._jobs.values())
            if not busy:
                return True
            time.sleep(0.02)
        return False

    def shutdown(self):
        self._pool.shutdown(wait=False, cancel_futures=True)


def encode_point_buffer(positions: np.ndarray, colors: np.ndarray) -> str:
    """count (uint32 LE) + xyz float32 triples + rgba bytes, base64-coded."""
    n = len(positions)
    head = np.asarray([n], dtype="<u4").tobytes()
    xyz = np.ascontiguousarray(positions, dtype="<f4").tobytes()
    rgba = np.ascontiguousarray(colors, dtype=np.uint8).tobytes()
    return base64.b64encode(head + xyz + rgba).decode("ascii")


def decode_point_buffer(encoded: str) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of encode_point_buffer: (positions (n,3) f32, rgba (n,4) u8)."""
    raw = base64.b64decode(encoded)
    n = int(np.frombuffer(raw[:4], dtype="<u4")[0])
    xyz_end = 4 + n * 12
    positions = np.frombuffer(raw[4:xyz_end], dtype="<f4").reshape(n, 3)
    colors = np.frombuffer(raw[xyz_end : xyz_end + n * 4], dtype=np.uint8).reshape(n, 4)
    return positions, colors


def cloud_event_payload(cloud: PointCloud, rule: str | None = None, max_points: int = 50_000) -> dict:
    """Stream payload for a cloud, stride-decimated to `max_points`."""
    n = len(cloud)
    stride = max(1, -(-n // max_points))
    idx = np.arange(0, n, stride)
    positions = cloud.positions[idx]
    if rule == "by-confidence" and "confidence" in cloud.schema:
        conf = cloud.data["confidence"][idx, 0]
        palette = np.array([CONFIDENCE_PALETTE[i] for i in range(3)], dtype=np.uint8)
        colors = palette[np.clip(conf, 0, 2)]
    elif "color" in cloud.schema:
        colors = cloud.data["color"][idx]
    else:
        colors = np.full((len(idx), 4), 200, dtype=np.uint8)
    return {"count": int(len(idx)), "points": encode_point_buffer(positions, colors)}


@dataclass
class Subscriber:
    token: str
    mode: str
    geohash: str | None
    rule: str
    events: queue.Queue = field(default_factory=lambda: queue.Queue(maxsize=256))
    seq: int = 0
    dead: bool = False


class StreamHub:
    """Fan-out of stream events with per-subscriber gap-free sequencing.

    A subscriber whose queue stays full is disconnected rather than
    allowed to stall ingestion.
    """

    def __init__(self):
        self._subscribers: dict[str, Subscriber] = {}
        self._lock = threading.Lock()

    def subscribe(self, mode: str, geohash: str | None, rule: str = "by-confidence") -> Subscriber:
        sub = Subscriber(token=uuid.uuid4().hex[:12], mode=mode, geohash=geohash, rule=rule)
        with self._lock:
            self._subscribers[sub.token] = sub
        return sub

    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subscribers)

    def unsubscribe(self, token: str):
        with self._lock:
            self._subscribers.pop(token, None)

    def _offer(self, sub: Subscriber, kind: str, geohash: str, payload: dict):
        event = {"seq": sub.seq, "kind": kind, "geohash": geohash, **payload}
        try:
            sub.events.put_nowait(event)
            sub.seq += 1
        except queue.Full:
            sub.dead = True

    def deliver_direct(self, sub: Subscriber, kind: str, geohash: str, payload: dict):
        self._offer(sub, kind, geohash, payload)

    def publish_cloud(self, kind: str, geohash: str, cloud: PointCloud):
        """Send a cloud event to matching subscribers; situational
        subscribers receive it recolored by their rule."""
        with self._lock:
            subs = list(self._subscribers.values())
        for sub in subs:
            if sub.dead or (sub.geohash and sub.geohash != geohash):
                continue
            if kind == EVENT_FRAME and sub.mode != EVENT_FRAME:
                continue
            if kind == EVENT_INCREMENTAL and sub.mode == EVENT_FRAME:
                continue
            if sub.mode == EVENT_SITUATIONAL:
                payload = cloud_event_payload(cloud, rule=sub.rule)
                self._offer(sub, EVENT_SITUATIONAL, geohash, payload)
            else:
                payload = cloud_event_payload(cloud)
                self._offer(sub, kind, geohash, payload)

    def publish_game(self, geohash: str, deltas: list[dict], scores: dict):
        with self._lock:
            subs = list(self._subscribers.values())
        for sub in subs:
            if sub.dead or (sub.geohash and sub.geohash != geohash):
                continue
            self._offer(sub, EVENT_GAME, geohash, {"deltas": deltas, "scores": scores})
