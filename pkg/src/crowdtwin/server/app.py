"""REST API for ingestion, game state, tiles, review, and streaming.

All state-bearing routes go through the RegionStore; sessions, jobs, and
stream subscriptions are process-local. Base path: /api/v1.
"""

from __future__ import annotations

import json
import logging
import queue
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request, Response
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .. import geohash as gh
from ..cloudops import FilterConfig, filter_reliability
from ..plyio import PlyError, parse_ply, write_ply
from ..points import PointCloud
from ..registration import (
    PipelineConfig,
    STATUS_SUCCESS,
    integrate,
    merge_chunk_into_tile,
    preprocess,
)
from ..rigid import RigidTransform
from ..shards import (
    REVIEW_APPROVED,
    REVIEW_PENDING,
    REVIEW_REJECTED,
    RegionStore,
    ReviewConflictError,
    chunk_centroid_latlon,
)
from .state import (
    EVENT_FRAME,
    EVENT_INCREMENTAL,
    EVENT_SITUATIONAL,
    JobQueue,
    MODE_ACTIVE,
    MODE_PASSIVE,
    SITUATIONAL_RULES,
    SessionRegistry,
    StreamHub,
    cloud_event_payload,
)

log = logging.getLogger(__name__)


class SessionRequest(BaseModel):
    mode: str
    team: str | None = None
    lat: float
    lon: float


class ColorRequest(BaseModel):
    session_id: str
    node_ids: list[str]


class ReviewRequest(BaseModel):
    verdict: str
    adjustment: dict | None = None


def create_app(
    data_dir: str | Path,
    precision: int = 8,
    pipeline: PipelineConfig | None = None,
    node_spacing: float = 0.5,
    teams=("red", "blue"),
    job_workers: int = 2,
) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        jobs.shutdown()

    app = FastAPI(title="crowdtwin", version="0.1.0", lifespan=lifespan)
    store = RegionStore(Path(data_dir), precision=precision)
    sessions = SessionRegistry(teams=teams)
    jobs = JobQueue(workers=job_workers)
    hub = StreamHub()
    cfg = pipeline or PipelineConfig()
    filter_cfg = FilterConfig()

    app.state.store = store
    app.state.sessions = sessions
    app.state.jobs = jobs
    app.state.hub = hub
    app.state.pipeline = cfg

    api = "/api/v1"

    def require_session(session_id: str):
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=401, detail="unknown session")
        return session

    # -- sessions ----------------------------------------------------------

    @app.post(api + "/sessions")
    def join_session(req: SessionRequest):
        if req.mode not in (MODE_ACTIVE, MODE_PASSIVE):
            raise HTTPException(status_code=422, detail=f"unknown mode {req.mode!r}")
        if not (-90 <= req.lat <= 90) or not (-180 <= req.lon <= 180):
            raise HTTPException(status_code=422, detail="location out of range")
        if req.team is not None and req.team not in sessions.teams:
            raise HTTPException(status_code=422, detail=f"unknown team {req.team!r}")
        code = gh.encode(req.lat, req.lon, precision)
        session = sessions.create(req.mode, gh.GeoAnchor(req.lat, req.lon), code, req.team)
        body = {
            "session_id": session.session_id,
            "mode": session.mode,
            "geohash": code,
        }
        if session.mode == MODE_ACTIVE:
            shard = store.shard_for_code(code)
            with shard.lock:
                game = shard.get_or_create_game(node_spacing)
                body["team"] = session.team
                body["game"] = game.to_dict()
        return body

    # -- game --------------------------------------------------------------

    @app.get(api + "/game/{code}")
    def get_game(code: str):
        _validate_code(code)
        shard = store.shard_for_code(code)
        with shard.lock:
            return shard.get_or_create_game(node_spacing).to_dict()

    @app.post(api + "/game/{code}/color")
    def color_nodes(code: str, req: ColorRequest):
        _validate_code(code)
        session = require_session(req.session_id)
        if session.mode != MODE_ACTIVE or session.team is None:
            raise HTTPException(status_code=403, detail="passive sessions cannot color")
        shard = store.shard_for_code(code)
        with shard.lock:
            game = shard.get_or_create_game(node_spacing)
            try:
                coords = [game.parse_node_id(nid) for nid in req.node_ids]
            except KeyError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from None
            game.step += 1
            deltas = []
            for ix, iy in coords:
                node = game.discover(ix, iy)
                event = game.paint(node, session.team)
                if event is not None:
                    deltas.append(
                        {"node_id": event.node_id, "old_team": event.old_team,
                         "new_team": event.new_team}
                    )
            shard.persist_game()
            shard._bump()
            scores = dict(game.scores)
        hub.publish_game(code, deltas, scores)
        return {"scores": scores, "changed": len(deltas)}

    # -- clouds ------------------------------------------------------------

    @app.post(api + "/clouds")
    async def upload_chunk(request: Request, session_id: str = Query(...), geohash: str = Query(...)):
        session = require_session(session_id)
        _validate_code(geohash)
        raw = await request.body()
        try:
            cloud = parse_ply(raw)
        except PlyError as exc:
            raise HTTPException(status_code=400, detail=f"PLY rejected: {exc}") from None

        lat, lon = chunk_centroid_latlon(cloud, session.anchor)
        actual = gh.encode(lat, lon, precision)
        warning = None
        if actual != geohash:
            warning = f"chunk centroid lies in {actual}, relocated from {geohash}"
        shard = store.shard_for_code(actual)
        chunk_id = shard.add_chunk(raw)

        filtered = filter_reliability(cloud, filter_cfg)
        hub.publish_cloud(EVENT_FRAME, actual, filtered if len(filtered) else cloud)

        body = {"chunk_id": chunk_id, "geohash": actual, "raw_points": len(cloud),
                "filtered_points": len(filtered)}
        if warning:
            body["warning"] = warning
        if len(filtered) == 0:
            body["job_id"] = None
            body["integration"] = "skipped: no reliable points after filtering"
            return body

        def run(job):
            with shard.lock:
                result, _ = integrate(filtered, shard, cfg)
            job.result = result.to_dict()
            if result.status == STATUS_SUCCESS:
                if result.merged_chunk is not None:
                    hub.publish_cloud(EVENT_INCREMENTAL, actual, result.merged_chunk)
            else:
                item = shard.add_review(job.chunk_id, result.to_dict())
                job.review_item_id = item.item_id

        job = jobs.submit(chunk_id, actual, run)
        body["job_id"] = job.job_id
        return body

    @app.get(api + "/jobs/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return {
            "job_id": job.job_id,
            "chunk_id": job.chunk_id,
            "geohash": job.geohash,
            "status": job.status,
            "result": job.result,
            "error": job.error,
            "review_item_id": job.review_item_id,
        }

    # -- tiles -------------------------------------------------------------

    @app.get(api + "/udt/{code}")
    def get_udt_tile(code: str, format: str = "binary"):
        _validate_code(code)
        if format not in ("binary", "text"):
            raise HTTPException(status_code=422, detail=f"unknown format {format!r}")
        shard = store.shard_for_code(code)
        with shard.lock:
            payload = write_ply(shard.udt_tile, format)
        media = "application/octet-stream" if format == "binary" else "text/plain"
        return Response(content=payload, media_type=media)

    # -- review ------------------------------------------------------------

    @app.get(api + "/registrations")
    def list_registrations(status: str = "pending"):
        if status != REVIEW_PENDING:
            raise HTTPException(status_code=422, detail="only status=pending is queryable")
        return [item.to_dict() for item in store.pending_reviews()]

    @app.post(api + "/registrations/{item_id}/review")
    def review_registration(item_id: str, req: ReviewRequest):
        if req.verdict not in ("approve", "reject"):
            raise HTTPException(status_code=422, detail=f"unknown verdict {req.verdict!r}")
        found = store.find_review(item_id)
        if found is None:
            raise HTTPException(status_code=404, detail="unknown review item")
        shard, item = found
        with shard.lock:
            if item.status != REVIEW_PENDING:
                raise HTTPException(status_code=409, detail=f"review already {item.status}")
            if req.verdict == "reject":
                item = shard.resolve_review(item_id, REVIEW_REJECTED)
                return item.to_dict()

            proposed = RigidTransform.from_dict(item.proposed["transform"])
            transform = proposed
            if req.adjustment is not None:
                try:
                    adjustment = RigidTransform.from_dict(req.adjustment)
                except Exception as exc:
                    raise HTTPException(status_code=422, detail=f"bad adjustment: {exc}") from None
                transform = adjustment.compose(proposed)
            raw = shard.read_chunk(item.chunk_id)
            filtered = filter_reliability(raw, filter_cfg)
            source = filtered if len(filtered) else raw
            chunk_down, _ = preprocess(source, cfg.voxel_size, cfg.sor)
            merge_chunk_into_tile(shard, chunk_down, transform, cfg.voxel_size)
            try:
                item = shard.resolve_review(item_id, REVIEW_APPROVED, adjustment=req.adjustment)
            except ReviewConflictError as exc:  # pragma: no cover - guarded above
                raise HTTPException(status_code=409, detail=str(exc)) from None
            moved = shard.udt_tile
        hub.publish_cloud(EVENT_INCREMENTAL, item.geohash, moved)
        return item.to_dict()

    # -- stream ------------------------------------------------------------

    @app.get(api + "/stream")
    def stream(mode: str = EVENT_INCREMENTAL, geohash: str | None = None,
               rule: str = "by-confidence", max_events: int | None = None,
               idle_timeout: float | None = None):
        """Server-sent events. Endless by default; `max_events` and
        `idle_timeout` bound the stream for long-poll style clients."""
        if mode not in (EVENT_INCREMENTAL, EVENT_FRAME, EVENT_SITUATIONAL):
            raise HTTPException(status_code=422, detail=f"unknown stream mode {mode!r}")
        if mode == EVENT_SITUATIONAL and rule not in SITUATIONAL_RULES:
            raise HTTPException(status_code=422, detail=f"unknown coloring rule {rule!r}")
        if geohash is not None:
            _validate_code(geohash)
        sub = hub.subscribe(mode, geohash, rule)

        # retained tile snapshot precedes deltas for stateful modes
        if mode in (EVENT_INCREMENTAL, EVENT_SITUATIONAL):
            codes = [geohash] if geohash else store.codes()
            for code in codes:
                shard = store.shard_for_code(code)
                with shard.lock:
                    tile = shard.udt_tile
                    if len(tile):
                        payload = cloud_event_payload(tile, rule=rule if mode == EVENT_SITUATIONAL else None)
                        hub.deliver_direct(sub, mode, code, payload)

        def gen():
            sent = 0
            last_event = time.monotonic()
            try:
                while not sub.dead:
                    if max_events is not None and sent >= max_events:
                        break
                    try:
                        event = sub.events.get(timeout=0.5)
                    except queue.Empty:
                        if idle_timeout is not None and time.monotonic() - last_event > idle_timeout:
                            break
                        yield ": keep-alive\n\n"
                        continue
                    last_event = time.monotonic()
                    sent += 1
                    yield f"event: {event['kind']}\ndata: {json.dumps(event)}\n\n"
            finally:
                hub.unsubscribe(sub.token)

        return StreamingResponse(gen(), media_type="text/event-stream")

    @app.get(api + "/health")
    def health():
        return {"status": "ok", "shards": store.codes(), "teams": sessions.team_sizes()}

    def _validate_code(code: str):
        if not code or any(c not in gh.BASE32 for c in code) or len(code) > 12:
            raise HTTPException(status_code=422, detail=f"invalid geohash {code!r}")

    return app
