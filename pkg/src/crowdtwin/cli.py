"""Command-line entry points.

    crowdtwin serve    --data-dir DIR --precision 8 --port 8000
    crowdtwin simulate  passive|active ... --server URL
    crowdtwin register  src.ply dst.ply --voxel 0.6 --ransac-n 3
    crowdtwin convert   in.ply out.ply --to binary --filter-depth 5
    crowdtwin bench     mask-experiment --ratios 0.2,0.4 --trials 20 --out results.csv

Environment: DATA_DIR, BIND_ADDR, GEOHASH_PRECISION provide serve defaults.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v)


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v)


def cmd_serve(args):
    import uvicorn

    from .server import create_app

    app = create_app(args.data_dir, precision=args.precision)
    host, _, port = args.bind.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=args.port or int(port or 8000))


def cmd_register(args):
    from .plyio import read_ply_file, write_ply_file
    from .registration import PipelineConfig, RansacConfig, register_clouds, transform_cloud

    src = read_ply_file(args.src)
    dst = read_ply_file(args.dst)
    cfg = PipelineConfig(
        voxel_size=args.voxel,
        ransac=RansacConfig(sample_size=args.ransac_n, rng_seed=args.seed),
    )
    result = register_clouds(src, dst, cfg, apply_sor=not args.no_sor)
    print(json.dumps(result.to_dict(), indent=2))
    if args.out and result.status == "success":
        moved = transform_cloud(src, result.transform)
        write_ply_file(args.out, moved, "binary")
        print(f"transformed source written to {args.out}", file=sys.stderr)
    return 0 if result.status == "success" else 1


def cmd_convert(args):
    from .cloudops import FilterConfig, filter_reliability
    from .plyio import read_ply_file, write_ply_file

    cloud = read_ply_file(args.input)
    before = len(cloud)
    if args.filter_depth is not None or args.filter_confidence is not None:
        cfg = FilterConfig(
            max_depth=args.filter_depth if args.filter_depth is not None else 5.0,
            min_confidence=args.filter_confidence if args.filter_confidence is not None else 1,
        )
        cloud = filter_reliability(cloud, cfg)
    write_ply_file(args.output, cloud, args.to)
    print(f"{before} -> {len(cloud)} points, {args.to} format -> {args.output}")


def cmd_bench(args):
    from .bench import ExperimentConfig, emit_report, run_masking_experiment
    from .plyio import read_ply_file
    from .sim import generate_scene

    cfg = ExperimentConfig(
        removal_ratios=_parse_floats(args.ratios),
        sample_sizes=_parse_ints(args.n),
        voxel_sizes=_parse_floats(args.voxel),
        trials=args.trials,
        seed=args.seed,
    )
    if args.source:
        source = read_ply_file(args.source)
    else:
        source = generate_scene(args.scene_seed, cfg.region_extent)

    done = [0]

    def progress(record):
        done[0] += 1
        print(
            f"[{done[0]}] ratio={record.ratio} N={record.sample_size} V={record.voxel} "
            f"trial={record.trial} -> {'ok' if record.success else record.status} "
            f"({record.total_time:.2f}s)",
            file=sys.stderr,
        )

    t0 = time.perf_counter()
    records = run_masking_experiment(source, cfg, progress=progress)
    csv_text, summary = emit_report(records)
    with open(args.out, "w") as fh:
        fh.write(csv_text)
    print(summary)
    print(f"\n{len(records)} trials in {time.perf_counter() - t0:.0f}s -> {args.out}")


def cmd_simulate(args):
    import httpx

    from . import geohash as gh
    from .game import Agent
    from .plyio import write_ply
    from .sim import SensorModel, Trajectory, generate_scene, passive_scan
    from .sim.agents import SweepPolicy, active_game_step

    scene = generate_scene(args.scene_seed, tuple(args.extent))
    client = httpx.Client(base_url=args.server.rstrip("/") + "/api/v1", timeout=120.0)

    join = client.post(
        "/sessions",
        json={"mode": args.mode, "lat": args.lat, "lon": args.lon, "team": args.team},
    )
    join.raise_for_status()
    session = join.json()
    print(f"session {session['session_id'][:8]} in cell {session['geohash']}")

    anchor = gh.GeoAnchor(args.lat, args.lon)
    if args.mode == "passive":
        waypoints = np.array([[float(x) for x in pair.split(",")] for pair in args.trajectory.split()])
        trajectory = Trajectory(waypoints, speed=args.speed, anchor=anchor)
        chunks = passive_scan(scene, trajectory, SensorModel(), seed=args.scene_seed,
                              session_id=session["session_id"])
        job_ids = []
        for chunk in chunks:
            ack = client.post(
                "/clouds",
                params={"session_id": session["session_id"], "geohash": chunk.meta["geohash"]},
                content=write_ply(chunk, "binary"),
                headers={"content-type": "application/octet-stream"},
            )
            ack.raise_for_status()
            body = ack.json()
            print(f"chunk {body['chunk_id']} -> cell {body['geohash']} job {body.get('job_id')}")
            if body.get("job_id"):
                job_ids.append(body["job_id"])
        for job_id in job_ids:
            while True:
                state = client.get(f"/jobs/{job_id}").json()
                if state["status"] in ("done", "failed"):
                    print(f"job {job_id}: {state['status']}")
                    break
                time.sleep(0.3)
    else:
        code = session["geohash"]
        game = session["game"]
        height, width = gh.cell_dimensions(code)
        policy = SweepPolicy(team=session["team"], cell_width=width, cell_height=height)
        from .game import GameState

        state = GameState.from_dict(game)
        for i, (x, y) in enumerate(policy.positions()):
            if i >= args.steps:
                break
            state, scans, events = active_game_step(state, [policy.agent_at(x, y)], scene=None)
            if events:
                resp = client.post(
                    f"/game/{code}/color",
                    json={"session_id": session["session_id"],
                          "node_ids": [e.node_id for e in events]},
                )
                resp.raise_for_status()
                print(f"step {i}: colored {len(events)} -> scores {resp.json()['scores']}")
    client.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdtwin")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the ingestion server")
    p.add_argument("--data-dir", default=os.environ.get("DATA_DIR", "./data"))
    p.add_argument("--precision", type=int,
                   default=int(os.environ.get("GEOHASH_PRECISION", "8")))
    p.add_argument("--bind", default=os.environ.get("BIND_ADDR", "127.0.0.1:8000"))
    p.add_argument("--port", type=int, default=None)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("simulate", help="drive a simulated participant against a server")
    p.add_argument("mode", choices=["passive", "active"])
    p.add_argument("--server", default="http://127.0.0.1:8000")
    p.add_argument("--scene-seed", type=int, default=42)
    p.add_argument("--extent", type=float, nargs=2, default=[60.0, 60.0])
    p.add_argument("--trajectory", default="5,5 55,5 55,55",
                   help="space-separated x,y waypoints in scene meters")
    p.add_argument("--speed", type=float, default=1.2)
    p.add_argument("--lat", type=float, default=35.90)
    p.add_argument("--lon", type=float, default=139.41)
    p.add_argument("--team", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("register", help="register one PLY against another")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--voxel", type=float, default=0.6)
    p.add_argument("--ransac-n", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-sor", action="store_true")
    p.add_argument("--out", default=None, help="write the transformed source here")
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("convert", help="filter and re-encode a PLY file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--to", choices=["text", "binary"], default="binary")
    p.add_argument("--filter-depth", type=float, default=None)
    p.add_argument("--filter-confidence", type=int, default=None)
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("bench", help="benchmark harness")
    sub2 = p.add_subparsers(dest="experiment", required=True)
    p2 = sub2.add_parser("mask-experiment", help="mask-and-reregister grid")
    p2.add_argument("--ratios", default="0.2,0.4,0.6,0.8")
    p2.add_argument("--n", default="3,4,5")
    p2.add_argument("--voxel", default="0.6,0.8")
    p2.add_argument("--trials", type=int, default=20)
    p2.add_argument("--seed", type=int, default=7)
    p2.add_argument("--scene-seed", type=int, default=42)
    p2.add_argument("--out", default="results.csv")
    p2.add_argument("--source", default=None, help="register against this city PLY instead")
    p2.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args) or 0


if __name__ == "__main__":
    raise SystemExit(main())
