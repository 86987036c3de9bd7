// End-to-end against a live ingestion server: seed a tile, force a failed
// registration into the review queue, approve one item (tile must grow via
// /udt) and reject another (it must leave the pending list).

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, plyVertexCount } from "../src/api.js";
import { decodePointBuffer } from "../src/buffer.js";
import { SseParser } from "../src/sse.js";
import type { ReviewItem } from "../src/types.js";
import { Lcg, buildPly, garbageChunk, structuredChunk } from "./helpers.js";

const PORT = 8931;
const BASE = `http://127.0.0.1:${PORT}`;
const api = new ApiClient(`${BASE}/api/v1`);

let server: ChildProcess | null = null;
let sessionId = "";
let cell = "";

async function waitForHealth(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const resp = await fetch(`${BASE}/api/v1/health`);
      if (resp.ok) return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) throw new Error("server did not become healthy");
    await new Promise((r) => setTimeout(r, 250));
  }
}

async function uploadPly(ply: string, geohash: string): Promise<Record<string, unknown>> {
  const resp = await fetch(
    `${BASE}/api/v1/clouds?session_id=${sessionId}&geohash=${geohash}`,
    { method: "POST", headers: { "content-type": "application/octet-stream" }, body: ply },
  );
  expect(resp.ok).toBe(true);
  return (await resp.json()) as Record<string, unknown>;
}

async function awaitJob(jobId: string): Promise<Record<string, unknown>> {
  const deadline = Date.now() + 90_000;
  for (;;) {
    const body = (await (await fetch(`${BASE}/api/v1/jobs/${jobId}`)).json()) as Record<string, unknown>;
    if (body.status === "done" || body.status === "failed") return body;
    if (Date.now() > deadline) throw new Error(`job ${jobId} stuck`);
    await new Promise((r) => setTimeout(r, 150));
  }
}

async function seedPendingReview(rngSeed: number): Promise<string> {
  const ack = await uploadPly(buildPly(garbageChunk(new Lcg(rngSeed))), cell);
  const job = await awaitJob(ack.job_id as string);
  const reviewId = job.review_item_id as string | null;
  expect(reviewId).toBeTruthy();
  return reviewId as string;
}

beforeAll(async () => {
  const dataDir = mkdtempSync(join(tmpdir(), "crowdtwin-live-"));
  server = spawn(
    "python3",
    ["-m", "crowdtwin.cli", "serve", "--data-dir", dataDir, "--bind", `127.0.0.1:${PORT}`],
    { stdio: "ignore" },
  );
  await waitForHealth();

  const joinResp = await fetch(`${BASE}/api/v1/sessions`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ mode: "passive", lat: 35.9, lon: 139.41 }),
  });
  const joined = (await joinResp.json()) as { session_id: string; geohash: string };
  sessionId = joined.session_id;
  cell = joined.geohash;

  // structured chunk seeds the cell's tile
  const ack = await uploadPly(buildPly(structuredChunk(new Lcg(7))), cell);
  cell = ack.geohash as string;
  const job = await awaitJob(ack.job_id as string);
  expect(job.status).toBe("done");
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("live review workflow", () => {
  it("approve grows the tile (verified via /udt)", async () => {
    const reviewId = await seedPendingReview(21);
    const before = plyVertexCount(await api.fetchTile(cell));
    expect(before).toBeGreaterThan(0);

    const resolved = await api.submitReview(reviewId, "approve");
    expect(resolved.status).toBe("approved");

    const after = plyVertexCount(await api.fetchTile(cell));
    expect(after).toBeGreaterThan(before);
  });

  it("reject removes the item from the pending list", async () => {
    const reviewId = await seedPendingReview(22);
    const pendingBefore = await api.pendingReviews();
    expect(pendingBefore.some((i: ReviewItem) => i.item_id === reviewId)).toBe(true);

    const resolved = await api.submitReview(reviewId, "reject");
    expect(resolved.status).toBe("rejected");

    const pendingAfter = await api.pendingReviews();
    expect(pendingAfter.some((i: ReviewItem) => i.item_id === reviewId)).toBe(false);
  });

  it("second verdict on the same item conflicts", async () => {
    const reviewId = await seedPendingReview(23);
    await api.submitReview(reviewId, "reject");
    await expect(api.submitReview(reviewId, "approve")).rejects.toThrow(/409/);
  });

  it("bounded SSE stream delivers a decodable tile snapshot", async () => {
    const url = `${BASE}/api/v1/udt/${cell}`; // ensure tile exists first
    expect(plyVertexCount(await (await fetch(url)).arrayBuffer())).toBeGreaterThan(0);

    const resp = await fetch(
      `${BASE}/api/v1/stream?mode=incremental&geohash=${cell}&max_events=1&idle_timeout=10`,
    );
    const text = await resp.text();
    const parser = new SseParser();
    const messages = parser.feed(text);
    expect(messages.length).toBe(1);
    const event = JSON.parse(messages[0].data) as { seq: number; count: number; points: string };
    expect(event.seq).toBe(0);
    const batch = decodePointBuffer(event.points);
    expect(batch.count).toBe(event.count);
    expect(batch.positions.length).toBe(batch.count * 3);
  });
});
