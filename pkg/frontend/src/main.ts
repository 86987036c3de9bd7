// Page wiring: live stream view plus the registration review panel.

import { ApiClient, plyVertexCount } from "./api.js";
import { decodePointBuffer } from "./buffer.js";
import { Camera, defaultCamera, orbit, pan, zoom } from "./camera.js";
import { Overlay, drawScene } from "./render.js";
import {
  ReviewPanelState,
  adjustmentTransform,
  beginSubmit,
  effectiveTransform,
  finishSubmit,
  hasAdjustment,
  initialReviewPanel,
  nudge,
} from "./review.js";
import { consumeStream } from "./sse.js";
import type { ReviewItem, StreamEvent, StreamMode } from "./types.js";
import { ViewState, applyEvent, initialViewState, renderedPointCount, switchMode } from "./viewstate.js";

const api = new ApiClient();

let view: ViewState = initialViewState();
let cam: Camera = defaultCamera();
let panel: ReviewPanelState = initialReviewPanel();
let overlay: Overlay | null = null;
let streamAbort = new AbortController();

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const reviewsEl = document.getElementById("reviews")!;

function redraw(): void {
  drawScene(ctx, cam, view.batches, overlay, canvas.width, canvas.height);
  statusEl.textContent =
    `${view.mode} | ${renderedPointCount(view)} pts | seq ${view.lastSeq ?? "-"}` +
    (Object.keys(view.scores).length ? ` | scores ${JSON.stringify(view.scores)}` : "");
}

function startStream(): void {
  streamAbort.abort();
  streamAbort = new AbortController();
  const geohash = (document.getElementById("geohash") as HTMLInputElement).value.trim() || undefined;
  view = initialViewState(view.mode, geohash ?? null, view.rule, view.pointBudget);
  void consumeStream(api.streamUrl(view.mode, geohash, view.rule), {
    signal: streamAbort.signal,
    onStateChange: (s) => {
      statusEl.textContent = `stream: ${s}`;
    },
    onMessage: (msg) => {
      const event = JSON.parse(msg.data) as StreamEvent;
      view = applyEvent(view, event);
      redraw();
    },
  });
}

function setMode(mode: StreamMode): void {
  view = switchMode(view, mode);
  startStream();
}

async function refreshReviews(): Promise<void> {
  const items = await api.pendingReviews();
  reviewsEl.innerHTML = "";
  for (const item of items) {
    const row = document.createElement("div");
    row.className = "review-row";
    row.textContent = `${item.item_id} @ ${item.geohash} (${item.proposed.status})`;
    const inspect = document.createElement("button");
    inspect.textContent = "inspect";
    inspect.onclick = () => void openReview(item);
    row.appendChild(inspect);
    reviewsEl.appendChild(row);
  }
}

async function openReview(item: ReviewItem): Promise<void> {
  panel = initialReviewPanel(item);
  const tile = await api.fetchTile(item.geohash);
  statusEl.textContent = `review ${item.item_id}: tile has ${plyVertexCount(tile)} vertices`;
  overlay = null; // chunk preview arrives via the incremental stream snapshot
  redraw();
}

async function submitReview(verdict: "approve" | "reject"): Promise<void> {
  const item = panel.item;
  const started = beginSubmit(panel);
  if (!started || !item) return; // double-click collapses to one call
  panel = started;
  try {
    const adjustment = hasAdjustment(panel) ? adjustmentTransform(panel) : undefined;
    await api.submitReview(item.item_id, verdict, adjustment);
    panel = finishSubmit(panel, true);
    overlay = null;
    await refreshReviews();
  } catch (err) {
    panel = finishSubmit(panel, false);
    statusEl.textContent = `review failed: ${err}`;
    await refreshReviews(); // conflict means someone else resolved it
  }
  redraw();
}

function bindUi(): void {
  (document.getElementById("mode") as HTMLSelectElement).onchange = (e) =>
    setMode((e.target as HTMLSelectElement).value as StreamMode);
  document.getElementById("connect")!.onclick = () => startStream();
  document.getElementById("refresh-reviews")!.onclick = () => void refreshReviews();
  document.getElementById("approve")!.onclick = () => void submitReview("approve");
  document.getElementById("reject")!.onclick = () => void submitReview("reject");
  const nudges: Array<[string, number, number, number]> = [
    ["nx-", -0.1, 0, 0],
    ["nx+", 0.1, 0, 0],
    ["ny-", 0, -0.1, 0],
    ["ny+", 0, 0.1, 0],
    ["nr-", 0, 0, -0.017],
    ["nr+", 0, 0, 0.017],
  ];
  for (const [id, dx, dy, dt] of nudges) {
    document.getElementById(id)!.onclick = () => {
      panel = nudge(panel, dx, dy, dt);
      if (overlay && panel.item) overlay.transform = effectiveTransform(panel);
      redraw();
    };
  }

  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.onmousedown = (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
  };
  window.onmouseup = () => (dragging = false);
  window.onmousemove = (e) => {
    if (!dragging) return;
    if (e.shiftKey) cam = pan(cam, e.clientX - lastX, e.clientY - lastY);
    else cam = orbit(cam, (e.clientX - lastX) * 0.01, (e.clientY - lastY) * 0.01);
    lastX = e.clientX;
    lastY = e.clientY;
    redraw();
  };
  canvas.onwheel = (e) => {
    cam = zoom(cam, e.deltaY > 0 ? 1.1 : 0.9);
    redraw();
    e.preventDefault();
  };
}

bindUi();
startStream();
void refreshReviews();
