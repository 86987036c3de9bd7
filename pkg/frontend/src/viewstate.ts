// View-state reducer for the three stream modes.
//
// incremental: retain everything received; frame: latest event replaces
// the scene; situational: like incremental but payloads arrive recolored
// by the server-side rule. Switching modes resets retained geometry.

import { decodePointBuffer } from "./buffer.js";
import type { PointBatch, StreamEvent, StreamMode } from "./types.js";

export interface ViewState {
  mode: StreamMode;
  geohash: string | null;
  rule: string;
  batches: PointBatch[];
  totalPoints: number;
  lastSeq: number | null;
  pointBudget: number;
  scores: Record<string, number>;
}

export const DEFAULT_POINT_BUDGET = 2_000_000;

export function initialViewState(
  mode: StreamMode = "incremental",
  geohash: string | null = null,
  rule = "by-confidence",
  pointBudget = DEFAULT_POINT_BUDGET,
): ViewState {
  return {
    mode,
    geohash,
    rule,
    batches: [],
    totalPoints: 0,
    lastSeq: null,
    pointBudget,
    scores: {},
  };
}

export function switchMode(state: ViewState, mode: StreamMode): ViewState {
  return initialViewState(mode, state.geohash, state.rule, state.pointBudget);
}

/** Stride-decimate a batch so the whole scene stays within budget.
 * Display-only: the server data is untouched. */
export function decimate(batch: PointBatch, maxPoints: number): PointBatch {
  if (batch.count <= maxPoints) return batch;
  const stride = Math.ceil(batch.count / maxPoints);
  const kept = Math.floor((batch.count + stride - 1) / stride);
  const positions = new Float32Array(kept * 3);
  const colors = new Uint8Array(kept * 4);
  let o = 0;
  for (let i = 0; i < batch.count; i += stride) {
    positions.set(batch.positions.subarray(i * 3, i * 3 + 3), o * 3);
    colors.set(batch.colors.subarray(i * 4, i * 4 + 4), o * 4);
    o++;
  }
  return { positions: positions.subarray(0, o * 3) as Float32Array, colors: colors.subarray(0, o * 4) as Uint8Array, count: o };
}

export function applyEvent(state: ViewState, event: StreamEvent): ViewState {
  if (event.kind === "game") {
    return { ...state, scores: event.scores ?? state.scores, lastSeq: event.seq };
  }
  if (!event.points) return { ...state, lastSeq: event.seq };
  let batch = decodePointBuffer(event.points);
  if (state.mode === "frame") {
    batch = decimate(batch, state.pointBudget);
    return {
      ...state,
      batches: [batch],
      totalPoints: batch.count,
      lastSeq: event.seq,
    };
  }
  // incremental and situational accumulate
  const room = Math.max(state.pointBudget - state.totalPoints, 0);
  batch = decimate(batch, Math.max(room, 1));
  return {
    ...state,
    batches: [...state.batches, batch],
    totalPoints: state.totalPoints + batch.count,
    lastSeq: event.seq,
  };
}

export function renderedPointCount(state: ViewState): number {
  return state.batches.reduce((acc, b) => acc + b.count, 0);
}

export function distinctColors(state: ViewState): Set<string> {
  const seen = new Set<string>();
  for (const batch of state.batches) {
    for (let i = 0; i < batch.count; i++) {
      seen.add(batch.colors.subarray(i * 4, i * 4 + 4).join(","));
    }
  }
  return seen;
}
