// Registration review panel logic: nudge the proposed alignment with xy
// translation and z-rotation steps, then approve or reject exactly once.

import type { ReviewItem, RigidTransformDto } from "./types.js";

export interface ReviewPanelState {
  item: ReviewItem | null;
  dx: number; // meters
  dy: number;
  dtheta: number; // radians about z
  overlayVisible: boolean;
  submitting: boolean;
  submitted: boolean;
}

export function initialReviewPanel(item: ReviewItem | null = null): ReviewPanelState {
  return { item, dx: 0, dy: 0, dtheta: 0, overlayVisible: true, submitting: false, submitted: false };
}

export function nudge(state: ReviewPanelState, dx = 0, dy = 0, dtheta = 0): ReviewPanelState {
  return { ...state, dx: state.dx + dx, dy: state.dy + dy, dtheta: state.dtheta + dtheta };
}

export function identityTransform(): RigidTransformDto {
  return {
    rotation: [
      [1, 0, 0],
      [0, 1, 0],
      [0, 0, 1],
    ],
    translation: [0, 0, 0],
  };
}

/** World-frame adjustment delta sent to the server (applied after the
 * proposed transform). */
export function adjustmentTransform(state: ReviewPanelState): RigidTransformDto {
  const c = Math.cos(state.dtheta);
  const s = Math.sin(state.dtheta);
  return {
    rotation: [
      [c, -s, 0],
      [s, c, 0],
      [0, 0, 1],
    ],
    translation: [state.dx, state.dy, 0],
  };
}

export function hasAdjustment(state: ReviewPanelState): boolean {
  return state.dx !== 0 || state.dy !== 0 || state.dtheta !== 0;
}

export function composeTransforms(a: RigidTransformDto, b: RigidTransformDto): RigidTransformDto {
  // a ∘ b: apply b first
  const rotation = [0, 1, 2].map((i) =>
    [0, 1, 2].map((j) => a.rotation[i][0] * b.rotation[0][j] + a.rotation[i][1] * b.rotation[1][j] + a.rotation[i][2] * b.rotation[2][j]),
  );
  const translation = [0, 1, 2].map(
    (i) =>
      a.rotation[i][0] * b.translation[0] +
      a.rotation[i][1] * b.translation[1] +
      a.rotation[i][2] * b.translation[2] +
      a.translation[i],
  );
  return { rotation, translation };
}

export function applyTransform(t: RigidTransformDto, p: [number, number, number]): [number, number, number] {
  const r = t.rotation;
  return [
    r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t.translation[0],
    r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t.translation[1],
    r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t.translation[2],
  ];
}

/** Effective transform previewed in the overlay: adjustment ∘ proposed. */
export function effectiveTransform(state: ReviewPanelState): RigidTransformDto {
  const proposed = state.item?.proposed.transform ?? identityTransform();
  return composeTransforms(adjustmentTransform(state), proposed);
}

export function canSubmit(state: ReviewPanelState): boolean {
  return (
    state.item !== null &&
    state.item.status === "pending" &&
    !state.submitting &&
    !state.submitted
  );
}

/** Guard a submission: returns the started state or null when a submit is
 * already underway (double-clicks collapse to one request). */
export function beginSubmit(state: ReviewPanelState): ReviewPanelState | null {
  if (!canSubmit(state)) return null;
  return { ...state, submitting: true };
}

export function finishSubmit(state: ReviewPanelState, ok: boolean): ReviewPanelState {
  return { ...state, submitting: false, submitted: ok };
}
