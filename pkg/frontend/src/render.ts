// 2D-canvas point renderer. One pass over the retained batches per frame;
// overlay batches draw tinted on top for review inspection.

import type { Camera } from "./camera.js";
import { project } from "./camera.js";
import type { PointBatch } from "./types.js";
import type { RigidTransformDto } from "./types.js";
import { applyTransform } from "./review.js";

export interface Overlay {
  batch: PointBatch;
  transform: RigidTransformDto;
  tint: [number, number, number];
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  batches: PointBatch[],
  overlay: Overlay | null,
  width: number,
  height: number,
): void {
  ctx.fillStyle = "#10151c";
  ctx.fillRect(0, 0, width, height);
  const image = ctx.getImageData(0, 0, width, height);
  const data = image.data;

  const put = (p: [number, number, number], r: number, g: number, b: number) => {
    const proj = project(cam, p, width, height);
    if (!proj) return;
    const x = proj[0] | 0;
    const y = proj[1] | 0;
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const o = (y * width + x) * 4;
    data[o] = r;
    data[o + 1] = g;
    data[o + 2] = b;
    data[o + 3] = 255;
  };

  for (const batch of batches) {
    for (let i = 0; i < batch.count; i++) {
      put(
        [batch.positions[i * 3], batch.positions[i * 3 + 1], batch.positions[i * 3 + 2]],
        batch.colors[i * 4],
        batch.colors[i * 4 + 1],
        batch.colors[i * 4 + 2],
      );
    }
  }
  if (overlay) {
    const [tr, tg, tb] = overlay.tint;
    for (let i = 0; i < overlay.batch.count; i++) {
      const p = applyTransform(overlay.transform, [
        overlay.batch.positions[i * 3],
        overlay.batch.positions[i * 3 + 1],
        overlay.batch.positions[i * 3 + 2],
      ]);
      put(p, tr, tg, tb);
    }
  }
  ctx.putImageData(image, 0, 0);
}
