// Shared fixtures: point-buffer encoding (server wire format) and ascii
// PLY synthesis for live uploads.

export function encodePointBuffer(positions: number[][], colors: number[][]): string {
  const n = positions.length;
  const bytes = new Uint8Array(4 + n * 12 + n * 4);
  const view = new DataView(bytes.buffer);
  view.setUint32(0, n, true);
  positions.forEach((p, i) => {
    view.setFloat32(4 + i * 12, p[0], true);
    view.setFloat32(4 + i * 12 + 4, p[1], true);
    view.setFloat32(4 + i * 12 + 8, p[2], true);
  });
  colors.forEach((c, i) => {
    bytes.set(c, 4 + n * 12 + i * 4);
  });
  return Buffer.from(bytes).toString("base64");
}

/** Tiny deterministic LCG so fixtures are reproducible across runs. */
export class Lcg {
  constructor(private state: number) {}
  next(): number {
    this.state = (this.state * 1664525 + 1013904223) >>> 0;
    return this.state / 0x100000000;
  }
  range(lo: number, hi: number): number {
    return lo + (hi - lo) * this.next();
  }
  int(n: number): number {
    return Math.floor(this.next() * n);
  }
}

export interface PlyPoint {
  x: number;
  y: number;
  z: number;
  confidence: number;
  depth: number;
  device: [number, number, number];
}

/** Ascii PLY with the canonical position/confidence/depth/device subset. */
export function buildPly(points: PlyPoint[]): string {
  const header = [
    "ply",
    "format ascii 1.0",
    `element vertex ${points.length}`,
    "property float x",
    "property float y",
    "property float z",
    "property uint confidence",
    "property float depth",
    "property float px",
    "property float py",
    "property float pz",
    "end_header",
  ].join("\n");
  const body = points
    .map(
      (p) =>
        `${p.x.toFixed(4)} ${p.y.toFixed(4)} ${p.z.toFixed(4)} ${p.confidence} ` +
        `${p.depth.toFixed(3)} ${p.device[0]} ${p.device[1]} ${p.device[2]}`,
    )
    .join("\n");
  return header + "\n" + body + "\n";
}

/** Structured chunk: ground grid plus two box shells (registrable). */
export function structuredChunk(rng: Lcg): PlyPoint[] {
  const points: PlyPoint[] = [];
  const device: [number, number, number] = [12, 12, 1.4];
  const push = (x: number, y: number, z: number) =>
    points.push({ x, y, z, confidence: 2, depth: 2.0, device });
  for (let x = 0.2; x < 24; x += 0.35) {
    for (let y = 0.2; y < 24; y += 0.35) {
      push(x + rng.range(-0.05, 0.05), y + rng.range(-0.05, 0.05), 0);
    }
  }
  const boxes = [
    { x0: 4, y0: 5, w: 3.5, d: 2.5, h: 3.0 },
    { x0: 14, y0: 13, w: 2.5, d: 4.0, h: 2.2 },
  ];
  for (const b of boxes) {
    for (let t = 0; t < b.w; t += 0.3) {
      for (let z = 0.15; z < b.h; z += 0.3) {
        push(b.x0 + t, b.y0, z);
        push(b.x0 + t, b.y0 + b.d, z);
      }
    }
    for (let t = 0; t < b.d; t += 0.3) {
      for (let z = 0.15; z < b.h; z += 0.3) {
        push(b.x0, b.y0 + t, z);
        push(b.x0 + b.w, b.y0 + t, z);
      }
    }
  }
  return points;
}

/** Volume noise: fails to register against thin structured surfaces. */
export function garbageChunk(rng: Lcg, count = 4000): PlyPoint[] {
  const device: [number, number, number] = [12, 12, 1.4];
  const points: PlyPoint[] = [];
  for (let i = 0; i < count; i++) {
    points.push({
      x: rng.range(0, 24),
      y: rng.range(0, 24),
      z: rng.range(0, 20),
      confidence: 2,
      depth: 2.0,
      device,
    });
  }
  return points;
}
