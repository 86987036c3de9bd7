// Orbit camera: yaw/pitch around a target point, perspective projection
// onto canvas pixels. Enough to inspect tiles and alignment overlays
// without a GPU dependency.

export interface Camera {
  target: [number, number, number];
  distance: number;
  yaw: number; // radians
  pitch: number;
  fovY: number;
}

export function defaultCamera(): Camera {
  return { target: [0, 0, 0], distance: 40, yaw: -Math.PI / 4, pitch: 0.5, fovY: Math.PI / 3 };
}

export function orbit(cam: Camera, dyaw: number, dpitch: number): Camera {
  const pitch = Math.min(Math.max(cam.pitch + dpitch, -1.45), 1.45);
  return { ...cam, yaw: cam.yaw + dyaw, pitch };
}

export function zoom(cam: Camera, factor: number): Camera {
  return { ...cam, distance: Math.min(Math.max(cam.distance * factor, 1), 2000) };
}

export function pan(cam: Camera, dx: number, dy: number): Camera {
  const right = [Math.cos(cam.yaw + Math.PI / 2), Math.sin(cam.yaw + Math.PI / 2), 0];
  const scale = cam.distance * 0.002;
  return {
    ...cam,
    target: [
      cam.target[0] + right[0] * dx * scale,
      cam.target[1] + right[1] * dx * scale,
      cam.target[2] + dy * scale,
    ],
  };
}

export function eyePosition(cam: Camera): [number, number, number] {
  const cp = Math.cos(cam.pitch);
  return [
    cam.target[0] + cam.distance * cp * Math.cos(cam.yaw),
    cam.target[1] + cam.distance * cp * Math.sin(cam.yaw),
    cam.target[2] + cam.distance * Math.sin(cam.pitch),
  ];
}

/** Project a world point to canvas pixels; null when behind the eye. */
export function project(
  cam: Camera,
  p: [number, number, number],
  width: number,
  height: number,
): [number, number, number] | null {
  const eye = eyePosition(cam);
  // view basis: forward toward target, right = forward x up, up
  const f = normalize([cam.target[0] - eye[0], cam.target[1] - eye[1], cam.target[2] - eye[2]]);
  const r = normalize(cross(f, [0, 0, 1]));
  const u = cross(r, f);
  const d: [number, number, number] = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
  const z = dot(d, f);
  if (z <= 0.05) return null;
  const x = dot(d, r);
  const y = dot(d, u);
  const scale = height / (2 * Math.tan(cam.fovY / 2));
  return [width / 2 + (x / z) * scale, height / 2 - (y / z) * scale, z];
}

function dot(a: number[], b: number[]): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

function cross(a: number[], b: number[]): [number, number, number] {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function normalize(v: [number, number, number]): [number, number, number] {
  const n = Math.hypot(v[0], v[1], v[2]) || 1;
  return [v[0] / n, v[1] / n, v[2] / n];
}
