// Compact point buffer codec: uint32 LE count, count*3 float32 xyz,
// count*4 uint8 rgba, base64 over the wire.

import type { PointBatch } from "./types.js";

function base64ToBytes(b64: string): Uint8Array {
  if (typeof Buffer !== "undefined") {
    return new Uint8Array(Buffer.from(b64, "base64"));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function decodePointBuffer(b64: string): PointBatch {
  const bytes = base64ToBytes(b64);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const count = view.getUint32(0, true);
  const xyzBytes = count * 12;
  const positions = new Float32Array(count * 3);
  for (let i = 0; i < count * 3; i++) {
    positions[i] = view.getFloat32(4 + i * 4, true);
  }
  const colors = bytes.slice(4 + xyzBytes, 4 + xyzBytes + count * 4);
  return { positions, colors: new Uint8Array(colors), count };
}
