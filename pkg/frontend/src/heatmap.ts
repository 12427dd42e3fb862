/** Depth-to-color mapping for the heatmap overlay. */

import type { DepthImage } from "./png16.js";

/* warm near, cold far; stops at v = 0, 1/3, 2/3, 1 */
const STOPS: [number, number, number][] = [
  [255, 64, 32],
  [255, 200, 40],
  [64, 200, 96],
  [40, 90, 255],
];

/** Color one normalized depth in [0, 1]; values outside are clamped. */
export function colorAt(v: number): [number, number, number] {
  const x = Math.max(0, Math.min(1, v)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(x));
  const a = x - i;
  const lo = STOPS[i];
  const hi = STOPS[i + 1];
  return [
    Math.round(lo[0] + a * (hi[0] - lo[0])),
    Math.round(lo[1] + a * (hi[1] - lo[1])),
    Math.round(lo[2] + a * (hi[2] - lo[2])),
  ];
}

/** RGBA pixels for a depth frame, normalized to the field's [near, far]. */
export function depthToRgba(
  depth: DepthImage,
  nearMeters: number,
  farMeters: number,
  alpha = 255,
): Uint8ClampedArray<ArrayBuffer> {
  const nearMm = nearMeters * 1000;
  const farMm = farMeters * 1000;
  const span = Math.max(1e-6, farMm - nearMm);
  const out = new Uint8ClampedArray(depth.width * depth.height * 4);
  for (let i = 0; i < depth.mm.length; i++) {
    const [r, g, b] = colorAt((depth.mm[i] - nearMm) / span);
    out[4 * i] = r;
    out[4 * i + 1] = g;
    out[4 * i + 2] = b;
    out[4 * i + 3] = alpha;
  }
  return out;
}
