/**
 * Depth overlay rendering helpers. The labeler shows each image's depth map
 * as a colorized layer blended over the RGB view so the user can see where
 * the provided depth disagrees with their intuition before labeling.
 */

/** Simple blue->red ramp; t in [0, 1]. Returns [r, g, b] bytes. */
export function rampColor(t: number): [number, number, number] {
  const x = Math.min(1, Math.max(0, t));
  return [
    Math.round(255 * x),
    Math.round(255 * (1 - Math.abs(2 * x - 1))),
    Math.round(255 * (1 - x)),
  ];
}

/**
 * Map a depth raster to RGBA bytes. Non-finite or non-positive depths are
 * rendered transparent; the rest normalized over the valid range.
 */
export function colorizeDepth(depth: Float32Array | Float64Array, width: number, height: number): Uint8ClampedArray {
  if (depth.length !== width * height) {
    throw new Error(`depth length ${depth.length} != ${width}x${height}`);
  }
  let lo = Infinity;
  let hi = -Infinity;
  for (const d of depth) {
    if (Number.isFinite(d) && d > 0) {
      if (d < lo) lo = d;
      if (d > hi) hi = d;
    }
  }
  const span = hi > lo ? hi - lo : 1;
  const out = new Uint8ClampedArray(width * height * 4);
  for (let i = 0; i < depth.length; i++) {
    const d = depth[i];
    if (!Number.isFinite(d) || d <= 0) continue; // alpha stays 0
    const [r, g, b] = rampColor((d - lo) / span);
    out[i * 4] = r;
    out[i * 4 + 1] = g;
    out[i * 4 + 2] = b;
    out[i * 4 + 3] = 255;
  }
  return out;
}

/**
 * Alpha-blend an overlay into a base RGBA buffer (both width*height*4).
 * opacity 0 leaves base untouched bytewise; opacity 1 copies overlay
 * wherever the overlay pixel is opaque.
 */
export function blend(base: Uint8ClampedArray, overlay: Uint8ClampedArray, opacity: number): Uint8ClampedArray {
  if (base.length !== overlay.length) {
    throw new Error(`buffer sizes differ: ${base.length} vs ${overlay.length}`);
  }
  if (!(opacity >= 0 && opacity <= 1)) {
    throw new Error(`opacity must be in [0, 1], got ${opacity}`);
  }
  const out = new Uint8ClampedArray(base);
  if (opacity === 0) return out;
  for (let i = 0; i < base.length; i += 4) {
    const a = (overlay[i + 3] / 255) * opacity;
    if (a === 0) continue;
    for (let c = 0; c < 3; c++) {
      out[i + c] = Math.round(overlay[i + c] * a + base[i + c] * (1 - a));
    }
    out[i + 3] = Math.max(base[i + 3], Math.round(255 * a));
  }
  return out;
}

/**
 * Mark pixels where depth jumps sharply relative to its neighbors —
 * likely occlusion boundaries, the risky places to click. Returns a
 * 0/1 byte per pixel.
 */
export function depthEdges(depth: Float32Array | Float64Array, width: number, height: number, relThreshold = 0.05): Uint8Array {
  if (depth.length !== width * height) {
    throw new Error(`depth length ${depth.length} != ${width}x${height}`);
  }
  const out = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = y * width + x;
      const d = depth[i];
      if (!Number.isFinite(d) || d <= 0) continue;
      const right = x + 1 < width ? depth[i + 1] : d;
      const down = y + 1 < height ? depth[i + width] : d;
      const jump = Math.max(Math.abs(right - d), Math.abs(down - d));
      if (jump > relThreshold * Math.abs(d)) out[i] = 1;
    }
  }
  return out;
}
