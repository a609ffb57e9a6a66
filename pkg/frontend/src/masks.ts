/**
 * Region-based masking. Each image gets a raster of integer region ids
 * (e.g. from a superpixel pass or a plain grid); the user toggles whole
 * regions in and out of the mask. Masked pixels are the ones the engine
 * must ignore, exported as 0 in a grayscale raster (255 = usable).
 */

export interface RegionRaster {
  width: number;
  height: number;
  /** region id per pixel, row-major, length width*height */
  ids: Int32Array;
}

export function gridRegions(width: number, height: number, cell: number): RegionRaster {
  if (cell <= 0) throw new Error(`cell must be positive, got ${cell}`);
  const across = Math.ceil(width / cell);
  const ids = new Int32Array(width * height);
  for (let y = 0; y < height; y++) {
    const row = Math.floor(y / cell) * across;
    for (let x = 0; x < width; x++) {
      ids[y * width + x] = row + Math.floor(x / cell);
    }
  }
  return { width, height, ids };
}

export function regionAt(raster: RegionRaster, x: number, y: number): number | null {
  const xi = Math.floor(x);
  const yi = Math.floor(y);
  if (xi < 0 || yi < 0 || xi >= raster.width || yi >= raster.height) return null;
  return raster.ids[yi * raster.width + xi];
}

/** Pure toggle: returns a new sorted selection with regionId added/removed. */
export function toggleRegion(selected: readonly number[], regionId: number): number[] {
  const out = selected.filter((r) => r !== regionId);
  if (out.length === selected.length) {
    out.push(regionId);
    out.sort((a, b) => a - b);
  }
  return out;
}

/** Pixel indices belonging to a region, for hover highlighting. */
export function hoverPixels(raster: RegionRaster, regionId: number): number[] {
  const out: number[] = [];
  for (let i = 0; i < raster.ids.length; i++) {
    if (raster.ids[i] === regionId) out.push(i);
  }
  return out;
}

/**
 * Grayscale mask raster matching the engine's masks/ convention:
 * 255 where pixels are usable, 0 inside any selected region.
 */
export function exportMaskRaster(raster: RegionRaster, selected: readonly number[]): Uint8Array {
  const out = new Uint8Array(raster.ids.length).fill(255);
  if (selected.length === 0) return out;
  const masked = new Set(selected);
  for (let i = 0; i < raster.ids.length; i++) {
    if (masked.has(raster.ids[i])) out[i] = 0;
  }
  return out;
}
