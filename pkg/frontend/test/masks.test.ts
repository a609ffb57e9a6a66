import { describe, expect, it } from "vitest";

import {
  exportMaskRaster,
  gridRegions,
  hoverPixels,
  regionAt,
  toggleRegion,
} from "../src/masks.js";
import { mulberry32, randInt } from "./_rand.js";

describe("gridRegions", () => {
  it("tiles the image with row-major cell ids", () => {
    const raster = gridRegions(10, 6, 5); // 2x2 grid of 5px cells
    expect(regionAt(raster, 0, 0)).toBe(0);
    expect(regionAt(raster, 9, 0)).toBe(1);
    expect(regionAt(raster, 0, 5)).toBe(2);
    expect(regionAt(raster, 9.9, 5.9)).toBe(3);
  });

  it("returns null outside the raster", () => {
    const raster = gridRegions(10, 6, 5);
    expect(regionAt(raster, -0.1, 0)).toBeNull();
    expect(regionAt(raster, 10, 0)).toBeNull();
    expect(regionAt(raster, 0, 6)).toBeNull();
  });

  it("rejects a non-positive cell size", () => {
    expect(() => gridRegions(10, 6, 0)).toThrow();
  });
});

describe("toggleRegion", () => {
  it("adds, removes, and keeps the selection sorted", () => {
    let sel: number[] = [];
    sel = toggleRegion(sel, 9);
    sel = toggleRegion(sel, 2);
    expect(sel).toEqual([2, 9]);
    sel = toggleRegion(sel, 9);
    expect(sel).toEqual([2]);
  });

  it("is an involution for any sequence", () => {
    const rng = mulberry32(5);
    let sel: number[] = [3, 8];
    const original = [...sel];
    const picks: number[] = [];
    for (let k = 0; k < 500; k++) {
      const r = randInt(rng, 0, 20);
      picks.push(r);
      sel = toggleRegion(sel, r);
    }
    for (const r of picks.reverse()) {
      sel = toggleRegion(sel, r);
    }
    expect(sel).toEqual(original);
  });

  it("does not mutate its input", () => {
    const sel = [1, 2];
    toggleRegion(sel, 3);
    toggleRegion(sel, 1);
    expect(sel).toEqual([1, 2]);
  });
});

describe("exportMaskRaster", () => {
  it("masks exactly the selected regions", () => {
    const raster = gridRegions(10, 10, 5); // four 5x5 cells
    const bytes = exportMaskRaster(raster, [0, 3]);
    let zeros = 0;
    for (const b of bytes) {
      expect(b === 0 || b === 255).toBe(true);
      if (b === 0) zeros += 1;
    }
    expect(zeros).toBe(50); // two of four cells
    expect(bytes[0]).toBe(0); // top-left in region 0
    expect(bytes[9]).toBe(255); // top-right in region 1
    expect(bytes[99]).toBe(0); // bottom-right in region 3
  });

  it("is all-usable with nothing selected", () => {
    const raster = gridRegions(8, 8, 4);
    expect(exportMaskRaster(raster, []).every((b) => b === 255)).toBe(true);
  });

  it("agrees with hoverPixels per region", () => {
    const raster = gridRegions(12, 9, 4);
    for (const region of [0, 2, 5]) {
      const bytes = exportMaskRaster(raster, [region]);
      const pixels = new Set(hoverPixels(raster, region));
      for (let i = 0; i < bytes.length; i++) {
        expect(bytes[i]).toBe(pixels.has(i) ? 0 : 255);
      }
    }
  });
});
