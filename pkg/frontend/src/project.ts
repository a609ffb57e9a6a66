/**
 * Label project state and every user-facing mutation.
 *
 * The store keeps one observation slot per (correspondence, image). A slot
 * remembers its pixel even while hidden, so toggling visibility twice is a
 * perfect round-trip. All mutations snapshot the previous state onto an undo
 * stack (capped, oldest dropped) and clear the redo stack, the usual
 * editor contract.
 */

import {
  imageFilename,
  Observation,
  PointEntry,
  PointsFile,
  parsePointsFile,
  serializePointsFile,
} from "./schema.js";

export interface ImageInfo {
  name: string;
  width: number;
  height: number;
}

/** One correspondence slot in one image; u/v survive visibility toggles. */
export interface ObsSlot {
  u: number;
  v: number;
  visible: boolean;
}

export interface Correspondence {
  id: number;
  slots: (ObsSlot | null)[]; // indexed by image
}

export interface ProjectState {
  images: ImageInfo[];
  correspondences: Correspondence[];
  /** transient region ids, per image (mask module owns the rasters) */
  selectedRegions: number[][];
  activeId: number | null;
  nextId: number;
}

export interface ExportResult {
  text: string;
  /** correspondence ids left out of the file (visible in < 2 images) */
  excluded: number[];
  warnings: string[];
}

export const UNDO_DEPTH = 100;

export function emptyProject(images: ImageInfo[]): ProjectState {
  return {
    images,
    correspondences: [],
    selectedRegions: images.map(() => []),
    activeId: null,
    nextId: 0,
  };
}

function cloneState(state: ProjectState): ProjectState {
  return structuredClone(state);
}

export class ProjectStore {
  state: ProjectState;
  private undoStack: ProjectState[] = [];
  private redoStack: ProjectState[] = [];
  /** transient note for the UI, set by ops that refuse to act */
  lastWarning: string | null = null;

  constructor(state: ProjectState) {
    this.state = state;
  }

  private commit(next: ProjectState): void {
    this.undoStack.push(this.state);
    if (this.undoStack.length > UNDO_DEPTH) {
      this.undoStack.shift();
    }
    this.redoStack = [];
    this.state = next;
  }

  /**
   * Upsert an observation. Creates the correspondence when the id is new
   * (id === null labels the active one, or mints a fresh id). Out-of-bounds
   * clicks are ignored — the pixel store never holds an invalid coordinate.
   */
  addOrMovePoint(id: number | null, image: number, u: number, v: number): boolean {
    this.lastWarning = null;
    const img = this.state.images[image];
    if (!img) {
      this.lastWarning = `no image ${image}`;
      return false;
    }
    if (!(u >= 0 && u <= img.width - 1 && v >= 0 && v <= img.height - 1) ||
        !Number.isFinite(u) || !Number.isFinite(v)) {
      this.lastWarning = `(${u.toFixed(1)}, ${v.toFixed(1)}) is outside ${img.name}`;
      return false;
    }
    const next = cloneState(this.state);
    let targetId = id ?? next.activeId;
    let corr = targetId === null
      ? undefined
      : next.correspondences.find((c) => c.id === targetId);
    if (!corr) {
      targetId = targetId ?? next.nextId;
      corr = { id: targetId, slots: next.images.map(() => null) };
      next.correspondences.push(corr);
      next.correspondences.sort((a, b) => a.id - b.id);
      next.nextId = Math.max(next.nextId, targetId + 1);
    }
    corr.slots[image] = { u, v, visible: true };
    next.activeId = targetId;
    this.commit(next);
    return true;
  }

  /** Flip an observation's visibility; its pixel is kept for re-showing. */
  toggleVisibility(id: number, image: number): boolean {
    this.lastWarning = null;
    const corr = this.state.correspondences.find((c) => c.id === id);
    if (!corr) {
      this.lastWarning = `no correspondence ${id}`;
      return false;
    }
    if (image < 0 || image >= this.state.images.length) {
      this.lastWarning = `no image ${image}`;
      return false;
    }
    const next = cloneState(this.state);
    const target = next.correspondences.find((c) => c.id === id)!;
    const slot = target.slots[image];
    if (slot) {
      slot.visible = !slot.visible;
    } else {
      // Never labeled here: an explicit "not visible in this image" marker.
      target.slots[image] = { u: 0, v: 0, visible: false };
    }
    this.commit(next);
    return true;
  }

  /** Add/remove a region id from an image's transient set. */
  toggleMaskRegion(image: number, regionId: number): boolean {
    this.lastWarning = null;
    if (image < 0 || image >= this.state.images.length) {
      this.lastWarning = `no image ${image}`;
      return false;
    }
    const next = cloneState(this.state);
    const selected = next.selectedRegions[image];
    const at = selected.indexOf(regionId);
    if (at >= 0) {
      selected.splice(at, 1);
    } else {
      selected.push(regionId);
      selected.sort((a, b) => a - b);
    }
    this.commit(next);
    return true;
  }

  /** Keyboard cycling over correspondence ids (wraps around). */
  cycleActive(step: 1 | -1): number | null {
    const ids = this.state.correspondences.map((c) => c.id);
    if (ids.length === 0) return null;
    const at = this.state.activeId === null ? -1 : ids.indexOf(this.state.activeId);
    const nextAt = ((at + step) % ids.length + ids.length) % ids.length;
    // Selection changes are not undoable edits; mutate in place.
    this.state = { ...this.state, activeId: ids[nextAt] };
    return ids[nextAt];
  }

  undo(): boolean {
    const prev = this.undoStack.pop();
    if (!prev) return false;
    this.redoStack.push(this.state);
    this.state = prev;
    return true;
  }

  redo(): boolean {
    const next = this.redoStack.pop();
    if (!next) return false;
    this.undoStack.push(this.state);
    this.state = next;
    return true;
  }

  get undoDepth(): number {
    return this.undoStack.length;
  }

  /** Ids that cannot be used by the engine yet (< 2 visible views). */
  unusableIds(): number[] {
    return this.state.correspondences
      .filter((c) => c.slots.filter((s) => s?.visible).length < 2)
      .map((c) => c.id);
  }
}

/**
 * Build the points.json payload. Correspondences visible in fewer than two
 * images are excluded (the engine cannot use them) and reported; ids are
 * renumbered to a dense 0..n-1 in id order, matching the engine's files.
 */
export function exportAnnotations(state: ProjectState): ExportResult {
  const excluded: number[] = [];
  const entries: PointEntry[] = [];
  const sorted = [...state.correspondences].sort((a, b) => a.id - b.id);
  for (const corr of sorted) {
    const visible = corr.slots.filter((s) => s?.visible).length;
    if (visible < 2) {
      excluded.push(corr.id);
      continue;
    }
    const obs: Observation[] = state.images.map((_, i) => {
      const slot = corr.slots[i];
      if (slot?.visible) {
        return { image: i, u: slot.u, v: slot.v, visible: true };
      }
      return { image: i, visible: false };
    });
    entries.push({ id: entries.length, obs });
  }
  const file: PointsFile = {
    version: 1,
    images: state.images.map((_, i) => imageFilename(i, state.images.length)),
    points: entries,
  };
  return {
    text: serializePointsFile(file),
    excluded,
    warnings: excluded.map((id) => `correspondence ${id} visible in < 2 views; not exported`),
  };
}

/** Rebuild project state from a points.json payload. */
export function importAnnotations(text: string, images: ImageInfo[]): ProjectState {
  const file = parsePointsFile(text);
  if (file.images.length !== images.length) {
    throw new Error(
      `file lists ${file.images.length} images but the project has ${images.length}`
    );
  }
  const correspondences: Correspondence[] = file.points.map((pt) => {
    const slots: (ObsSlot | null)[] = images.map(() => null);
    for (const o of pt.obs) {
      if (o.visible) {
        slots[o.image] = { u: o.u, v: o.v, visible: true };
      }
    }
    return { id: pt.id, slots };
  });
  return {
    images,
    correspondences,
    selectedRegions: images.map(() => []),
    activeId: correspondences.length ? correspondences[0].id : null,
    nextId: correspondences.reduce((m, c) => Math.max(m, c.id + 1), 0),
  };
}
