/**
 * Browser entry point: a single-canvas labeler for one image at a time.
 *
 * Keys:
 *   left/right  switch image
 *   n / p       next / previous correspondence
 *   h           hide/show the active correspondence in this image
 *   m           toggle mask mode (clicks select regions instead of points)
 *   d           cycle depth overlay opacity
 *   u / r       undo / redo
 *   e           download points.json
 */

import { ProjectStore, emptyProject, exportAnnotations, ImageInfo } from "./project.js";
import { RegionRaster, gridRegions, regionAt, exportMaskRaster } from "./masks.js";
import { colorizeDepth, blend } from "./depth.js";
import { KVStore, loadProject, saveProject } from "./storage.js";

interface LoadedImage {
  info: ImageInfo;
  bitmap: ImageBitmap;
  depth: Float32Array | null;
  regions: RegionRaster;
}

const DEPTH_STEPS = [0, 0.35, 0.7];

export class LabelerApp {
  private store: ProjectStore;
  private images: LoadedImage[] = [];
  private current = 0;
  private maskMode = false;
  private depthStep = 0;
  private statusEl: HTMLElement | null;

  constructor(
    private canvas: HTMLCanvasElement,
    private persistence: KVStore,
    private projectName: string
  ) {
    this.statusEl = document.getElementById("status");
    const saved = loadProject(persistence, projectName);
    this.store = new ProjectStore(saved ?? emptyProject([]));
    canvas.addEventListener("click", (ev) => this.onClick(ev));
    window.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  async addImage(name: string, blob: Blob, depth: Float32Array | null): Promise<void> {
    const bitmap = await createImageBitmap(blob);
    const info = { name, width: bitmap.width, height: bitmap.height };
    this.images.push({
      info,
      bitmap,
      depth,
      regions: gridRegions(bitmap.width, bitmap.height, 32),
    });
    this.store.state.images.push(info);
    this.store.state.selectedRegions.push([]);
    for (const corr of this.store.state.correspondences) {
      corr.slots.push(null);
    }
    this.redraw();
  }

  private canvasToImage(ev: MouseEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const img = this.images[this.current];
    const sx = img.info.width / rect.width;
    const sy = img.info.height / rect.height;
    return [(ev.clientX - rect.left) * sx, (ev.clientY - rect.top) * sy];
  }

  private onClick(ev: MouseEvent): void {
    if (this.images.length === 0) return;
    const [u, v] = this.canvasToImage(ev);
    if (this.maskMode) {
      const region = regionAt(this.images[this.current].regions, u, v);
      if (region !== null) this.store.toggleMaskRegion(this.current, region);
    } else {
      const fresh = ev.shiftKey ? this.store.state.nextId : null;
      this.store.addOrMovePoint(fresh, this.current, u, v);
    }
    this.afterEdit();
  }

  private onKey(ev: KeyboardEvent): void {
    switch (ev.key) {
      case "ArrowRight":
        this.current = (this.current + 1) % Math.max(1, this.images.length);
        break;
      case "ArrowLeft":
        this.current =
          (this.current - 1 + this.images.length) % Math.max(1, this.images.length);
        break;
      case "n":
        this.store.cycleActive(1);
        break;
      case "p":
        this.store.cycleActive(-1);
        break;
      case "h":
        if (this.store.state.activeId !== null) {
          this.store.toggleVisibility(this.store.state.activeId, this.current);
        }
        break;
      case "m":
        this.maskMode = !this.maskMode;
        break;
      case "d":
        this.depthStep = (this.depthStep + 1) % DEPTH_STEPS.length;
        break;
      case "u":
        this.store.undo();
        break;
      case "r":
        this.store.redo();
        break;
      case "e":
        this.download();
        return;
      default:
        return;
    }
    this.afterEdit();
  }

  private afterEdit(): void {
    saveProject(this.persistence, this.projectName, this.store.state);
    this.redraw();
  }

  private download(): void {
    const result = exportAnnotations(this.store.state);
    for (const warning of result.warnings) console.warn(warning);
    const url = URL.createObjectURL(new Blob([result.text], { type: "application/json" }));
    const a = document.createElement("a");
    a.href = url;
    a.download = "points.json";
    a.click();
    URL.revokeObjectURL(url);
    for (let i = 0; i < this.images.length; i++) {
      if (this.store.state.selectedRegions[i].length > 0) this.downloadMask(i);
    }
  }

  private downloadMask(index: number): void {
    const img = this.images[index];
    const bytes = exportMaskRaster(img.regions, this.store.state.selectedRegions[index]);
    const off = document.createElement("canvas");
    off.width = img.info.width;
    off.height = img.info.height;
    const ctx = off.getContext("2d")!;
    const rgba = new Uint8ClampedArray(bytes.length * 4);
    for (let i = 0; i < bytes.length; i++) {
      rgba[i * 4] = rgba[i * 4 + 1] = rgba[i * 4 + 2] = bytes[i];
      rgba[i * 4 + 3] = 255;
    }
    ctx.putImageData(new ImageData(rgba, img.info.width, img.info.height), 0, 0);
    off.toBlob((blob) => {
      if (!blob) return;
      const url = URL.createObjectURL(blob);
      const a = document.createElement("a");
      a.href = url;
      a.download = `mask_${index}.png`;
      a.click();
      URL.revokeObjectURL(url);
    });
  }

  private redraw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx || this.images.length === 0) return;
    const img = this.images[this.current];
    this.canvas.width = img.info.width;
    this.canvas.height = img.info.height;
    ctx.drawImage(img.bitmap, 0, 0);

    const opacity = DEPTH_STEPS[this.depthStep];
    if (opacity > 0 && img.depth) {
      const base = ctx.getImageData(0, 0, img.info.width, img.info.height);
      const overlay = colorizeDepth(img.depth, img.info.width, img.info.height);
      const mixed = new Uint8ClampedArray(blend(base.data, overlay, opacity));
      ctx.putImageData(new ImageData(mixed, img.info.width, img.info.height), 0, 0);
    }

    const masked = exportMaskRaster(img.regions, this.store.state.selectedRegions[this.current]);
    if (this.store.state.selectedRegions[this.current].length > 0) {
      const shade = ctx.getImageData(0, 0, img.info.width, img.info.height);
      for (let i = 0; i < masked.length; i++) {
        if (masked[i] === 0) {
          shade.data[i * 4] = Math.round(shade.data[i * 4] * 0.3);
          shade.data[i * 4 + 1] = Math.round(shade.data[i * 4 + 1] * 0.3);
          shade.data[i * 4 + 2] = Math.round(shade.data[i * 4 + 2] * 0.3);
        }
      }
      ctx.putImageData(shade, 0, 0);
    }

    for (const corr of this.store.state.correspondences) {
      const slot = corr.slots[this.current];
      if (!slot || !slot.visible) continue;
      const active = corr.id === this.store.state.activeId;
      ctx.beginPath();
      ctx.arc(slot.u, slot.v, active ? 6 : 4, 0, Math.PI * 2);
      ctx.strokeStyle = active ? "#ff4444" : "#44ccff";
      ctx.lineWidth = 2;
      ctx.stroke();
      ctx.fillStyle = ctx.strokeStyle;
      ctx.font = "12px sans-serif";
      ctx.fillText(String(corr.id), slot.u + 8, slot.v - 8);
    }

    if (this.statusEl) {
      const unusable = this.store.unusableIds();
      this.statusEl.textContent =
        `image ${this.current + 1}/${this.images.length}` +
        ` | active #${this.store.state.activeId ?? "-"}` +
        (this.maskMode ? " | MASK MODE" : "") +
        (unusable.length ? ` | needs more views: ${unusable.join(", ")}` : "") +
        (this.store.lastWarning ? ` | ${this.store.lastWarning}` : "");
    }
  }
}

export function mount(canvasId: string, projectName = "default"): LabelerApp {
  const canvas = document.getElementById(canvasId);
  if (!(canvas instanceof HTMLCanvasElement)) {
    throw new Error(`#${canvasId} is not a canvas`);
  }
  return new LabelerApp(canvas, window.localStorage, projectName);
}
