/**
 * points.json schema: the contract between the labeler and the engine.
 *
 * The file lists every image and one entry per physical point. Each entry
 * carries one observation per image; invisible observations have no u/v.
 * Serialization is canonical (fixed key order, stable point/observation
 * ordering, 1-space indent) so re-exporting an imported file is
 * byte-identical.
 */

export interface VisibleObs {
  image: number;
  u: number;
  v: number;
  visible: true;
}

export interface HiddenObs {
  image: number;
  visible: false;
}

export type Observation = VisibleObs | HiddenObs;

export interface PointEntry {
  id: number;
  obs: Observation[];
}

export interface PointsFile {
  version: 1;
  images: string[];
  points: PointEntry[];
}

/** Engine-style image filename: zero-padded index, width of the largest id. */
export function imageFilename(index: number, nImages: number): string {
  const width = String(Math.max(nImages - 1, 0)).length;
  return `${String(index).padStart(width, "0")}.png`;
}

/**
 * Canonical serialization. Key order is fixed by construction and
 * JSON.stringify preserves insertion order, so equal files give equal bytes.
 */
export function serializePointsFile(file: PointsFile): string {
  const doc = {
    version: file.version,
    images: file.images,
    points: file.points.map((p) => ({
      id: p.id,
      obs: p.obs.map((o) =>
        o.visible
          ? { image: o.image, u: o.u, v: o.v, visible: true }
          : { image: o.image, visible: false }
      ),
    })),
  };
  return JSON.stringify(doc, null, 1);
}

export class SchemaError extends Error {}

/** Parse and structurally validate a points.json document. */
export function parsePointsFile(text: string): PointsFile {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch (err) {
    throw new SchemaError(`not valid JSON: ${(err as Error).message}`);
  }
  const errors = schemaErrors(doc);
  if (errors.length > 0) {
    throw new SchemaError(errors[0]);
  }
  return doc as PointsFile;
}

/**
 * Every way a document can fail the engine's loader, as human-readable
 * strings. Empty result means the file will load.
 */
export function schemaErrors(doc: unknown): string[] {
  const errors: string[] = [];
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    return ["document is not an object"];
  }
  const d = doc as Record<string, unknown>;
  if (d.version !== 1) {
    errors.push(`unsupported version ${JSON.stringify(d.version)}`);
  }
  if (!Array.isArray(d.images) || !d.images.every((s) => typeof s === "string")) {
    errors.push("images must be a list of filenames");
    return errors;
  }
  const nImages = d.images.length;
  if (!Array.isArray(d.points)) {
    errors.push("points must be a list");
    return errors;
  }
  d.points.forEach((pt, c) => {
    if (typeof pt !== "object" || pt === null) {
      errors.push(`point ${c} is not an object`);
      return;
    }
    const obs = (pt as Record<string, unknown>).obs;
    if (!Array.isArray(obs)) {
      errors.push(`point ${c} has no observation list`);
      return;
    }
    let visibleCount = 0;
    for (const o of obs) {
      const ob = o as Record<string, unknown>;
      const image = ob.image;
      if (typeof image !== "number" || !Number.isInteger(image) ||
          image < 0 || image >= nImages) {
        errors.push(`point ${c} references bad image index ${JSON.stringify(image)}`);
        continue;
      }
      if (!ob.visible) continue;
      visibleCount += 1;
      if (typeof ob.u !== "number" || typeof ob.v !== "number" ||
          !Number.isFinite(ob.u) || !Number.isFinite(ob.v)) {
        errors.push(`visible observation of point ${c} in image ${image} lacks finite u/v`);
      }
    }
    if (visibleCount < 2) {
      errors.push(`point ${c} is visible in ${visibleCount} image(s), needs >= 2`);
    }
  });
  return errors;
}
