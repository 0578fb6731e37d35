import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";
import { LabeledEntry } from "../src/dataset";
import { writePpm } from "../src/ppm";
import { Rng } from "../src/rng";

// Base colors mirroring the pipeline's synthetic slides.
export const TISSUE_RGB = [196, 60, 150] as const;
export const TUMOR_RGB = [80, 70, 200] as const;

export function tmpDir(prefix: string): string {
  return fs.mkdtempSync(path.join(os.tmpdir(), prefix));
}

function clampByte(v: number): number {
  return v < 0 ? 0 : v > 255 ? 255 : v;
}

/** 256x256 patch around one base color with brightness + channel jitter. */
export function makePatch(base: readonly number[], rng: Rng): Uint8Array {
  const data = new Uint8Array(256 * 256 * 3);
  for (let i = 0; i < data.length; i += 3) {
    const bright = 0.92 + 0.16 * rng.next();
    for (let k = 0; k < 3; k++) {
      data[i + k] = clampByte(Math.round(base[k] * bright + (rng.next() * 24 - 12)));
    }
  }
  return data;
}

export interface ExportSpec {
  slideId: string;
  magnification: number;
  patchSize: number;
  rows: number;
  cols: number;
  /** Per cell: null → no patch file (non-tissue); 0/1 → patch of that class. */
  cells: (number | null)[];
  /** Include the labels bitmap in grid.json (default true). */
  withLabels?: boolean;
  seed?: number;
  /** Override the painted color for every patch regardless of class. */
  constantColor?: readonly number[];
}

/** Write a patch-export directory shaped like the pipeline's exporter output. */
export function makeExportDir(dir: string, spec: ExportSpec): void {
  const { rows, cols } = spec;
  if (spec.cells.length !== rows * cols) {
    throw new Error("cells length must equal rows*cols");
  }
  fs.mkdirSync(dir, { recursive: true });
  const rng = new Rng(spec.seed ?? 0);
  const inTissue: number[] = [];
  const labels: number[] = [];
  for (let i = 0; i < spec.cells.length; i++) {
    const cell = spec.cells[i];
    inTissue.push(cell === null ? 0 : 1);
    labels.push(cell === 1 ? 1 : 0);
    if (cell === null) continue;
    const base = spec.constantColor ?? (cell === 1 ? TUMOR_RGB : TISSUE_RGB);
    const row = Math.floor(i / cols);
    const col = i % cols;
    writePpm(path.join(dir, `patch_${row}_${col}.ppm`), {
      width: 256,
      height: 256,
      data: spec.constantColor
        ? constantPatch(spec.constantColor)
        : makePatch(base, rng),
    });
  }
  const header: Record<string, unknown> = {
    slide_id: spec.slideId,
    magnification: spec.magnification,
    patch_size: spec.patchSize,
    rows,
    cols,
    slide_width: cols * spec.patchSize,
    slide_height: rows * spec.patchSize,
    tau: null,
    in_tissue: inTissue,
  };
  if (spec.withLabels !== false) header.labels = labels;
  fs.writeFileSync(
    path.join(dir, "grid.json"),
    JSON.stringify(header, null, 2) + "\n"
  );
}

function constantPatch(base: readonly number[]): Uint8Array {
  const data = new Uint8Array(256 * 256 * 3);
  for (let i = 0; i < data.length; i += 3) {
    data[i] = base[0];
    data[i + 1] = base[1];
    data[i + 2] = base[2];
  }
  return data;
}

/** In-memory labeled entries: alternating tumor/tissue colors with jitter. */
export function makeEntries(n: number, side: number, seed: number): LabeledEntry[] {
  const rng = new Rng(seed);
  const entries: LabeledEntry[] = [];
  for (let i = 0; i < n; i++) {
    const label = i % 2;
    const base = label === 1 ? TUMOR_RGB : TISSUE_RGB;
    const pixels = new Float32Array(side * side * 3);
    for (let j = 0; j < pixels.length; j += 3) {
      const bright = 0.92 + 0.16 * rng.next();
      for (let k = 0; k < 3; k++) {
        const v = (base[k] * bright + (rng.next() * 24 - 12)) / 255;
        pixels[j + k] = v < 0 ? 0 : v > 1 ? 1 : v;
      }
    }
    entries.push({ pixels, label });
  }
  return entries;
}
