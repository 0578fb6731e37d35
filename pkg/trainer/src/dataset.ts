import * as fs from "node:fs";
import * as path from "node:path";
import { GridHeader, readGridHeader } from "./grid";
import { readPpm } from "./ppm";

/** One exported patch: grid position plus downsampled pixels in [0,1]. */
export interface PatchEntry {
  row: number;
  col: number;
  /** Flat row-major cell index into the grid. */
  index: number;
  /** 0/1 ground truth when the export carried labels, else null. */
  label: number | null;
  /** inputSide x inputSide x 3 floats. */
  pixels: Float32Array;
}

export interface PatchDataset {
  header: GridHeader;
  inputSide: number;
  entries: PatchEntry[];
}

const PATCH_RE = /^patch_(\d+)_(\d+)\.ppm$/;

/**
 * Block-mean downsample an interleaved RGB u8 image by an integer factor,
 * scaling into [0,1]. Sums stay exact in doubles, so the result is the true
 * arithmetic mean of each block.
 */
export function blockMean(
  data: Uint8Array,
  side: number,
  factor: number
): Float32Array {
  if (side % factor !== 0) {
    throw new Error(`block factor ${factor} does not divide side ${side}`);
  }
  const outSide = side / factor;
  const out = new Float32Array(outSide * outSide * 3);
  const norm = 1 / (factor * factor * 255);
  for (let r = 0; r < side; r++) {
    const outRow = Math.floor(r / factor);
    for (let c = 0; c < side; c++) {
      const src = (r * side + c) * 3;
      const dst = (outRow * outSide + Math.floor(c / factor)) * 3;
      out[dst] += data[src];
      out[dst + 1] += data[src + 1];
      out[dst + 2] += data[src + 2];
    }
  }
  for (let i = 0; i < out.length; i++) out[i] *= norm;
  return out;
}

/**
 * Load one patch-export directory (grid.json + patch_<row>_<col>.ppm files)
 * into memory, downsampling every 256x256 patch to inputSide x inputSide.
 * Entries come back sorted by flat cell index.
 */
export function loadExportDir(dir: string, inputSide = 16): PatchDataset {
  const header = readGridHeader(dir);
  if (!Number.isInteger(inputSide) || inputSide < 1 || 256 % inputSide !== 0) {
    throw new Error(`inputSide must divide 256, got ${inputSide}`);
  }
  const factor = 256 / inputSide;
  const entries: PatchEntry[] = [];
  for (const name of fs.readdirSync(dir)) {
    const m = PATCH_RE.exec(name);
    if (m === null) continue;
    const row = parseInt(m[1], 10);
    const col = parseInt(m[2], 10);
    if (row >= header.rows || col >= header.cols) {
      throw new Error(`${dir}/${name}: cell outside ${header.rows}x${header.cols} grid`);
    }
    const img = readPpm(path.join(dir, name));
    if (img.width !== 256 || img.height !== 256) {
      throw new Error(`${dir}/${name}: patch is ${img.width}x${img.height}, expected 256x256`);
    }
    const index = row * header.cols + col;
    entries.push({
      row,
      col,
      index,
      label: header.labels === null ? null : header.labels[index],
      pixels: blockMean(img.data, 256, factor),
    });
  }
  entries.sort((a, b) => a.index - b.index);
  return { header, inputSide, entries };
}

/** Pixels + label pairs ready for the training loop. */
export interface LabeledEntry {
  pixels: Float32Array;
  label: number;
}

/**
 * Merge the labeled entries of several export directories belonging to the
 * same magnification. Throws if any export lacks labels, magnifications
 * disagree, or either class ends up empty.
 */
export function mergeLabeled(datasets: PatchDataset[]): {
  magnification: number;
  inputSide: number;
  entries: LabeledEntry[];
} {
  if (datasets.length === 0) throw new Error("no datasets given");
  const magnification = datasets[0].header.magnification;
  const inputSide = datasets[0].inputSide;
  const entries: LabeledEntry[] = [];
  const counts = [0, 0];
  for (const ds of datasets) {
    if (ds.header.magnification !== magnification) {
      throw new Error(
        `magnification mismatch: ${ds.header.slideId} is ${ds.header.magnification}x, ` +
          `expected ${magnification}x`
      );
    }
    if (ds.inputSide !== inputSide) {
      throw new Error("datasets were loaded with different inputSide values");
    }
    if (ds.header.labels === null) {
      throw new Error(`${ds.header.slideId}: export carries no labels`);
    }
    for (const e of ds.entries) {
      entries.push({ pixels: e.pixels, label: e.label as number });
      counts[e.label as number] += 1;
    }
  }
  for (const cls of [0, 1]) {
    if (counts[cls] === 0) {
      throw new Error(`class ${cls} has no examples in the training set`);
    }
  }
  return { magnification, inputSide, entries };
}
