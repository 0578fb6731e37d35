import * as fs from "node:fs";
import * as path from "node:path";
import { z } from "zod";

/**
 * Parsed grid.json as written by the pipeline's patch exporter: one header
 * describing the patch lattice of a slide at one magnification, plus optional
 * flattened row-major in_tissue and label bitmaps.
 */
export interface GridHeader {
  slideId: string;
  magnification: number;
  patchSize: number;
  rows: number;
  cols: number;
  slideWidth: number;
  slideHeight: number;
  inTissue: Uint8Array | null;
  labels: Uint8Array | null;
}

const gridSchema = z.object({
  slide_id: z.string(),
  magnification: z.number().int().positive(),
  patch_size: z.number().int().positive(),
  rows: z.number().int().positive(),
  cols: z.number().int().positive(),
  slide_width: z.number().int().positive(),
  slide_height: z.number().int().positive(),
  tau: z.number().nullable().optional(),
  in_tissue: z.array(z.number().int()).nullable().optional(),
  labels: z.array(z.number().int()).nullable().optional(),
});

function bitmap(
  values: number[] | null | undefined,
  cells: number,
  what: string,
  file: string
): Uint8Array | null {
  if (values == null) return null;
  if (values.length !== cells) {
    throw new Error(`${file}: ${what} has ${values.length} entries, expected ${cells}`);
  }
  const out = new Uint8Array(cells);
  for (let i = 0; i < cells; i++) {
    if (values[i] !== 0 && values[i] !== 1) {
      throw new Error(`${file}: ${what}[${i}] = ${values[i]}, expected 0 or 1`);
    }
    out[i] = values[i];
  }
  return out;
}

export function readGridHeader(dir: string): GridHeader {
  const file = path.join(dir, "grid.json");
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(file, "utf-8"));
  } catch (err) {
    throw new Error(`cannot read ${file}: ${(err as Error).message}`);
  }
  const parsed = gridSchema.safeParse(raw);
  if (!parsed.success) {
    throw new Error(`${file}: ${parsed.error.issues[0]?.message ?? "invalid grid header"}`);
  }
  const g = parsed.data;
  const cells = g.rows * g.cols;
  return {
    slideId: g.slide_id,
    magnification: g.magnification,
    patchSize: g.patch_size,
    rows: g.rows,
    cols: g.cols,
    slideWidth: g.slide_width,
    slideHeight: g.slide_height,
    inTissue: bitmap(g.in_tissue, cells, "in_tissue", file),
    labels: bitmap(g.labels, cells, "labels", file),
  };
}
