import * as fs from "node:fs";
import * as path from "node:path";
import { z } from "zod";

/**
 * Prediction-map wire format shared with the pipeline: `<name>.json` header
 * plus `<name>.f32` holding rows*cols row-major little-endian float32 scores
 * in [0, 1].
 */
export interface PredictionHeader {
  slide_id: string;
  model_id: string;
  magnification: number;
  patch_size: number;
  rows: number;
  cols: number;
  dtype: "f32le";
}

const headerSchema = z.object({
  slide_id: z.string(),
  model_id: z.string(),
  magnification: z.number().int().positive(),
  patch_size: z.number().int().positive(),
  rows: z.number().int().positive(),
  cols: z.number().int().positive(),
  dtype: z.literal("f32le"),
});

function checkScores(scores: Float32Array, cells: number): void {
  if (scores.length !== cells) {
    throw new Error(`${scores.length} scores for ${cells} grid cells`);
  }
  for (let i = 0; i < scores.length; i++) {
    const v = scores[i];
    if (!Number.isFinite(v) || v < 0 || v > 1) {
      throw new Error(`scores[${i}] = ${v} outside [0, 1]`);
    }
  }
}

export function writePredictionMap(
  dir: string,
  name: string,
  header: PredictionHeader,
  scores: Float32Array
): void {
  headerSchema.parse(header);
  checkScores(scores, header.rows * header.cols);
  fs.mkdirSync(dir, { recursive: true });
  const ordered = Object.fromEntries(
    Object.entries(header).sort(([a], [b]) => (a < b ? -1 : 1))
  );
  fs.writeFileSync(
    path.join(dir, `${name}.json`),
    JSON.stringify(ordered, null, 2) + "\n"
  );
  const buf = Buffer.alloc(scores.length * 4);
  for (let i = 0; i < scores.length; i++) buf.writeFloatLE(scores[i], i * 4);
  fs.writeFileSync(path.join(dir, `${name}.f32`), buf);
}

export function readPredictionMap(
  dir: string,
  name: string
): { header: PredictionHeader; scores: Float32Array } {
  const jsonPath = path.join(dir, `${name}.json`);
  let raw: unknown;
  try {
    raw = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));
  } catch (err) {
    throw new Error(`cannot read ${jsonPath}: ${(err as Error).message}`);
  }
  const parsed = headerSchema.safeParse(raw);
  if (!parsed.success) {
    throw new Error(`${jsonPath}: ${parsed.error.issues[0]?.message ?? "invalid header"}`);
  }
  const header = parsed.data;
  const cells = header.rows * header.cols;
  const buf = fs.readFileSync(path.join(dir, `${name}.f32`));
  if (buf.length !== cells * 4) {
    throw new Error(
      `${name}.f32 is ${buf.length} bytes, expected ${cells * 4} for ${header.rows}x${header.cols}`
    );
  }
  const scores = new Float32Array(cells);
  for (let i = 0; i < cells; i++) scores[i] = buf.readFloatLE(i * 4);
  checkScores(scores, cells);
  return { header, scores };
}
