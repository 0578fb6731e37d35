import * as tf from "@tensorflow/tfjs";
import { PatchDataset, loadExportDir } from "./dataset";
import { CheckpointMeta, loadCheckpoint } from "./model";
import { writePredictionMap } from "./wire";

export interface InferResult {
  /** Final map name, `<name>_<magnification>`. */
  mapName: string;
  /** Cells that had an exported patch and therefore a model score. */
  scored: number;
  cells: number;
}

const CHUNK = 512;

/** Score every exported patch; cells without a patch file stay at 0. */
export function scoreDataset(model: tf.LayersModel, ds: PatchDataset): Float32Array {
  const scores = new Float32Array(ds.header.rows * ds.header.cols);
  const dim = ds.inputSide * ds.inputSide * 3;
  for (let start = 0; start < ds.entries.length; start += CHUNK) {
    const chunk = ds.entries.slice(start, start + CHUNK);
    const buf = new Float32Array(chunk.length * dim);
    for (let i = 0; i < chunk.length; i++) buf.set(chunk[i].pixels, i * dim);
    const x = tf.tensor4d(buf, [chunk.length, ds.inputSide, ds.inputSide, 3]);
    const out = model.predict(x) as tf.Tensor;
    const vals = out.dataSync();
    tf.dispose([x, out]);
    for (let i = 0; i < chunk.length; i++) {
      // The sigmoid already lands in (0, 1); clamp only guards f32 rounding.
      scores[chunk[i].index] = Math.min(1, Math.max(0, vals[i]));
    }
  }
  return scores;
}

export function inferWithModel(
  model: tf.LayersModel,
  meta: CheckpointMeta,
  patchesDir: string,
  outDir: string,
  name: string
): InferResult {
  const ds = loadExportDir(patchesDir, meta.inputSide);
  if (ds.header.magnification !== meta.magnification) {
    throw new Error(
      `magnification mismatch: checkpoint is ${meta.magnification}x, ` +
        `grid is ${ds.header.magnification}x`
    );
  }
  const scores = scoreDataset(model, ds);
  const mapName = `${name}_${meta.magnification}`;
  writePredictionMap(
    outDir,
    mapName,
    {
      slide_id: ds.header.slideId,
      model_id: mapName,
      magnification: ds.header.magnification,
      patch_size: ds.header.patchSize,
      rows: ds.header.rows,
      cols: ds.header.cols,
      dtype: "f32le",
    },
    scores
  );
  return { mapName, scored: ds.entries.length, cells: scores.length };
}

/** One-shot convenience: load the checkpoint, score one export dir, write the map. */
export async function inferMaps(
  ckptDir: string,
  patchesDir: string,
  outDir: string,
  name: string
): Promise<InferResult> {
  await tf.ready();
  const { model, meta } = await loadCheckpoint(ckptDir);
  try {
    return inferWithModel(model, meta, patchesDir, outDir, name);
  } finally {
    model.dispose();
  }
}
