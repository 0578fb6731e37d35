import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { z } from "zod";

/**
 * Small MLP over flattened patch pixels with a terminal sigmoid. Every
 * initializer is seeded, so two builds from the same seed start identical.
 */
export function buildModel(seed: number, inputSide: number): tf.Sequential {
  const model = tf.sequential();
  model.add(tf.layers.flatten({ inputShape: [inputSide, inputSide, 3] }));
  model.add(
    tf.layers.dense({
      units: 32,
      activation: "relu",
      kernelInitializer: tf.initializers.heNormal({ seed }),
    })
  );
  model.add(
    tf.layers.dense({
      units: 16,
      activation: "relu",
      kernelInitializer: tf.initializers.heNormal({ seed: seed + 1 }),
    })
  );
  model.add(
    tf.layers.dense({
      units: 1,
      activation: "sigmoid",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 2 }),
    })
  );
  return model;
}

export interface CheckpointMeta {
  magnification: number;
  inputSide: number;
  iterations: number;
  batchSize: number;
  seed: number;
  finalLoss: number;
}

const metaSchema = z.object({
  magnification: z.number().int().positive(),
  inputSide: z.number().int().positive(),
  iterations: z.number().int().positive(),
  batchSize: z.number().int().positive(),
  seed: z.number().int(),
  finalLoss: z.number(),
});

/** Checkpoint directory layout: meta.json + model.json + weights.bin. */
export async function saveCheckpoint(
  model: tf.LayersModel,
  meta: CheckpointMeta,
  dir: string
): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(
    tf.io.withSaveHandler(async (artifacts) => {
      const topology = {
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
      };
      fs.writeFileSync(
        path.join(dir, "model.json"),
        JSON.stringify(topology, null, 2) + "\n"
      );
      const weightData =
        artifacts.weightData instanceof ArrayBuffer
          ? artifacts.weightData
          : tf.io.CompositeArrayBuffer.join(artifacts.weightData);
      fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(weightData));
      return {
        modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" as const },
      };
    })
  );
  fs.writeFileSync(path.join(dir, "meta.json"), JSON.stringify(meta, null, 2) + "\n");
}

export async function loadCheckpoint(
  dir: string
): Promise<{ model: tf.LayersModel; meta: CheckpointMeta }> {
  let metaRaw: unknown;
  try {
    metaRaw = JSON.parse(fs.readFileSync(path.join(dir, "meta.json"), "utf-8"));
  } catch (err) {
    throw new Error(`cannot read checkpoint meta in ${dir}: ${(err as Error).message}`);
  }
  const parsed = metaSchema.safeParse(metaRaw);
  if (!parsed.success) {
    throw new Error(`${dir}/meta.json: ${parsed.error.issues[0]?.message ?? "invalid"}`);
  }
  const topology = JSON.parse(fs.readFileSync(path.join(dir, "model.json"), "utf-8"));
  const weights = fs.readFileSync(path.join(dir, "weights.bin"));
  const weightData = weights.buffer.slice(
    weights.byteOffset,
    weights.byteOffset + weights.byteLength
  );
  const model = await tf.loadLayersModel(
    tf.io.fromMemory({
      modelTopology: topology.modelTopology,
      weightSpecs: topology.weightSpecs,
      weightData,
    })
  );
  return { model, meta: parsed.data };
}
