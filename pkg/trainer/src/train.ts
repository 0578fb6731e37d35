import * as tf from "@tensorflow/tfjs";
import { AugmentRanges, augmentPatch } from "./augment";
import { TrainConfig } from "./config";
import { LabeledEntry } from "./dataset";
import { buildModel } from "./model";
import { Rng } from "./rng";
import { learningRate } from "./schedule";

export interface TrainResult {
  model: tf.LayersModel;
  finalLoss: number;
  /** Per-iteration training loss and the learning rate that produced it. */
  lossCurve: number[];
  lrCurve: number[];
}

/**
 * tfjs reads `learningRate` afresh on every applyGradients call, so the
 * per-iteration schedule can poke the field while Adam's moment estimates
 * carry over untouched.
 */
function setLearningRate(opt: tf.AdamOptimizer, lr: number): void {
  (opt as unknown as { learningRate: number }).learningRate = lr;
}

/**
 * Train a fresh patch classifier with Adam under the warm-up + cosine
 * schedule, drawing augmented minibatches from a reshuffled-each-epoch
 * stream. Deterministic for a fixed config on a given machine.
 */
export async function trainClassifier(
  entries: LabeledEntry[],
  cfg: TrainConfig
): Promise<TrainResult> {
  await tf.ready();
  if (entries.length === 0) throw new Error("training set is empty");
  const dim = cfg.inputSide * cfg.inputSide * 3;
  const counts = [0, 0];
  for (const e of entries) {
    if (e.label !== 0 && e.label !== 1) {
      throw new Error(`label ${e.label} is not 0/1`);
    }
    if (e.pixels.length !== dim) {
      throw new Error(`entry has ${e.pixels.length} floats, expected ${dim}`);
    }
    counts[e.label] += 1;
  }
  for (const cls of [0, 1]) {
    if (counts[cls] === 0) {
      throw new Error(`class ${cls} has no examples in the training set`);
    }
  }

  const rng = new Rng(cfg.seed);
  const model = buildModel(cfg.seed, cfg.inputSide);
  const opt = tf.train.adam(cfg.maxLr, cfg.beta1, cfg.beta2, cfg.epsilon);
  const ranges: AugmentRanges = {
    brightness: cfg.brightness,
    contrast: cfg.contrast,
    saturation: cfg.saturation,
    hue: cfg.hue,
    flips: cfg.flips,
  };

  const order = entries.map((_, i) => i);
  let cursor = order.length; // force a shuffle before the first draw
  const xBuf = new Float32Array(cfg.batchSize * dim);
  const yBuf = new Float32Array(cfg.batchSize);
  const lossCurve: number[] = [];
  const lrCurve: number[] = [];

  for (let it = 0; it < cfg.iterations; it++) {
    for (let b = 0; b < cfg.batchSize; b++) {
      if (cursor >= order.length) {
        rng.shuffle(order);
        cursor = 0;
      }
      const e = entries[order[cursor++]];
      xBuf.set(augmentPatch(e.pixels, cfg.inputSide, ranges, rng), b * dim);
      yBuf[b] = e.label;
    }
    const lr = learningRate(it, cfg.iterations, cfg.maxLr, cfg.minLr);
    setLearningRate(opt, lr);
    const x = tf.tensor4d(xBuf, [cfg.batchSize, cfg.inputSide, cfg.inputSide, 3]);
    const y = tf.tensor2d(yBuf, [cfg.batchSize, 1]);
    const lossT = opt.minimize(
      () =>
        tf.metrics
          .binaryCrossentropy(y, model.apply(x, { training: true }) as tf.Tensor2D)
          .mean() as tf.Scalar,
      true
    ) as tf.Scalar;
    const loss = lossT.dataSync()[0];
    tf.dispose([x, y, lossT]);
    lossCurve.push(loss);
    lrCurve.push(lr);
    if (cfg.logEvery > 0 && ((it + 1) % cfg.logEvery === 0 || it === 0)) {
      console.log(
        `iter ${it + 1}/${cfg.iterations} lr=${lr.toExponential(3)} loss=${loss.toFixed(5)}`
      );
    }
  }
  opt.dispose();
  return { model, finalLoss: lossCurve[lossCurve.length - 1], lossCurve, lrCurve };
}
