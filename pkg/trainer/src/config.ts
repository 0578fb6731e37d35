/** Full training recipe for one per-magnification patch classifier. */
export interface TrainConfig {
  magnification: number;
  iterations: number;
  batchSize: number;
  /** Adam moments. */
  beta1: number;
  beta2: number;
  epsilon: number;
  /** Cosine schedule endpoints; linear warm-up covers the first 1/6 of iterations. */
  maxLr: number;
  minLr: number;
  /** Color jitter half-ranges (multiplicative for b/c/s, hue as fraction of the circle). */
  brightness: number;
  contrast: number;
  saturation: number;
  hue: number;
  flips: boolean;
  /** Patches are block-mean downsampled from 256x256 to inputSide x inputSide. */
  inputSide: number;
  seed: number;
  /** Print a progress line every this many iterations (0 disables). */
  logEvery: number;
}

export const DEFAULTS = {
  iterations: 5000,
  batchSize: 256,
  beta1: 0.9,
  beta2: 0.999,
  epsilon: 1e-8,
  maxLr: 1e-4,
  minLr: 1e-5,
  brightness: 0.3,
  contrast: 0.3,
  saturation: 0.3,
  hue: 0.1,
  flips: true,
  inputSide: 16,
  seed: 0,
  logEvery: 100,
} as const;

export function makeTrainConfig(
  partial: Partial<TrainConfig> & { magnification: number }
): TrainConfig {
  const cfg: TrainConfig = { ...DEFAULTS, ...partial };
  if (!Number.isInteger(cfg.magnification) || cfg.magnification <= 0) {
    throw new Error(`magnification must be a positive integer, got ${cfg.magnification}`);
  }
  if (!Number.isInteger(cfg.iterations) || cfg.iterations < 1) {
    throw new Error(`iterations must be >= 1, got ${cfg.iterations}`);
  }
  if (!Number.isInteger(cfg.batchSize) || cfg.batchSize < 1) {
    throw new Error(`batchSize must be >= 1, got ${cfg.batchSize}`);
  }
  if (!(cfg.minLr > 0) || !(cfg.minLr < cfg.maxLr)) {
    throw new Error(`need 0 < minLr < maxLr, got minLr=${cfg.minLr} maxLr=${cfg.maxLr}`);
  }
  for (const key of ["brightness", "contrast", "saturation"] as const) {
    if (cfg[key] < 0 || cfg[key] >= 1) {
      throw new Error(`${key} jitter must lie in [0, 1), got ${cfg[key]}`);
    }
  }
  if (cfg.hue < 0 || cfg.hue > 0.5) {
    throw new Error(`hue jitter must lie in [0, 0.5], got ${cfg.hue}`);
  }
  if (!Number.isInteger(cfg.inputSide) || cfg.inputSide < 1 || 256 % cfg.inputSide !== 0) {
    throw new Error(`inputSide must divide 256, got ${cfg.inputSide}`);
  }
  return cfg;
}
