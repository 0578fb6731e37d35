/**
 * Cosine-annealed learning rate with a linear warm-up over the first sixth
 * of training. The warm-up climbs from maxLr/warmupSteps to maxLr, then the
 * cosine leg decays to exactly minLr on the final iteration.
 */

export function warmupSteps(totalIterations: number): number {
  return Math.ceil(totalIterations / 6);
}

export function learningRate(
  iteration: number,
  totalIterations: number,
  maxLr: number,
  minLr: number
): number {
  if (!Number.isInteger(totalIterations) || totalIterations < 1) {
    throw new Error(`totalIterations must be a positive integer, got ${totalIterations}`);
  }
  if (!Number.isInteger(iteration) || iteration < 0 || iteration >= totalIterations) {
    throw new Error(`iteration ${iteration} outside [0, ${totalIterations})`);
  }
  if (!(minLr > 0) || !(minLr < maxLr)) {
    throw new Error(`need 0 < minLr < maxLr, got minLr=${minLr} maxLr=${maxLr}`);
  }
  const warmup = warmupSteps(totalIterations);
  if (iteration < warmup) {
    return (maxLr * (iteration + 1)) / warmup;
  }
  const span = Math.max(1, totalIterations - 1 - warmup);
  const progress = (iteration - warmup) / span;
  return minLr + 0.5 * (maxLr - minLr) * (1 + Math.cos(Math.PI * progress));
}
