import { Rng } from "./rng";

/** Jitter half-ranges; 0 everywhere (and flips off) makes augmentation a no-op. */
export interface AugmentRanges {
  brightness: number;
  contrast: number;
  saturation: number;
  hue: number;
  flips: boolean;
}

const LUMA_R = 0.299;
const LUMA_G = 0.587;
const LUMA_B = 0.114;

export function rgbToHsv(r: number, g: number, b: number): [number, number, number] {
  const max = Math.max(r, g, b);
  const min = Math.min(r, g, b);
  const d = max - min;
  const v = max;
  const s = max === 0 ? 0 : d / max;
  let h = 0;
  if (d !== 0) {
    if (max === r) {
      h = (((g - b) / d) % 6 + 6) % 6;
    } else if (max === g) {
      h = (b - r) / d + 2;
    } else {
      h = (r - g) / d + 4;
    }
    h /= 6;
  }
  return [h, s, v];
}

export function hsvToRgb(h: number, s: number, v: number): [number, number, number] {
  const sector = (((h % 1) + 1) % 1) * 6;
  const i = Math.floor(sector) % 6;
  const f = sector - Math.floor(sector);
  const p = v * (1 - s);
  const q = v * (1 - s * f);
  const t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return [v, t, p];
    case 1: return [q, v, p];
    case 2: return [p, v, t];
    case 3: return [p, q, v];
    case 4: return [t, p, v];
    default: return [v, p, q];
  }
}

function clamp01(x: number): number {
  return x < 0 ? 0 : x > 1 ? 1 : x;
}

function flipHorizontal(px: Float32Array, side: number): void {
  for (let r = 0; r < side; r++) {
    for (let c = 0; c < side >> 1; c++) {
      const a = (r * side + c) * 3;
      const b = (r * side + (side - 1 - c)) * 3;
      for (let k = 0; k < 3; k++) {
        const tmp = px[a + k];
        px[a + k] = px[b + k];
        px[b + k] = tmp;
      }
    }
  }
}

function flipVertical(px: Float32Array, side: number): void {
  for (let r = 0; r < side >> 1; r++) {
    for (let c = 0; c < side; c++) {
      const a = (r * side + c) * 3;
      const b = ((side - 1 - r) * side + c) * 3;
      for (let k = 0; k < 3; k++) {
        const tmp = px[a + k];
        px[a + k] = px[b + k];
        px[b + k] = tmp;
      }
    }
  }
}

/**
 * Randomly jittered copy of one patch (RGB floats in [0,1], side x side).
 *
 * Six random draws are consumed in a fixed order regardless of which ops are
 * active, so toggling one range does not reshuffle the rest of the stream.
 * Ops that drew an identity factor are skipped, which keeps zero-range
 * augmentation bit-exact.
 */
export function augmentPatch(
  src: Float32Array,
  side: number,
  ranges: AugmentRanges,
  rng: Rng
): Float32Array {
  if (src.length !== side * side * 3) {
    throw new Error(`patch buffer is ${src.length} floats, expected ${side * side * 3}`);
  }
  const wantFlipH = rng.next() < 0.5;
  const wantFlipV = rng.next() < 0.5;
  const b = rng.uniform(1 - ranges.brightness, 1 + ranges.brightness);
  const c = rng.uniform(1 - ranges.contrast, 1 + ranges.contrast);
  const s = rng.uniform(1 - ranges.saturation, 1 + ranges.saturation);
  const h = rng.uniform(-ranges.hue, ranges.hue);

  const out = new Float32Array(src);
  if (ranges.flips && wantFlipH) flipHorizontal(out, side);
  if (ranges.flips && wantFlipV) flipVertical(out, side);

  if (b !== 1) {
    for (let i = 0; i < out.length; i++) out[i] = clamp01(out[i] * b);
  }
  if (c !== 1) {
    // Blend toward the mean grey level of the (already brightened) patch.
    let mean = 0;
    for (let i = 0; i < out.length; i += 3) {
      mean += LUMA_R * out[i] + LUMA_G * out[i + 1] + LUMA_B * out[i + 2];
    }
    mean /= out.length / 3;
    for (let i = 0; i < out.length; i++) out[i] = clamp01(mean + (out[i] - mean) * c);
  }
  if (s !== 1) {
    for (let i = 0; i < out.length; i += 3) {
      const grey = LUMA_R * out[i] + LUMA_G * out[i + 1] + LUMA_B * out[i + 2];
      out[i] = clamp01(grey + (out[i] - grey) * s);
      out[i + 1] = clamp01(grey + (out[i + 1] - grey) * s);
      out[i + 2] = clamp01(grey + (out[i + 2] - grey) * s);
    }
  }
  if (h !== 0) {
    for (let i = 0; i < out.length; i += 3) {
      const [hh, ss, vv] = rgbToHsv(out[i], out[i + 1], out[i + 2]);
      const [r2, g2, b2] = hsvToRgb(hh + h, ss, vv);
      out[i] = clamp01(r2);
      out[i + 1] = clamp01(g2);
      out[i + 2] = clamp01(b2);
    }
  }
  return out;
}
