import * as fs from "node:fs";

/** Decoded binary PPM: interleaved RGB, row-major, 3 bytes per pixel. */
export interface PpmImage {
  width: number;
  height: number;
  data: Uint8Array;
}

export class PpmFormatError extends Error {}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

/**
 * Pull the next whitespace-delimited header token, skipping `#` comments
 * (which run to end of line). Returns the token and the offset just past it.
 */
function nextToken(buf: Buffer, offset: number): [string, number] {
  let i = offset;
  for (;;) {
    while (i < buf.length && WHITESPACE.has(buf[i])) i++;
    if (i < buf.length && buf[i] === 0x23) {
      while (i < buf.length && buf[i] !== 0x0a) i++;
      continue;
    }
    break;
  }
  const start = i;
  while (i < buf.length && !WHITESPACE.has(buf[i]) && buf[i] !== 0x23) i++;
  if (i === start) throw new PpmFormatError("truncated PPM header");
  return [buf.toString("ascii", start, i), i];
}

function headerInt(buf: Buffer, offset: number, what: string): [number, number] {
  const [tok, next] = nextToken(buf, offset);
  if (!/^\d+$/.test(tok)) {
    throw new PpmFormatError(`bad PPM ${what} '${tok}'`);
  }
  return [parseInt(tok, 10), next];
}

export function parsePpm(buf: Buffer): PpmImage {
  const [magic, afterMagic] = nextToken(buf, 0);
  if (magic !== "P6") throw new PpmFormatError(`not a binary PPM (magic '${magic}')`);
  let offset = afterMagic;
  let width: number, height: number, maxval: number;
  [width, offset] = headerInt(buf, offset, "width");
  [height, offset] = headerInt(buf, offset, "height");
  [maxval, offset] = headerInt(buf, offset, "maxval");
  if (width <= 0 || height <= 0) {
    throw new PpmFormatError(`bad PPM dimensions ${width}x${height}`);
  }
  if (maxval !== 255) {
    throw new PpmFormatError(`unsupported PPM maxval ${maxval} (expected 255)`);
  }
  // Exactly one whitespace byte separates the header from the pixel payload.
  if (offset >= buf.length || !WHITESPACE.has(buf[offset])) {
    throw new PpmFormatError("missing separator before PPM pixel data");
  }
  offset += 1;
  const expected = width * height * 3;
  if (buf.length - offset !== expected) {
    throw new PpmFormatError(
      `PPM payload is ${buf.length - offset} bytes, expected ${expected}`
    );
  }
  return { width, height, data: new Uint8Array(buf.buffer, buf.byteOffset + offset, expected) };
}

export function readPpm(path: string): PpmImage {
  return parsePpm(fs.readFileSync(path));
}

export function writePpm(path: string, image: PpmImage): void {
  const { width, height, data } = image;
  if (data.length !== width * height * 3) {
    throw new PpmFormatError(
      `pixel buffer is ${data.length} bytes, expected ${width * height * 3}`
    );
  }
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  fs.writeFileSync(path, Buffer.concat([header, Buffer.from(data)]));
}
