/**
 * Export flow-estimator output to the formats the harmonizer reads:
 * Middlebury `.flo` files plus grayscale PNG occlusion masks.
 *
 * `.flo` layout: float32 magic 202021.25, int32 width, int32 height,
 * then interleaved (u, v) float32 pairs, all little-endian.  u is the
 * horizontal displacement, v the vertical one.
 */

import { writeFileSync, mkdirSync } from 'node:fs';
import { join } from 'node:path';
import { deflateSync } from 'node:zlib';

import { Tensor, FormatError } from './tensor.js';

export const FLO_MAGIC = 202021.25;

export class ShapeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ShapeError';
  }
}

/** Encode one (H, W, 2) slice of (u, v) displacements as `.flo` bytes. */
export function encodeFlo(uv: Float32Array, height: number, width: number): Buffer {
  if (uv.length !== height * width * 2) {
    throw new ShapeError(
      `flow slice has ${uv.length} floats, expected ${height * width * 2}`,
    );
  }
  for (const v of uv) {
    if (!Number.isFinite(v)) throw new FormatError('non-finite flow value');
  }
  const buf = Buffer.alloc(12 + 4 * uv.length);
  buf.writeFloatLE(FLO_MAGIC, 0);
  buf.writeInt32LE(width, 4);
  buf.writeInt32LE(height, 8);
  Buffer.from(uv.buffer, uv.byteOffset, uv.byteLength).copy(buf, 12);
  return buf;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Buffer): number {
  let c = 0xffffffff;
  for (const byte of buf) c = CRC_TABLE[(c ^ byte) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

function pngChunk(type: string, data: Buffer): Buffer {
  const body = Buffer.concat([Buffer.from(type, 'ascii'), data]);
  const out = Buffer.alloc(8 + data.length + 4);
  out.writeUInt32BE(data.length, 0);
  body.copy(out, 4);
  out.writeUInt32BE(crc32(body), 8 + data.length);
  return out;
}

/** Encode an 8-bit grayscale image as a minimal non-interlaced PNG. */
export function encodeGrayPng(pixels: Uint8Array, height: number, width: number): Buffer {
  if (pixels.length !== height * width) {
    throw new ShapeError(`image has ${pixels.length} pixels, expected ${height * width}`);
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr.writeUInt8(8, 8); // bit depth
  ihdr.writeUInt8(0, 9); // grayscale
  const raw = Buffer.alloc(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    Buffer.from(pixels.buffer, pixels.byteOffset + y * width, width)
      .copy(raw, y * (width + 1) + 1);
  }
  return Buffer.concat([
    Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    pngChunk('IHDR', ihdr),
    pngChunk('IDAT', deflateSync(raw)),
    pngChunk('IEND', Buffer.alloc(0)),
  ]);
}

export interface ExportFlowsOptions {
  /** (N, H, W) occlusion flags, nonzero = occluded.  Omitted: all visible. */
  occlusions?: Tensor;
  warn?: (message: string) => void;
}

/**
 * Write estimator output as numbered `.flo` files under `flowDir` and
 * matching occlusion PNGs under `maskDir`.
 *
 * `flows` is an (N, H, W, 2) float tensor with (u, v) last-axis order.
 * When no occlusion estimate is given, all-visible masks are written and
 * a warning is emitted.
 */
export function exportFlows(
  flows: Tensor,
  flowDir: string,
  maskDir: string,
  options: ExportFlowsOptions = {},
): void {
  if (flows.shape.length !== 4 || flows.shape[3] !== 2) {
    throw new ShapeError(`flows must be (N, H, W, 2), got (${flows.shape})`);
  }
  if (flows.dtype !== 'float32' && flows.dtype !== 'float64') {
    throw new FormatError(`flows must be float, got ${flows.dtype}`);
  }
  const [n, h, w] = flows.shape;
  const occ = options.occlusions;
  if (occ !== undefined) {
    if (occ.shape.length !== 3 || occ.shape[0] !== n || occ.shape[1] !== h
        || occ.shape[2] !== w) {
      throw new ShapeError(
        `occlusions must be (${n}, ${h}, ${w}), got (${occ.shape})`,
      );
    }
  } else {
    (options.warn ?? console.warn)(
      'no occlusion estimate provided; writing all-visible masks',
    );
  }
  mkdirSync(flowDir, { recursive: true });
  mkdirSync(maskDir, { recursive: true });
  const sliceLen = h * w * 2;
  for (let i = 0; i < n; i++) {
    const uv = new Float32Array(sliceLen);
    for (let j = 0; j < sliceLen; j++) {
      uv[j] = Number(flows.data[i * sliceLen + j]);
    }
    const name = String(i + 1).padStart(4, '0');
    writeFileSync(join(flowDir, `${name}.flo`), encodeFlo(uv, h, w));
    const mask = new Uint8Array(h * w);
    if (occ !== undefined) {
      for (let j = 0; j < h * w; j++) {
        mask[j] = Number(occ.data[i * h * w + j]) !== 0 ? 255 : 0;
      }
    }
    writeFileSync(join(maskDir, `${name}.png`), encodeGrayPng(mask, h, w));
  }
}
