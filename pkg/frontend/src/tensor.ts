/**
 * Binary tensor container shared with the Python side.
 *
 * Layout: magic "MDTN" | version u8 = 1 | dtype u8 | ndim u8 |
 * dims u64-LE x ndim | row-major little-endian payload.
 */

import { readFileSync, writeFileSync, renameSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { randomBytes } from 'node:crypto';

export type DType = 'float32' | 'float64' | 'uint64' | 'uint8';

export type TensorData = Float32Array | Float64Array | BigUint64Array | Uint8Array;

export interface Tensor {
  dtype: DType;
  shape: number[];
  data: TensorData;
}

export class FormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'FormatError';
  }
}

const MAGIC = Buffer.from('MDTN', 'ascii');
const VERSION = 1;

const DTYPE_CODES: Record<DType, number> = {
  float32: 0,
  float64: 1,
  uint64: 2,
  uint8: 3,
};

const CODE_DTYPES: DType[] = ['float32', 'float64', 'uint64', 'uint8'];

const ITEM_SIZES: Record<DType, number> = {
  float32: 4,
  float64: 8,
  uint64: 8,
  uint8: 1,
};

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function zeros(dtype: DType, shape: number[]): Tensor {
  const n = numel(shape);
  const data =
    dtype === 'float32' ? new Float32Array(n)
    : dtype === 'float64' ? new Float64Array(n)
    : dtype === 'uint64' ? new BigUint64Array(n)
    : new Uint8Array(n);
  return { dtype, shape, data };
}

export function encodeTensor(t: Tensor): Buffer {
  if (t.shape.length > 255) throw new FormatError('too many dimensions');
  if (t.data.length !== numel(t.shape)) {
    throw new FormatError(
      `payload has ${t.data.length} elements, shape implies ${numel(t.shape)}`,
    );
  }
  const header = Buffer.alloc(7 + 8 * t.shape.length);
  MAGIC.copy(header, 0);
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(DTYPE_CODES[t.dtype], 5);
  header.writeUInt8(t.shape.length, 6);
  t.shape.forEach((d, i) => {
    if (!Number.isInteger(d) || d <= 0) throw new FormatError(`bad dimension ${d}`);
    header.writeBigUInt64LE(BigInt(d), 7 + 8 * i);
  });
  // typed arrays are little-endian on every supported platform
  const payload = Buffer.from(t.data.buffer, t.data.byteOffset, t.data.byteLength);
  return Buffer.concat([header, payload]);
}

export function decodeTensor(buf: Buffer): Tensor {
  if (buf.length < 7 || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError('not a tensor container (bad magic)');
  }
  if (buf.readUInt8(4) !== VERSION) {
    throw new FormatError(`unsupported container version ${buf.readUInt8(4)}`);
  }
  const dtypeCode = buf.readUInt8(5);
  const dtype = CODE_DTYPES[dtypeCode];
  if (dtype === undefined) throw new FormatError(`unknown dtype code ${dtypeCode}`);
  const ndim = buf.readUInt8(6);
  if (buf.length < 7 + 8 * ndim) throw new FormatError('truncated header');
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    const d = buf.readBigUInt64LE(7 + 8 * i);
    if (d <= 0n) throw new FormatError(`bad dimension ${d}`);
    shape.push(Number(d));
  }
  const n = numel(shape);
  const payload = buf.subarray(7 + 8 * ndim);
  if (payload.length !== n * ITEM_SIZES[dtype]) {
    throw new FormatError(
      `payload is ${payload.length} bytes, expected ${n * ITEM_SIZES[dtype]}`,
    );
  }
  // copy out of the file buffer so alignment is guaranteed
  const bytes = new Uint8Array(payload.length);
  bytes.set(payload);
  const data: TensorData =
    dtype === 'float32' ? new Float32Array(bytes.buffer)
    : dtype === 'float64' ? new Float64Array(bytes.buffer)
    : dtype === 'uint64' ? new BigUint64Array(bytes.buffer)
    : bytes;
  return { dtype, shape, data };
}

export function writeTensor(path: string, t: Tensor): void {
  const tmp = join(dirname(path), `.${randomBytes(6).toString('hex')}.tmp`);
  writeFileSync(tmp, encodeTensor(t));
  renameSync(tmp, path);
}

export function readTensor(path: string): Tensor {
  return decodeTensor(readFileSync(path));
}

/** Parse only the header of a tensor container file. */
export function readTensorHeader(path: string): { dtype: DType; shape: number[] } {
  const buf = readFileSync(path);
  const { dtype, shape } = decodeTensor(buf);
  return { dtype, shape };
}
