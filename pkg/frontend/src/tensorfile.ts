/**
 * Binary tensor container shared with the Python pipeline.
 *
 * Layout (all little-endian):
 *   magic      4 bytes  "SCNM"
 *   version    u16      currently 1
 *   dtype_code u8       0 = float32
 *   ndim       u8
 *   dims       ndim * u64
 *   payload    product(dims) float32 values, row-major
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MAGIC = "SCNM";
export const VERSION = 1;
export const DTYPE_FLOAT32 = 0;

export interface Tensor {
  dims: number[];
  values: Float32Array;
}

export class TensorFormatError extends Error {}
export class TensorCorruptError extends Error {}

function headerSize(ndim: number): number {
  return 4 + 2 + 1 + 1 + 8 * ndim;
}

export function encodeTensor(tensor: Tensor): Buffer {
  const count = tensor.dims.reduce((a, b) => a * b, 1);
  if (count !== tensor.values.length) {
    throw new TensorCorruptError(
      `dims imply ${count} values, got ${tensor.values.length}`,
    );
  }
  const buf = Buffer.alloc(headerSize(tensor.dims.length) + 4 * count);
  buf.write(MAGIC, 0, "ascii");
  buf.writeUInt16LE(VERSION, 4);
  buf.writeUInt8(DTYPE_FLOAT32, 6);
  buf.writeUInt8(tensor.dims.length, 7);
  let offset = 8;
  for (const dim of tensor.dims) {
    buf.writeBigUInt64LE(BigInt(dim), offset);
    offset += 8;
  }
  for (const value of tensor.values) {
    buf.writeFloatLE(value, offset);
    offset += 4;
  }
  return buf;
}

export function decodeTensor(buf: Buffer, where = "tensor"): Tensor {
  if (buf.length < 8) {
    throw new TensorFormatError(`${where}: truncated header`);
  }
  if (buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new TensorFormatError(`${where}: bad magic`);
  }
  if (buf.readUInt16LE(4) !== VERSION) {
    throw new TensorFormatError(`${where}: unsupported version`);
  }
  if (buf.readUInt8(6) !== DTYPE_FLOAT32) {
    throw new TensorFormatError(`${where}: unsupported dtype code`);
  }
  const ndim = buf.readUInt8(7);
  if (buf.length < headerSize(ndim)) {
    throw new TensorCorruptError(`${where}: truncated dimension list`);
  }
  const dims: number[] = [];
  let offset = 8;
  for (let i = 0; i < ndim; i += 1) {
    dims.push(Number(buf.readBigUInt64LE(offset)));
    offset += 8;
  }
  const count = dims.reduce((a, b) => a * b, 1);
  if (buf.length - offset !== 4 * count) {
    throw new TensorCorruptError(
      `${where}: payload holds ${(buf.length - offset) / 4} values, dims imply ${count}`,
    );
  }
  const values = new Float32Array(count);
  for (let i = 0; i < count; i += 1) {
    values[i] = buf.readFloatLE(offset + 4 * i);
  }
  return { dims, values };
}

export function writeTensor(path: string, tensor: Tensor): void {
  writeFileSync(path, encodeTensor(tensor));
}

export function readTensor(path: string): Tensor {
  return decodeTensor(readFileSync(path), path);
}
