/**
 * Feature encoders behind one interface.
 *
 * Real deployments plug CLIP/CLAP-style backbones in here. The built-in
 * hash encoder derives every value from a SHA-256 counter stream keyed
 * by the media bytes, so extraction is fully deterministic and needs no
 * model weights: ideal for format conformance and pipeline dry runs.
 * Values land in [-1, 1); the consumer clamps negatives at load.
 */

import { createHash } from "node:crypto";

export interface FeatureEncoder {
  readonly name: string;
  readonly imageDim: number;
  readonly audioDim: number;
  /** HW x imageDim features of one visual frame, row-major. */
  imageFeatures(media: Buffer, frame: number, grid: [number, number]): Float32Array;
  /** tokens x audioDim features of one audio frame, row-major. */
  audioFeatures(media: Buffer, frame: number, tokens: number): Float32Array;
  /** Unit-norm text embedding in the given modality's space. */
  textEmbedding(word: string, modality: "image" | "audio"): Float32Array;
}

function hashStream(key: string, count: number): Float32Array {
  const out = new Float32Array(count);
  let filled = 0;
  let counter = 0;
  while (filled < count) {
    const digest = createHash("sha256").update(`${key}#${counter}`).digest();
    for (let i = 0; i + 4 <= digest.length && filled < count; i += 4) {
      out[filled] = digest.readUInt32LE(i) / 2 ** 31 - 1.0;
      filled += 1;
    }
    counter += 1;
  }
  return out;
}

function mediaKey(media: Buffer): string {
  return createHash("sha256").update(media).digest("hex");
}

export class HashEncoder implements FeatureEncoder {
  readonly name = "hash-v1";

  constructor(
    readonly imageDim: number = 64,
    readonly audioDim: number = 48,
  ) {}

  imageFeatures(media: Buffer, frame: number, grid: [number, number]): Float32Array {
    const [h, w] = grid;
    return hashStream(`img:${mediaKey(media)}:f${frame}:${h}x${w}:${this.imageDim}`, h * w * this.imageDim);
  }

  audioFeatures(media: Buffer, frame: number, tokens: number): Float32Array {
    return hashStream(`aud:${mediaKey(media)}:f${frame}:${tokens}:${this.audioDim}`, tokens * this.audioDim);
  }

  textEmbedding(word: string, modality: "image" | "audio"): Float32Array {
    const dim = modality === "image" ? this.imageDim : this.audioDim;
    const raw = hashStream(`txt:${modality}:${word}:${dim}`, dim);
    let norm = 0;
    for (const v of raw) norm += v * v;
    norm = Math.sqrt(norm);
    if (norm === 0) {
      raw[0] = 1.0;
      return raw;
    }
    for (let i = 0; i < raw.length; i += 1) raw[i] /= norm;
    return raw;
  }
}

/** Features of the given width regardless of the encoder's native dim. */
export function hashImageFeaturesOfWidth(
  media: Buffer,
  frame: number,
  grid: [number, number],
  width: number,
): Float32Array {
  return new HashEncoder(width).imageFeatures(media, frame, grid);
}
