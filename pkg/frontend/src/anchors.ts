/**
 * Anchor banks: paired text embeddings of a word list, one per modality.
 *
 * Emitted as the JSON document the Python loader expects. Embeddings are
 * L2-normalized before storage; the loader clamps negatives the same
 * way it clamps features. Word-bank halving and quartering draw a
 * seeded random subset, for studying sensitivity to bank size.
 */

import { createHash } from "node:crypto";
import { writeFileSync } from "node:fs";

import type { FeatureEncoder } from "./encoder.js";

export class EmptyBankError extends Error {}

export interface AnchorBankDocument {
  labels: string[];
  image_anchors: number[][];
  audio_anchors: number[][];
}

export function buildAnchorBank(words: string[], encoder: FeatureEncoder): AnchorBankDocument {
  if (words.length === 0) {
    throw new EmptyBankError("word bank is empty");
  }
  return {
    labels: [...words],
    image_anchors: words.map((w) => Array.from(encoder.textEmbedding(w, "image"))),
    audio_anchors: words.map((w) => Array.from(encoder.textEmbedding(w, "audio"))),
  };
}

export function writeAnchorBank(path: string, bank: AnchorBankDocument): void {
  writeFileSync(path, JSON.stringify(bank));
}

/** Seeded subset of ceil(words.length * fraction) words, order preserved. */
export function subsetWords(words: string[], fraction: number, seed: number): string[] {
  const keep = Math.ceil(words.length * fraction);
  const scored = words.map((word, index) => ({
    word,
    index,
    score: createHash("sha256").update(`subset:${seed}:${word}`).digest().readUInt32LE(0),
  }));
  scored.sort((a, b) => a.score - b.score);
  const chosen = scored.slice(0, keep).sort((a, b) => a.index - b.index);
  return chosen.map((s) => s.word);
}
