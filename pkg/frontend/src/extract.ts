/**
 * Extraction jobs: turn media files into the tensor/manifest layout the
 * Python pipeline consumes.
 *
 * Features are stored exactly as the encoder produced them (including
 * negative values); clamping is the consumer's job, which keeps one set
 * of dumps usable for studying the clamping step itself. A video of
 * duration D at frame rate R yields T = round(D * R) frame pairs; the
 * audio tokens of frame t come from the t-th non-overlapping audio
 * window. Unreadable media is skipped with a log line rather than
 * aborting the batch.
 */

import { mkdirSync, readFileSync, writeFileSync } from "node:fs";
import { join, relative } from "node:path";

import { buildAnchorBank, writeAnchorBank } from "./anchors.js";
import { HashEncoder, type FeatureEncoder } from "./encoder.js";
import { writeTensor } from "./tensorfile.js";

export const DEFAULT_WORD_BANK = [
  "dog barking", "cat meowing", "piano", "acoustic guitar", "violin",
  "drum kit", "human speech", "baby crying", "singing", "car engine",
  "motorcycle", "train", "aircraft", "helicopter", "water running",
  "ocean waves", "rain", "thunder", "wind", "fire crackling",
  "bird chirping", "rooster crowing", "cow mooing", "horse neighing",
  "sheep bleating", "lawn mower", "chainsaw", "vacuum cleaner",
  "keyboard typing", "door slamming", "footsteps", "applause",
];

export interface MediaEntry {
  id: string;
  visual_path: string;
  audio_path: string;
  kind: "image" | "video";
  duration_s?: number;
}

export interface ExtractionJob {
  media: MediaEntry[];
  grid?: [number, number];
  audio_tokens?: number;
  image_dim?: number;
  audio_dim?: number;
  frame_rate?: number;
  word_bank?: string[];
}

export interface ExtractionSummary {
  written: string[];
  skipped: { id: string; reason: string }[];
  manifest_path: string;
}

export function parseJob(raw: unknown): ExtractionJob {
  if (typeof raw !== "object" || raw === null || !Array.isArray((raw as { media?: unknown }).media)) {
    throw new Error("job must be an object with a 'media' array");
  }
  const job = raw as ExtractionJob;
  for (const entry of job.media) {
    if (!entry.id || !entry.visual_path || !entry.audio_path) {
      throw new Error("every media entry needs id, visual_path, and audio_path");
    }
    if (entry.kind !== "image" && entry.kind !== "video") {
      throw new Error(`media ${entry.id}: kind must be 'image' or 'video'`);
    }
  }
  return job;
}

function frameCount(entry: MediaEntry, frameRate: number): number {
  if (entry.kind === "image") {
    return 1;
  }
  const duration = entry.duration_s ?? 1;
  return Math.max(1, Math.round(duration * frameRate));
}

export function runExtraction(
  job: ExtractionJob,
  outDir: string,
  encoder?: FeatureEncoder,
  log: (line: string) => void = (line) => console.error(line),
): ExtractionSummary {
  const grid = job.grid ?? [8, 8];
  const tokens = job.audio_tokens ?? 12;
  const frameRate = job.frame_rate ?? 1;
  const enc = encoder ?? new HashEncoder(job.image_dim ?? 64, job.audio_dim ?? 48);
  const words = job.word_bank ?? DEFAULT_WORD_BANK;

  mkdirSync(outDir, { recursive: true });
  const bankPath = join(outDir, "anchors.json");
  writeAnchorBank(bankPath, buildAnchorBank(words, enc));

  const samples: object[] = [];
  const written: string[] = [];
  const skipped: { id: string; reason: string }[] = [];

  for (const entry of job.media) {
    let visual: Buffer;
    let audio: Buffer;
    try {
      visual = readFileSync(entry.visual_path);
      audio = readFileSync(entry.audio_path);
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      log(`skipping ${entry.id}: ${reason}`);
      skipped.push({ id: entry.id, reason });
      continue;
    }
    const sampleDir = join(outDir, entry.id);
    mkdirSync(sampleDir, { recursive: true });
    const frames: object[] = [];
    const T = frameCount(entry, frameRate);
    for (let t = 0; t < T; t += 1) {
      const imagePath = join(sampleDir, `image_f${t}.scnm`);
      const audioPath = join(sampleDir, `audio_f${t}.scnm`);
      writeTensor(imagePath, {
        dims: [grid[0] * grid[1], enc.imageDim],
        values: enc.imageFeatures(visual, t, grid),
      });
      writeTensor(audioPath, {
        dims: [tokens, enc.audioDim],
        values: enc.audioFeatures(audio, t, tokens),
      });
      frames.push({
        image_features_path: relative(outDir, imagePath),
        audio_features_path: relative(outDir, audioPath),
      });
    }
    samples.push({
      sample_id: entry.id,
      anchor_bank_path: "anchors.json",
      spatial_dims: grid,
      frames,
    });
    written.push(entry.id);
  }

  const manifestPath = join(outDir, "manifest.json");
  writeFileSync(manifestPath, JSON.stringify({ samples }, null, 2));
  return { written, skipped, manifest_path: manifestPath };
}
