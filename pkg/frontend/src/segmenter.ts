/**
 * Long-running segmenter adapter speaking the pipeline's wire protocol.
 *
 * One JSON document per line, UTF-8, newline-terminated:
 *   request  {"sample_id", "K", "C_I", "factors": [[...] * K], "image_path"}
 *   response {"masks": K arrays of HxW floats in [0, 1]}
 *
 * Requests are handled strictly in order (one in flight). A malformed
 * request yields {"error": ...} and the process keeps serving. The
 * built-in implementation assigns each image token of the hash encoder
 * to the factor with the highest cosine, standing in for a real
 * open-vocabulary model that deployments would place here.
 */

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";

import { hashImageFeaturesOfWidth } from "./encoder.js";

export interface SegmenterRequest {
  sample_id: string;
  K: number;
  C_I: number;
  factors: number[][];
  image_path: string;
}

function validateRequest(raw: unknown): SegmenterRequest {
  const req = raw as Partial<SegmenterRequest>;
  if (!req || typeof req !== "object") {
    throw new Error("request must be a JSON object");
  }
  if (typeof req.K !== "number" || req.K < 1) {
    throw new Error("K must be a positive integer");
  }
  if (typeof req.C_I !== "number" || req.C_I < 1) {
    throw new Error("C_I must be a positive integer");
  }
  if (!Array.isArray(req.factors) || req.factors.length !== req.K) {
    throw new Error("factors must hold K rows");
  }
  for (const row of req.factors) {
    if (!Array.isArray(row) || row.length !== req.C_I) {
      throw new Error("every factor row must hold C_I numbers");
    }
  }
  return {
    sample_id: String(req.sample_id ?? ""),
    K: req.K,
    C_I: req.C_I,
    factors: req.factors,
    image_path: String(req.image_path ?? ""),
  };
}

function cosine(a: number[] | Float32Array, b: number[] | Float32Array): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i += 1) {
    dot += Number(a[i]) * Number(b[i]);
    na += Number(a[i]) ** 2;
    nb += Number(b[i]) ** 2;
  }
  if (na === 0 || nb === 0) {
    return 0;
  }
  return dot / Math.sqrt(na * nb);
}

export function answerRequest(req: SegmenterRequest, grid: [number, number]): number[][][] {
  let media: Buffer;
  try {
    media = readFileSync(req.image_path);
  } catch {
    // no readable pixels: fall back to hashing the path itself so the
    // adapter still produces deterministic, well-formed masks
    media = Buffer.from(req.image_path, "utf-8");
  }
  const [h, w] = grid;
  const tokens = hashImageFeaturesOfWidth(media, 0, grid, req.C_I);
  const assignment = new Array<number>(h * w);
  for (let n = 0; n < h * w; n += 1) {
    const token = tokens.subarray(n * req.C_I, (n + 1) * req.C_I);
    let best = 0;
    let bestSim = -Infinity;
    for (let k = 0; k < req.K; k += 1) {
      const sim = cosine(token, req.factors[k]);
      if (sim > bestSim) {
        bestSim = sim;
        best = k;
      }
    }
    assignment[n] = best;
  }
  const masks: number[][][] = [];
  for (let k = 0; k < req.K; k += 1) {
    const mask: number[][] = [];
    for (let i = 0; i < h; i += 1) {
      const row: number[] = [];
      for (let j = 0; j < w; j += 1) {
        row.push(assignment[i * w + j] === k ? 1.0 : 0.0);
      }
      mask.push(row);
    }
    masks.push(mask);
  }
  return masks;
}

export function serveSegmenter(
  input: NodeJS.ReadableStream,
  output: NodeJS.WritableStream,
  grid: [number, number],
): Promise<void> {
  const lines = createInterface({ input, crlfDelay: Infinity });
  return new Promise((resolve) => {
    lines.on("line", (line) => {
      const trimmed = line.trim();
      if (!trimmed) {
        return;
      }
      let reply: object;
      try {
        const request = validateRequest(JSON.parse(trimmed));
        reply = { masks: answerRequest(request, grid) };
      } catch (err) {
        reply = { error: err instanceof Error ? err.message : String(err) };
      }
      output.write(`${JSON.stringify(reply)}\n`);
    });
    lines.on("close", resolve);
  });
}
