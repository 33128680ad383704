/**
 * Bridge command line.
 *
 *   extract          --job job.json --out DIR
 *   build-bank       --words words.txt --out bank.json
 *                    [--image-dim N --audio-dim N --subset half|quarter --seed S]
 *   serve-segmenter  [--grid HxW]
 */

import { readFileSync } from "node:fs";
import process from "node:process";

import { EmptyBankError, buildAnchorBank, subsetWords, writeAnchorBank } from "./anchors.js";
import { HashEncoder } from "./encoder.js";
import { parseJob, runExtraction } from "./extract.js";
import { serveSegmenter } from "./segmenter.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`malformed arguments near ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function require(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new Error(`--${name} is required`);
  }
  return value;
}

function parseGrid(spec: string): [number, number] {
  const match = /^(\d+)x(\d+)$/.exec(spec);
  if (!match) {
    throw new Error(`grid must look like 8x8, got ${spec}`);
  }
  return [Number(match[1]), Number(match[2])];
}

async function main(): Promise<number> {
  const [command, ...rest] = process.argv.slice(2);
  try {
    if (command === "extract") {
      const flags = parseFlags(rest);
      const job = parseJob(JSON.parse(readFileSync(require(flags, "job"), "utf-8")));
      const summary = runExtraction(job, require(flags, "out"));
      console.log(
        `extracted ${summary.written.length} samples ` +
          `(${summary.skipped.length} skipped) -> ${summary.manifest_path}`,
      );
      return 0;
    }
    if (command === "build-bank") {
      const flags = parseFlags(rest);
      let words = readFileSync(require(flags, "words"), "utf-8")
        .split(/\r?\n/)
        .map((w) => w.trim())
        .filter((w) => w.length > 0);
      const subset = flags.get("subset");
      const seed = Number(flags.get("seed") ?? "0");
      if (subset === "half") {
        words = subsetWords(words, 0.5, seed);
      } else if (subset === "quarter") {
        words = subsetWords(words, 0.25, seed);
      } else if (subset !== undefined) {
        throw new Error(`unknown subset ${subset}`);
      }
      const encoder = new HashEncoder(
        Number(flags.get("image-dim") ?? "64"),
        Number(flags.get("audio-dim") ?? "48"),
      );
      writeAnchorBank(require(flags, "out"), buildAnchorBank(words, encoder));
      console.log(`wrote ${words.length}-word anchor bank to ${flags.get("out")}`);
      return 0;
    }
    if (command === "serve-segmenter") {
      const flags = parseFlags(rest);
      const grid = parseGrid(flags.get("grid") ?? "8x8");
      await serveSegmenter(process.stdin, process.stdout, grid);
      return 0;
    }
    console.error("usage: cli.js <extract|build-bank|serve-segmenter> [flags]");
    return 2;
  } catch (err) {
    if (err instanceof EmptyBankError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
