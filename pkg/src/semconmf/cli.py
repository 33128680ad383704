"""Batch command line: decompose manifests, score results, inspect factors.

Subcommands:
    decompose   run the factorization plus segmenter stage over a manifest
    eval        aggregate segmentation metrics from one or more runs
    inspect     dump per-factor heatmaps and descriptor tables for a sample

Every sample is processed in isolation; a corrupt or diverging sample is
reported and skipped without aborting the batch, and the exit code is 1
if any sample failed. Re-running decompose with the same configuration
and seed writes byte-identical result JSON.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import metrics, tensorio
from .errors import Degenerate, DimensionMismatch, NotFound, SemconmfError
from .segment import (
    SegmenterPrompt,
    activation_mask,
    bilinear_resize,
    classify_sounding_factor,
    make_segmenter,
)
from .solver import SolverConfig, decompose, decompose_sequence

ENV_THREADS = "SEMCONMF_THREADS"


def save_grayscale_png(path, values) -> None:
    arr = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path)


def _dump_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _solver_config_from_args(args) -> SolverConfig:
    return SolverConfig(
        K=args.K,
        beta_p=args.beta_p,
        beta_temp=args.beta_temp,
        learning_rate=args.lr,
        iterations=args.iters,
        seed=args.seed,
        penalty_kind=args.penalty,
        min_mode=args.min_mode,
        component_mode=args.component_mode,
        temperature=args.temperature,
    )


def _load_frame(frame, spatial_dims):
    X_image = tensorio.clamp_nonneg(tensorio.read_tensor(frame["image_features_path"]))
    X_audio = tensorio.clamp_nonneg(tensorio.read_tensor(frame["audio_features_path"]))
    h, w = spatial_dims
    if X_image.ndim != 2 or X_image.shape[0] != h * w:
        raise DimensionMismatch(
            f"image features {X_image.shape} do not fill the {h}x{w} patch grid"
        )
    if X_audio.ndim != 2:
        raise DimensionMismatch(f"audio features must be 2-D, got {X_audio.shape}")
    return X_audio, X_image


def _write_frame_outputs(sample_dir, frame_idx, result, X_image, sample, segmenter, bank):
    files = {}
    act = activation_mask(result, sample.spatial_dims)
    act_base = f"activation_mask_f{frame_idx}"
    tensorio.write_tensor(sample_dir / f"{act_base}.scnm", act.values)
    save_grayscale_png(sample_dir / f"{act_base}.png", act.values)
    files["activation_mask"] = f"{act_base}.scnm"

    prompt = SegmenterPrompt(
        factor_vectors=result.state.V_I,
        selected=result.k_star,
        sample_id=sample.sample_id,
        image_path=str(sample.frames[frame_idx]["image_features_path"]),
    )
    masks = segmenter.prompt(prompt, X_image, sample.spatial_dims)
    seg = masks[result.k_star]
    seg_base = f"segmenter_mask_f{frame_idx}"
    tensorio.write_tensor(sample_dir / f"{seg_base}.scnm", seg.values)
    save_grayscale_png(sample_dir / f"{seg_base}.png", seg.values)
    files["segmenter_mask"] = f"{seg_base}.scnm"

    state_dir = sample_dir / f"state_f{frame_idx}"
    state_dir.mkdir(exist_ok=True)
    for name in ("U_logits_A", "U_logits_I", "V_A", "V_I"):
        tensorio.write_tensor(state_dir / f"{name}.scnm", getattr(result.state, name))
    files["state_dir"] = state_dir.name

    trace_path = sample_dir / f"loss_trace_f{frame_idx}.csv"
    with open(trace_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "recon_audio", "recon_image", "penalty", "temporal", "total"])
        for i, loss in enumerate(result.loss_trace):
            writer.writerow(
                [i, repr(loss.recon_audio), repr(loss.recon_image), repr(loss.penalty),
                 repr(loss.temporal), repr(loss.total)]
            )
    files["loss_trace"] = trace_path.name

    try:
        label, score = classify_sounding_factor(result.state.V_I[result.k_star], bank)
    except Degenerate:
        label, score = None, None
    d = result.descriptors
    final = result.loss_trace[-1]
    return {
        "frame_index": frame_idx,
        "k_star": result.k_star,
        "label": label,
        "label_score": score,
        "per_factor_divergence": [float(x) for x in d.per_factor_ce],
        "descriptors_image": [[float(x) for x in row] for row in d.image_desc],
        "descriptors_audio": [[float(x) for x in row] for row in d.audio_desc],
        "degenerate_image": [bool(x) for x in d.degenerate_image],
        "degenerate_audio": [bool(x) for x in d.degenerate_audio],
        "final_loss": {
            "recon_audio": final.recon_audio,
            "recon_image": final.recon_image,
            "penalty": final.penalty,
            "temporal": final.temporal,
            "total": final.total,
        },
        "files": files,
    }


def _process_sample(sample: tensorio.ManifestSample, config: SolverConfig,
                    run_dir: str, segmenter_spec: str, threshold: float) -> dict:
    """Decompose one manifest sample and write all of its artifacts."""
    run_dir = Path(run_dir)
    sample_dir = run_dir / "samples" / sample.sample_id
    try:
        bank = tensorio.read_anchor_bank(sample.anchor_bank_path)
        frames = [_load_frame(f, sample.spatial_dims) for f in sample.frames]
        if len(frames) > 1:
            results = decompose_sequence(frames, bank, config)
        else:
            results = [decompose(frames[0][0], frames[0][1], bank, config)]
        sample_dir.mkdir(parents=True, exist_ok=True)
        with make_segmenter(segmenter_spec) as segmenter:
            frame_records = [
                _write_frame_outputs(sample_dir, t, res, frames[t][1], sample, segmenter, bank)
                for t, res in enumerate(results)
            ]
        _dump_json(
            sample_dir / "result.json",
            {
                "sample_id": sample.sample_id,
                "spatial_dims": list(sample.spatial_dims),
                "anchor_labels": list(bank.labels),
                "frames": frame_records,
            },
        )
        return {"sample_id": sample.sample_id, "status": "ok",
                "dir": str(sample_dir.relative_to(run_dir))}
    except (SemconmfError, OSError, ValueError) as exc:
        return {"sample_id": sample.sample_id, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}"}


def _worker_count(requested: int) -> int:
    cap = os.environ.get(ENV_THREADS)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def cmd_decompose(args) -> int:
    config = _solver_config_from_args(args)
    samples = tensorio.load_manifest(args.manifest)
    run_dir = Path(args.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    workers = _worker_count(args.workers)
    payloads = [(s, config, str(run_dir), args.segmenter, args.threshold) for s in samples]
    if workers == 1 or len(samples) <= 1:
        records = [_process_sample(*p) for p in payloads]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_process_sample_star, payloads))
    records.sort(key=lambda r: r["sample_id"])
    config_echo = dataclasses.asdict(config)
    config_echo.update({"segmenter": args.segmenter, "threshold": args.threshold})
    _dump_json(run_dir / "results.json", {"config": config_echo, "samples": records})
    failed = [r for r in records if r["status"] != "ok"]
    for r in failed:
        print(f"sample {r['sample_id']} failed: {r['error']}", file=sys.stderr)
    print(f"decomposed {len(records) - len(failed)}/{len(records)} samples into {run_dir}")
    return 1 if failed else 0


def _process_sample_star(payload):
    return _process_sample(*payload)


def _discover_runs(results_root: Path) -> list[Path]:
    if (results_root / "results.json").exists():
        return [results_root]
    runs = sorted(p.parent for p in results_root.glob("*/results.json"))
    if not runs:
        raise NotFound(f"no results.json under {results_root}")
    return runs


def _score_run(run_dir: Path, manifest_samples, beta_sq: float, threshold: float):
    listing = json.loads((run_dir / "results.json").read_text(encoding="utf-8"))
    by_id = {s.sample_id: s for s in manifest_samples}
    scores = {"activation": [], "segmenter": []}
    semantic = {"activation": metrics.SemanticScorer(), "segmenter": metrics.SemanticScorer()}
    semantic_used = False
    for record in listing["samples"]:
        if record["status"] != "ok":
            continue
        sample = by_id.get(record["sample_id"])
        if sample is None:
            print(f"warning: {record['sample_id']} not in manifest, skipped", file=sys.stderr)
            continue
        if sample.ground_truth_mask_path is None or not Path(sample.ground_truth_mask_path).exists():
            print(f"warning: {record['sample_id']} has no ground truth, excluded", file=sys.stderr)
            continue
        gt = tensorio.read_tensor(sample.ground_truth_mask_path) >= 0.5
        sample_dir = run_dir / record["dir"]
        result = json.loads((sample_dir / "result.json").read_text(encoding="utf-8"))
        for kind in ("activation", "segmenter"):
            frame_scores = []
            for frame in result["frames"]:
                pred = tensorio.read_tensor(sample_dir / frame["files"][f"{kind}_mask"])
                pred = np.asarray(pred, dtype=np.float64)
                if pred.shape != gt.shape:
                    pred = np.clip(bilinear_resize(pred, gt.shape), 0.0, 1.0)
                frame_scores.append(metrics.score_sample(pred, gt, beta_sq, threshold))
                if sample.gt_class_label and frame["label"] is not None:
                    semantic[kind].add(pred >= threshold, frame["label"], gt, sample.gt_class_label)
                    semantic_used = True
            merged = {
                name: float(np.mean([fs[name] for fs in frame_scores]))
                for name in ("mask_iou", "mean_iou", "f_score", "m_ap")
            }
            merged["sample_id"] = record["sample_id"]
            scores[kind].append(merged)
    out = {}
    for kind in ("activation", "segmenter"):
        report = metrics.aggregate_samples(scores[kind])
        if semantic_used:
            report.per_class_iou = semantic[kind].per_class_iou()
            report.class_mean_iou = semantic[kind].class_mean_iou()
        out[kind] = report
    return out


_METRIC_NAMES = ("mask_iou", "mean_iou", "f_score", "m_ap", "class_mean_iou")


def cmd_eval(args) -> int:
    manifest_samples = tensorio.load_manifest(args.manifest)
    results_root = Path(args.results)
    runs = _discover_runs(results_root)
    per_run = [_score_run(run, manifest_samples, args.beta_sq, args.threshold) for run in runs]

    summary = {}
    for kind in ("activation", "segmenter"):
        summary[kind] = {}
        for name in _METRIC_NAMES:
            values = [getattr(r[kind], name) for r in per_run]
            if any(v is None for v in values):
                continue
            summary[kind][name] = {
                "mean": float(np.mean(values)),
                "std": float(np.std(values)),
                "runs": [float(v) for v in values],
            }

    n_scored = sum(len(r["activation"].per_sample) for r in per_run)
    report = {
        "runs": len(runs),
        "samples_scored": n_scored,
        "metrics": summary,
    }
    _dump_json(results_root / "eval_report.json", report)
    with open(results_root / "eval_report.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mask_kind", "metric", "mean", "std", "n_runs"])
        for kind, block in summary.items():
            for name, cell in block.items():
                writer.writerow([kind, name, repr(cell["mean"]), repr(cell["std"]), len(runs)])

    print(f"runs: {len(runs)}  samples scored: {n_scored}")
    header = f"{'metric':<16}{'activation':>24}{'segmenter':>24}"
    print(header)
    for name in _METRIC_NAMES:
        if name not in summary["activation"] and name not in summary["segmenter"]:
            continue
        row = f"{name:<16}"
        for kind in ("activation", "segmenter"):
            cell = summary[kind].get(name)
            if cell is None:
                row += f"{'-':>24}"
            elif len(runs) > 1:
                row += f"{cell['mean']:>16.4f} ± {cell['std']:<6.4f}"
            else:
                row += f"{cell['mean']:>24.4f}"
        print(row)
    return 0


def cmd_inspect(args) -> int:
    results_root = Path(args.results)
    runs = _discover_runs(results_root)
    sample_dir = None
    for run in runs:
        candidate = run / "samples" / args.sample
        if candidate.exists():
            sample_dir = candidate
            break
    if sample_dir is None:
        raise NotFound(f"sample {args.sample!r} not found under {results_root}")
    result_path = sample_dir / "result.json"
    if not result_path.exists():
        raise NotFound(f"{result_path} is missing")
    result = json.loads(result_path.read_text(encoding="utf-8"))
    h, w = result["spatial_dims"]
    labels = result["anchor_labels"]
    out_dir = sample_dir / "inspect"
    out_dir.mkdir(exist_ok=True)
    for frame in result["frames"]:
        t = frame["frame_index"]
        state_dir = sample_dir / frame["files"]["state_dir"]
        logits_path = state_dir / "U_logits_I.scnm"
        if not logits_path.exists():
            raise NotFound(f"partial result: {logits_path} is missing")
        logits = tensorio.read_tensor(logits_path).astype(np.float64)
        activations = 1.0 / (1.0 + np.exp(-logits))
        for k in range(activations.shape[1]):
            heat = activations[:, k].reshape(h, w)
            scale = max(1, 256 // max(h, w))
            img = Image.fromarray(np.round(heat * 255.0).astype(np.uint8), mode="L")
            img = img.resize((w * scale, h * scale), resample=Image.NEAREST)
            img.save(out_dir / f"factor{k}_f{t}.png")
        with open(out_dir / f"descriptors_f{t}.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["factor", "divergence", "is_sounding"]
                + [f"image_cos_{l}" for l in labels]
                + [f"audio_cos_{l}" for l in labels]
            )
            for k in range(activations.shape[1]):
                writer.writerow(
                    [k, repr(frame["per_factor_divergence"][k]), int(k == frame["k_star"])]
                    + [repr(x) for x in frame["descriptors_image"][k]]
                    + [repr(x) for x in frame["descriptors_audio"][k]]
                )
    print(f"wrote factor heatmaps and descriptor tables to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semconmf",
        description="Joint audio-visual factorization, segmentation, and scoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    dec = sub.add_parser("decompose", help="decompose every sample of a manifest")
    dec.add_argument("--manifest", required=True)
    dec.add_argument("--out", required=True)
    dec.add_argument("--K", type=int, default=8)
    dec.add_argument("--beta-p", dest="beta_p", type=float, default=125.0)
    dec.add_argument("--beta-temp", dest="beta_temp", type=float, default=1.0)
    dec.add_argument("--iters", type=int, default=1800)
    dec.add_argument("--lr", type=float, default=0.25)
    dec.add_argument("--seed", type=int, default=0)
    dec.add_argument("--segmenter", default="stub", help="stub or external:CMD")
    dec.add_argument("--penalty", choices=["ce", "kl"], default="ce")
    dec.add_argument("--min-mode", dest="min_mode", choices=["min", "mean"], default="min")
    dec.add_argument(
        "--component-mode", dest="component_mode",
        choices=["softmask", "factorrow"], default="softmask",
    )
    dec.add_argument("--temperature", type=float, default=1.0)
    dec.add_argument("--threshold", type=float, default=0.5)
    dec.add_argument("--workers", type=int, default=1)
    dec.set_defaults(func=cmd_decompose)

    ev = sub.add_parser("eval", help="score one or more decompose runs")
    ev.add_argument("--results", required=True)
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--beta-sq", dest="beta_sq", type=float, default=0.3)
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.set_defaults(func=cmd_eval)

    ins = sub.add_parser("inspect", help="dump per-factor heatmaps and descriptors")
    ins.add_argument("--results", required=True)
    ins.add_argument("--sample", required=True)
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SemconmfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
