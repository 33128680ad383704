"""Synthetic planted fixtures with known ground truth.

Samples are generated from the model the decomposition is meant to
recover: anchors occupy disjoint channel blocks, the image carries two
spatial blobs (one concept each), and the audio carries the concept of
the first blob plus a distractor. The first blob is therefore the only
cross-modally shared concept, and its mask is the ground truth.

Used as the recovery oracle in tests and as a self-contained demo
dataset for the CLI (no pretrained encoders required).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .semantics import AnchorBank

DEFAULT_LABELS = ("dog", "piano", "water", "engine")


@dataclass
class PlantedSample:
    """One synthetic audio/image pair and everything planted into it."""

    X_audio: np.ndarray
    X_image: np.ndarray
    bank: AnchorBank
    gt_mask: np.ndarray
    spatial_dims: tuple[int, int]
    shared_concept: int
    visual_concept: int
    audio_concept: int

    @property
    def shared_label(self) -> str:
        return self.bank.labels[self.shared_concept]


def make_anchor_bank(rng, labels=DEFAULT_LABELS, C_I: int = 24, C_A: int = 20) -> AnchorBank:
    """Anchors on disjoint channel blocks, so distinct words are orthogonal."""
    J = len(labels)
    if C_I % J or C_A % J:
        raise ValueError("channel counts must be divisible by the number of labels")
    image = np.zeros((J, C_I))
    audio = np.zeros((J, C_A))
    for j in range(J):
        wi = C_I // J
        wa = C_A // J
        image[j, j * wi:(j + 1) * wi] = rng.uniform(0.5, 1.5, size=wi)
        audio[j, j * wa:(j + 1) * wa] = rng.uniform(0.5, 1.5, size=wa)
    return AnchorBank(labels=list(labels), image_anchors=image, audio_anchors=audio)


def _place_blob(rng, grid, blob, col_range):
    """Random blob position with its columns inside [col_range)."""
    h, w = grid
    bh, bw = blob
    lo, hi = col_range
    if hi - lo < bw or h < bh:
        raise ValueError(f"blob {blob} does not fit a {h}x{hi - lo} region")
    top = rng.integers(0, h - bh + 1)
    left = rng.integers(lo, hi - bw + 1)
    mask = np.zeros(grid, dtype=bool)
    mask[top:top + bh, left:left + bw] = True
    return mask


def make_planted_sample(
    seed: int,
    grid: tuple[int, int] = (10, 10),
    blob: tuple[int, int] = (4, 4),
    n_audio_tokens: int = 12,
    labels=DEFAULT_LABELS,
    C_I: int = 24,
    C_A: int = 20,
    noise: float = 0.03,
    jitter: float = 0.0,
) -> PlantedSample:
    """Build one sample; ``jitter`` perturbs gains for frame sequences."""
    rng = np.random.default_rng(seed)
    bank = make_anchor_bank(rng, labels, C_I, C_A)
    concepts = rng.permutation(len(labels))
    shared, visual, audio_only = int(concepts[0]), int(concepts[1]), int(concepts[2])

    # disjoint column halves guarantee the blobs never overlap
    h, w = grid
    halves = [(0, w // 2), (w // 2, w)]
    if rng.random() < 0.5:
        halves.reverse()
    blob1 = _place_blob(rng, grid, blob, halves[0])
    blob2 = _place_blob(rng, grid, blob, halves[1])

    X_image = rng.normal(0.0, noise, size=(h * w, C_I))
    gains1 = rng.uniform(0.8, 1.2, size=int(blob1.sum())) * (1.0 + jitter * rng.normal())
    gains2 = rng.uniform(0.8, 1.2, size=int(blob2.sum())) * (1.0 + jitter * rng.normal())
    X_image[blob1.ravel()] += np.outer(gains1, bank.image_anchors[shared])
    X_image[blob2.ravel()] += np.outer(gains2, bank.image_anchors[visual])

    X_audio = rng.normal(0.0, noise, size=(n_audio_tokens, C_A))
    n_shared = max(2, (2 * n_audio_tokens) // 3)
    gains_a = rng.uniform(0.8, 1.2, size=n_shared) * (1.0 + jitter * rng.normal())
    gains_d = rng.uniform(0.8, 1.2, size=n_audio_tokens - n_shared)
    X_audio[:n_shared] += np.outer(gains_a, bank.audio_anchors[shared])
    X_audio[n_shared:] += np.outer(gains_d, bank.audio_anchors[audio_only])

    return PlantedSample(
        X_audio=X_audio,
        X_image=X_image,
        bank=bank,
        gt_mask=blob1,
        spatial_dims=grid,
        shared_concept=shared,
        visual_concept=visual,
        audio_concept=audio_only,
    )


def write_planted_dataset(
    out_dir,
    n_samples: int,
    seed: int = 0,
    frames_per_sample: int = 1,
    **sample_kwargs,
) -> Path:
    """Materialize planted samples as tensor files plus a manifest.

    Every sample gets its own anchor bank file; features are stored
    exactly as generated (noise keeps a few negative entries, which the
    loader is expected to clamp). Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n_samples):
        sample_id = f"planted{i:03d}"
        sample_dir = out_dir / sample_id
        sample_dir.mkdir(exist_ok=True)
        frames = []
        base_seed = seed + 1000 * i
        for t in range(frames_per_sample):
            sample = make_planted_sample(base_seed, jitter=0.05 * t, **sample_kwargs)
            img_path = sample_dir / f"image_f{t}.scnm"
            aud_path = sample_dir / f"audio_f{t}.scnm"
            tensorio.write_tensor(img_path, sample.X_image)
            tensorio.write_tensor(aud_path, sample.X_audio)
            frames.append(
                {
                    "image_features_path": str(img_path.relative_to(out_dir)),
                    "audio_features_path": str(aud_path.relative_to(out_dir)),
                }
            )
        bank_path = sample_dir / "anchors.json"
        tensorio.write_anchor_bank(bank_path, sample.bank)
        gt_path = sample_dir / "gt_mask.scnm"
        tensorio.write_tensor(gt_path, sample.gt_mask.astype(np.float32))
        entries.append(
            {
                "sample_id": sample_id,
                "anchor_bank_path": str(bank_path.relative_to(out_dir)),
                "spatial_dims": list(sample.spatial_dims),
                "frames": frames,
                "ground_truth_mask_path": str(gt_path.relative_to(out_dir)),
                "gt_class_label": sample.shared_label,
            }
        )
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps({"samples": entries}, indent=2), encoding="utf-8")
    return manifest_path
