"""Self-describing binary tensor files, anchor banks, and run manifests.

The tensor container is deliberately tiny so that readers in other
languages stay auditable:

    magic      4 bytes  b"SCNM"
    version    u16      little-endian, currently 1
    dtype_code u8       0 = float32 little-endian (only accepted value)
    ndim       u8
    dims       ndim * u64 little-endian
    payload    product(dims) float32 values, row-major

Anchor banks and manifests are plain JSON documents (schemas in the
repository README). All paths inside a manifest are resolved relative
to the manifest file itself.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, EmptyBank, FormatError, InvalidInput
from .semantics import AnchorBank

MAGIC = b"SCNM"
VERSION = 1
DTYPE_FLOAT32 = 0

_HEADER = struct.Struct("<4sHBB")


def write_tensor(path, array) -> None:
    """Write ``array`` as a version-1 float32 tensor file."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, DTYPE_FLOAT32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_tensor_header(path):
    """Return (dtype_code, dims) without reading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, dtype_code, ndim = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if dtype_code != DTYPE_FLOAT32:
            raise FormatError(f"{path}: unsupported dtype code {dtype_code}")
        raw_dims = fh.read(8 * ndim)
        if len(raw_dims) < 8 * ndim:
            raise CorruptFile(f"{path}: truncated dimension list")
        dims = struct.unpack(f"<{ndim}Q", raw_dims)
    return dtype_code, dims


def read_tensor(path) -> np.ndarray:
    """Read a tensor file back into a float32 array, bit-exactly."""
    _, dims = read_tensor_header(path)
    count = 1
    for d in dims:
        count *= d
    offset = _HEADER.size + 8 * len(dims)
    with open(path, "rb") as fh:
        fh.seek(offset)
        payload = fh.read()
    if len(payload) != 4 * count:
        raise CorruptFile(
            f"{path}: payload holds {len(payload) // 4} values, dims imply {count}"
        )
    values = np.frombuffer(payload, dtype="<f4")
    return values.reshape(dims).copy()


def clamp_nonneg(matrix) -> np.ndarray:
    """Clip negative entries to zero, leaving non-negative entries intact.

    Deep-feature matrices carry negative coefficients that the
    factorization cannot represent; clipping is idempotent and keeps the
    usable structure of the representation.
    """
    arr = np.asarray(matrix, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise InvalidInput("matrix contains NaN or infinite entries")
    return np.maximum(arr, 0.0)


def write_anchor_bank(path, bank: AnchorBank) -> None:
    """Store an anchor bank as JSON (labels plus one matrix per modality)."""
    doc = {
        "labels": list(bank.labels),
        "image_anchors": [[float(x) for x in row] for row in bank.image_anchors],
        "audio_anchors": [[float(x) for x in row] for row in bank.audio_anchors],
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def read_anchor_bank(path) -> AnchorBank:
    """Load an anchor bank, clamping anchors non-negative like features."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    for key in ("labels", "image_anchors", "audio_anchors"):
        if key not in doc:
            raise CorruptFile(f"{path}: missing key {key!r}")
    labels = [str(x) for x in doc["labels"]]
    if len(labels) == 0:
        raise EmptyBank(f"{path}: bank declares zero anchors")
    image = _anchor_matrix(doc["image_anchors"], len(labels), path, "image_anchors")
    audio = _anchor_matrix(doc["audio_anchors"], len(labels), path, "audio_anchors")
    return AnchorBank(
        labels=labels,
        image_anchors=clamp_nonneg(image),
        audio_anchors=clamp_nonneg(audio),
    )


def _anchor_matrix(rows, expected_j, path, key):
    if len(rows) != expected_j:
        raise CorruptFile(f"{path}: {key} holds {len(rows)} rows, labels declare {expected_j}")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise CorruptFile(f"{path}: {key} rows have inconsistent lengths {sorted(widths)}")
    try:
        return np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise CorruptFile(f"{path}: {key} is not numeric") from exc


@dataclass
class ManifestSample:
    """One sample of a run manifest, with paths resolved to the manifest dir."""

    sample_id: str
    anchor_bank_path: Path
    spatial_dims: tuple[int, int]
    frames: list[dict] = field(default_factory=list)
    ground_truth_mask_path: Path | None = None
    gt_class_label: str | None = None

    @property
    def num_frames(self) -> int:
        return len(self.frames)


def load_manifest(path) -> list[ManifestSample]:
    """Parse a manifest JSON file into per-sample records.

    Accepts either ``{"samples": [...]}`` or a bare list. Each sample may
    list frames explicitly or use the single-frame shorthand keys
    ``image_features_path`` / ``audio_features_path``.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    entries = doc["samples"] if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise CorruptFile(f"{path}: manifest must be a list or hold a 'samples' list")
    base = path.parent
    samples = []
    for i, entry in enumerate(entries):
        samples.append(_parse_sample(entry, base, f"{path}[{i}]"))
    return samples


def _parse_sample(entry, base: Path, where: str) -> ManifestSample:
    if not isinstance(entry, dict):
        raise CorruptFile(f"{where}: sample must be an object")
    for key in ("sample_id", "anchor_bank_path", "spatial_dims"):
        if key not in entry:
            raise CorruptFile(f"{where}: missing key {key!r}")
    dims = entry["spatial_dims"]
    if len(dims) != 2 or any(int(d) < 1 for d in dims):
        raise CorruptFile(f"{where}: spatial_dims must be two positive integers")
    if "frames" in entry:
        raw_frames = entry["frames"]
    else:
        raw_frames = [
            {
                "image_features_path": entry.get("image_features_path"),
                "audio_features_path": entry.get("audio_features_path"),
            }
        ]
    frames = []
    for frame in raw_frames:
        img = frame.get("image_features_path")
        aud = frame.get("audio_features_path")
        if not img or not aud:
            raise CorruptFile(f"{where}: every frame needs image and audio feature paths")
        frames.append(
            {
                "image_features_path": base / img,
                "audio_features_path": base / aud,
            }
        )
    if len(frames) < 1:
        raise CorruptFile(f"{where}: at least one frame is required")
    gt = entry.get("ground_truth_mask_path")
    return ManifestSample(
        sample_id=str(entry["sample_id"]),
        anchor_bank_path=base / entry["anchor_bank_path"],
        spatial_dims=(int(dims[0]), int(dims[1])),
        frames=frames,
        ground_truth_mask_path=(base / gt) if gt else None,
        gt_class_label=entry.get("gt_class_label"),
    )
