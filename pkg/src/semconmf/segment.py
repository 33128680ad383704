"""Masks, factor classification, and the pluggable segmenter boundary.

The sounding factor's activation column is itself a soft segmentation
over the token grid. For sharper masks an open-vocabulary segmenter can
be prompted with the factor vectors; that model runs behind a small
interface with two implementations: a deterministic in-process stub
(nearest-factor assignment, used by tests) and an adapter that speaks a
line-delimited JSON protocol to an external process.

Adapter wire protocol (UTF-8, one JSON document per line):
    request  {"sample_id": str, "K": int, "C_I": int,
              "factors": [[...] * K], "image_path": str}
    response {"masks": [[[...]] * K]}   # K arrays of H'xW' floats in [0, 1]
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, DimensionMismatch, SegmenterError

ACTIVATION = "activation"
SEGMENTER = "segmenter"


@dataclass
class SoftMask:
    """An H×W map of values in [0, 1] with its provenance.

    Activation-row masks are sigmoid outputs and stay strictly inside
    (0, 1); segmenter outputs may sit exactly on the endpoints.
    """

    values: np.ndarray
    source: str = ACTIVATION

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DimensionMismatch("mask values must be H×W")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("mask values must lie in [0, 1]")

    @property
    def shape(self):
        return self.values.shape


@dataclass
class SegmenterPrompt:
    """Factor vectors offered to a segmenter as open-vocabulary classes."""

    factor_vectors: np.ndarray
    selected: int
    sample_id: str = ""
    image_path: str = ""

    def __post_init__(self):
        self.factor_vectors = np.asarray(self.factor_vectors, dtype=np.float64)
        if self.factor_vectors.ndim != 2:
            raise DimensionMismatch("factor_vectors must be K×C")


def bilinear_resize(values, out_shape) -> np.ndarray:
    """Resize a 2-D map with corner-aligned bilinear interpolation.

    The four corners of the output reproduce the input corners exactly.
    """
    values = np.asarray(values, dtype=np.float64)
    in_h, in_w = values.shape
    out_h, out_w = out_shape
    ys = np.linspace(0.0, in_h - 1.0, out_h) if out_h > 1 else np.zeros(1)
    xs = np.linspace(0.0, in_w - 1.0, out_w) if out_w > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = values[y0][:, x0] * (1 - wx) + values[y0][:, x1] * wx
    bottom = values[y1][:, x0] * (1 - wx) + values[y1][:, x1] * wx
    return top * (1 - wy) + bottom * wy


def activation_mask(result, spatial_dims, target_size=None) -> SoftMask:
    """The sounding factor's activation column as an H×W soft mask.

    Values are exactly the entries of that column of the image
    activation matrix, reshaped row-major; no renormalization.
    ``spatial_dims`` is an (H, W) pair or a manifest sample carrying
    one. Pass ``target_size`` to additionally upsample bilinearly.
    """
    spatial_dims = getattr(spatial_dims, "spatial_dims", spatial_dims)
    h, w = spatial_dims
    column = result.state.activations_image[:, result.k_star]
    if column.shape[0] != h * w:
        raise DimensionMismatch(
            f"activation column of length {column.shape[0]} does not fill a {h}x{w} grid"
        )
    values = column.reshape(h, w)
    if target_size is not None:
        values = np.clip(bilinear_resize(values, target_size), 0.0, 1.0)
    return SoftMask(values=values, source=ACTIVATION)


def binarize(mask, threshold: float = 0.5) -> np.ndarray:
    """Threshold a soft mask; values exactly at the threshold count as 1."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie strictly inside (0, 1)")
    values = mask.values if isinstance(mask, SoftMask) else np.asarray(mask, dtype=np.float64)
    return (values >= threshold).astype(np.uint8)


class Segmenter:
    """Interface of the open-vocabulary segmentation stage.

    ``prompt`` returns one soft mask per factor; the pipeline keeps the
    mask of the selected factor as the final segmentation.
    """

    def prompt(self, prompt: SegmenterPrompt, image_features, spatial_dims) -> list[SoftMask]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StubSegmenter(Segmenter):
    """Deterministic nearest-factor segmenter for tests and dry runs.

    Each image token goes to the factor whose vector has the highest
    cosine with that token, producing one-hot masks that partition the
    token grid. Ties and zero-norm rows resolve to the lowest index.
    """

    def prompt(self, prompt: SegmenterPrompt, image_features, spatial_dims) -> list[SoftMask]:
        X = np.asarray(image_features, dtype=np.float64)
        factors = prompt.factor_vectors
        if factors.shape[1] != X.shape[1]:
            raise DimensionMismatch(
                f"factors of width {factors.shape[1]} vs features of width {X.shape[1]}"
            )
        h, w = spatial_dims
        if X.shape[0] != h * w:
            raise DimensionMismatch(
                f"{X.shape[0]} tokens do not fill a {h}x{w} grid"
            )
        x_norms = np.linalg.norm(X, axis=1)
        f_norms = np.linalg.norm(factors, axis=1)
        denom = np.outer(x_norms, f_norms)
        sims = np.divide(X @ factors.T, denom, out=np.zeros((X.shape[0], factors.shape[0])), where=denom > 0)
        assignment = np.argmax(sims, axis=1)
        masks = []
        for k in range(factors.shape[0]):
            masks.append(
                SoftMask(values=(assignment == k).astype(np.float64).reshape(h, w), source=SEGMENTER)
            )
        return masks


class ExternalSegmenter(Segmenter):
    """Adapter to a segmenter process speaking the JSON-lines protocol.

    The child process is started on first use and kept alive across
    prompts; requests are strictly serialized (one in flight).
    """

    def __init__(self, command: str):
        self.command = command
        self._proc = None
        self._lock = threading.Lock()

    def _ensure_process(self):
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                )
            except OSError as exc:
                raise SegmenterError(f"cannot start segmenter {self.command!r}: {exc}") from exc
        return self._proc

    def prompt(self, prompt: SegmenterPrompt, image_features, spatial_dims) -> list[SoftMask]:
        request = {
            "sample_id": prompt.sample_id,
            "K": int(prompt.factor_vectors.shape[0]),
            "C_I": int(prompt.factor_vectors.shape[1]),
            "factors": [[float(x) for x in row] for row in prompt.factor_vectors],
            "image_path": prompt.image_path,
        }
        with self._lock:
            proc = self._ensure_process()
            try:
                proc.stdin.write(json.dumps(request) + "\n")
                proc.stdin.flush()
                line = proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SegmenterError(f"segmenter process failed: {exc}") from exc
        if not line:
            raise SegmenterError("segmenter process closed its output stream")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SegmenterError(f"segmenter replied with invalid JSON: {exc}") from exc
        if "error" in response:
            raise SegmenterError(f"segmenter error: {response['error']}")
        masks = response.get("masks")
        if not isinstance(masks, list) or len(masks) != request["K"]:
            raise SegmenterError("segmenter response must hold one mask per factor")
        out = []
        for mask in masks:
            try:
                out.append(SoftMask(values=np.asarray(mask, dtype=np.float64), source=SEGMENTER))
            except (ValueError, DimensionMismatch) as exc:
                raise SegmenterError(f"segmenter returned a malformed mask: {exc}") from exc
        return out

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._proc = None


def make_segmenter(spec: str) -> Segmenter:
    """Build a segmenter from its CLI spelling: ``stub`` or ``external:CMD``."""
    if spec == "stub":
        return StubSegmenter()
    if spec.startswith("external:"):
        command = spec[len("external:"):]
        if not command.strip():
            raise SegmenterError("external segmenter needs a command")
        return ExternalSegmenter(command)
    raise SegmenterError(f"unknown segmenter {spec!r}")


def classify_sounding_factor(v_star, bank) -> tuple[str, float]:
    """Label the sounding factor by its closest image anchor.

    Returns the label with maximal cosine similarity and that score;
    exact ties resolve to the lowest anchor index. A zero-norm factor has
    no direction to classify and raises :class:`Degenerate`.
    """
    v = np.asarray(v_star, dtype=np.float64)
    if v.shape != (bank.image_anchors.shape[1],):
        raise DimensionMismatch(
            f"factor of length {v.shape} vs anchors of width {bank.image_anchors.shape[1]}"
        )
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise Degenerate("sounding factor has zero norm")
    anchor_norms = np.linalg.norm(bank.image_anchors, axis=1)
    sims = (bank.image_anchors @ v) / (anchor_norms * norm)
    best = int(np.argmax(sims))
    return bank.labels[best], float(sims[best])
