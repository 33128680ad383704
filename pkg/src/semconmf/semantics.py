"""Semantic components, descriptors, and the cross-modal penalty.

Audio and image features live in unrelated embedding spaces, so factors
from the two decompositions cannot be compared directly. Each factor is
instead summarized by a *semantic component* (activation-weighted mean
of the features) and projected onto a bank of per-modality anchor
vectors via cosine similarity. The resulting descriptor vectors live in
a shared space indexed by anchor words, where a divergence between the
image and audio descriptors of the same factor is meaningful.

The penalty aligns only the single closest factor pair (minimum
divergence over factors); that factor index is the "sounding" factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, InvalidInput

PENALTY_KINDS = ("ce", "kl")
MIN_MODES = ("min", "mean")
COMPONENT_MODES = ("softmask", "factorrow")


@dataclass(frozen=True)
class AnchorBank:
    """Paired per-modality anchor vectors with their word labels.

    Row j of ``image_anchors`` and row j of ``audio_anchors`` encode the
    same word in the image and audio feature spaces respectively.
    """

    labels: list[str]
    image_anchors: np.ndarray
    audio_anchors: np.ndarray

    def __post_init__(self):
        image = np.asarray(self.image_anchors, dtype=np.float64)
        audio = np.asarray(self.audio_anchors, dtype=np.float64)
        object.__setattr__(self, "image_anchors", image)
        object.__setattr__(self, "audio_anchors", audio)
        j = len(self.labels)
        if j < 1:
            raise InvalidInput("anchor bank must hold at least one anchor")
        if image.ndim != 2 or audio.ndim != 2:
            raise InvalidInput("anchor matrices must be 2-D")
        if image.shape[0] != j or audio.shape[0] != j:
            raise DimensionMismatch(
                f"bank holds {j} labels but {image.shape[0]} image / "
                f"{audio.shape[0]} audio anchors"
            )
        if np.any(np.linalg.norm(image, axis=1) == 0.0) or np.any(
            np.linalg.norm(audio, axis=1) == 0.0
        ):
            raise InvalidInput("anchor rows must have non-zero norm")

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class DescriptorSet:
    """Descriptors of every factor in both modalities, plus the selection.

    ``per_factor_ce[k]`` is the configured divergence between the image
    and audio descriptors of factor k; ``k_star`` is its argmin (ties
    broken toward the lowest index). Degenerate flags mark factors whose
    component had zero norm, for which the descriptor is all zeros.
    """

    image_desc: np.ndarray
    audio_desc: np.ndarray
    per_factor_ce: np.ndarray
    k_star: int
    degenerate_image: np.ndarray = field(default=None)
    degenerate_audio: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate_image is None:
            self.degenerate_image = np.zeros(len(self.per_factor_ce), dtype=bool)
        if self.degenerate_audio is None:
            self.degenerate_audio = np.zeros(len(self.per_factor_ce), dtype=bool)


class Descriptor(NamedTuple):
    values: np.ndarray
    degenerate: bool


def semantic_component(X, u_k) -> np.ndarray:
    """Activation-weighted spatial/temporal average of the features.

    Returns the length-C vector ``(1/N) * sum_n X[n, :] * u_k[n]``: the
    concept extracted by one factor from one modality.
    """
    X = np.asarray(X, dtype=np.float64)
    u_k = np.asarray(u_k, dtype=np.float64)
    if u_k.shape != (X.shape[0],):
        raise DimensionMismatch(
            f"activation column of length {u_k.shape} does not match {X.shape[0]} rows"
        )
    return (u_k @ X) / X.shape[0]


def semantic_components(X, U) -> np.ndarray:
    """All K components at once: row k is ``semantic_component(X, U[:, k])``."""
    X = np.asarray(X, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    if U.shape[0] != X.shape[0]:
        raise DimensionMismatch(
            f"activations have {U.shape[0]} rows, features have {X.shape[0]}"
        )
    return (U.T @ X) / X.shape[0]


def semantic_descriptor(component, anchors) -> Descriptor:
    """Cosine of one component against every anchor row.

    A zero-norm component has no direction to compare, so the descriptor
    is all zeros and the result is flagged degenerate instead of raising;
    early iterations can transiently underflow to zero activations.
    """
    component = np.asarray(component, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if component.shape != (anchors.shape[1],):
        raise DimensionMismatch(
            f"component of length {component.shape} vs anchors of width {anchors.shape[1]}"
        )
    c_norm = np.linalg.norm(component)
    if c_norm == 0.0:
        return Descriptor(np.zeros(anchors.shape[0]), True)
    a_norms = np.linalg.norm(anchors, axis=1)
    return Descriptor((anchors @ component) / (a_norms * c_norm), False)


def _descriptor_rows(components, anchors):
    """Descriptors for all component rows; returns (K×J values, K degenerate flags)."""
    c_norms = np.linalg.norm(components, axis=1)
    degenerate = c_norms == 0.0
    a_norms = np.linalg.norm(anchors, axis=1)
    safe = np.where(degenerate, 1.0, c_norms)
    desc = (components @ anchors.T) / (safe[:, None] * a_norms[None, :])
    desc[degenerate] = 0.0
    return desc, degenerate


def _log_softmax(d, temperature):
    z = np.asarray(d, dtype=np.float64) / temperature
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


def descriptor_cross_entropy(d_image, d_audio, temperature: float = 1.0) -> float:
    """Cross-entropy between descriptor vectors, softmaxed into distributions.

    The image descriptor plays the target role: CE(softmax(d_image),
    softmax(d_audio)). Always at least the entropy of the target, with
    equality exactly when the two distributions match.
    """
    d_image = np.asarray(d_image, dtype=np.float64)
    d_audio = np.asarray(d_audio, dtype=np.float64)
    if d_image.shape != d_audio.shape:
        raise DimensionMismatch("descriptor vectors must have equal length")
    p = np.exp(_log_softmax(d_image, temperature))
    log_q = _log_softmax(d_audio, temperature)
    return float(-(p @ log_q))


def descriptor_kl(d_image, d_audio, temperature: float = 1.0) -> float:
    """KL divergence variant of the penalty: KL(softmax(d_image) || softmax(d_audio))."""
    d_image = np.asarray(d_image, dtype=np.float64)
    d_audio = np.asarray(d_audio, dtype=np.float64)
    if d_image.shape != d_audio.shape:
        raise DimensionMismatch("descriptor vectors must have equal length")
    log_p = _log_softmax(d_image, temperature)
    log_q = _log_softmax(d_audio, temperature)
    p = np.exp(log_p)
    return float(p @ (log_p - log_q))


def select_kstar(descriptors: DescriptorSet) -> int:
    """Index of the factor with minimal divergence; ties go to the lowest index."""
    return int(np.argmin(descriptors.per_factor_ce))


@dataclass
class PenaltyEval:
    """Penalty value plus its exact gradients for the active variables.

    In softmask mode the components depend on the activations only, so
    ``grad_v_*`` stay zero; in factorrow mode the roles swap.
    """

    value: float
    descriptors: DescriptorSet
    grad_u_audio: np.ndarray
    grad_u_image: np.ndarray
    grad_v_audio: np.ndarray
    grad_v_image: np.ndarray


def _divergence_and_grads(d_image, d_audio, kind, temperature):
    """Value of one factor's divergence and its gradients w.r.t. both descriptors."""
    log_p = _log_softmax(d_image, temperature)
    log_q = _log_softmax(d_audio, temperature)
    p = np.exp(log_p)
    q = np.exp(log_q)
    if kind == "ce":
        value = float(-(p @ log_q))
        g_image = p * (-log_q - value) / temperature
    else:
        value = float(p @ (log_p - log_q))
        g_image = p * (log_p - log_q - value) / temperature
    g_audio = (q - p) / temperature
    return value, g_image, g_audio


def _component_grad(g_desc, desc_row, component, anchors, degenerate):
    """Pull a descriptor gradient back onto the component vector."""
    if degenerate:
        return np.zeros_like(component)
    c_norm = np.linalg.norm(component)
    unit_anchors = anchors / np.linalg.norm(anchors, axis=1)[:, None]
    return (unit_anchors.T @ g_desc - (g_desc @ desc_row) * component / c_norm) / c_norm


def evaluate_penalty(
    U_audio,
    U_image,
    V_audio,
    V_image,
    X_audio,
    X_image,
    bank: AnchorBank,
    penalty_kind: str = "ce",
    min_mode: str = "min",
    component_mode: str = "softmask",
    temperature: float = 1.0,
) -> PenaltyEval:
    """Compute the cross-modal penalty and its gradients in one pass.

    All K factor divergences are evaluated each call. With
    ``min_mode="min"`` the value is the smallest divergence and only
    that branch carries gradient (subgradient of the min); with
    ``"mean"`` every branch contributes with weight 1/K.
    """
    if penalty_kind not in PENALTY_KINDS:
        raise InvalidInput(f"penalty_kind must be one of {PENALTY_KINDS}")
    if min_mode not in MIN_MODES:
        raise InvalidInput(f"min_mode must be one of {MIN_MODES}")
    if component_mode not in COMPONENT_MODES:
        raise InvalidInput(f"component_mode must be one of {COMPONENT_MODES}")
    if bank.audio_anchors.shape[1] != X_audio.shape[1]:
        raise DimensionMismatch(
            f"audio anchors of width {bank.audio_anchors.shape[1]} vs "
            f"features of width {X_audio.shape[1]}"
        )
    if bank.image_anchors.shape[1] != X_image.shape[1]:
        raise DimensionMismatch(
            f"image anchors of width {bank.image_anchors.shape[1]} vs "
            f"features of width {X_image.shape[1]}"
        )

    if component_mode == "softmask":
        comp_audio = semantic_components(X_audio, U_audio)
        comp_image = semantic_components(X_image, U_image)
    else:
        comp_audio = np.asarray(V_audio, dtype=np.float64)
        comp_image = np.asarray(V_image, dtype=np.float64)

    desc_image, degen_image = _descriptor_rows(comp_image, bank.image_anchors)
    desc_audio, degen_audio = _descriptor_rows(comp_audio, bank.audio_anchors)

    K = desc_image.shape[0]
    divergences = np.empty(K)
    grads_image = np.empty_like(desc_image)
    grads_audio = np.empty_like(desc_audio)
    for k in range(K):
        divergences[k], grads_image[k], grads_audio[k] = _divergence_and_grads(
            desc_image[k], desc_audio[k], penalty_kind, temperature
        )

    k_star = int(np.argmin(divergences))
    descriptors = DescriptorSet(
        image_desc=desc_image,
        audio_desc=desc_audio,
        per_factor_ce=divergences,
        k_star=k_star,
        degenerate_image=degen_image,
        degenerate_audio=degen_audio,
    )

    if min_mode == "min":
        active = [(k_star, 1.0)]
        value = float(divergences[k_star])
    else:
        active = [(k, 1.0 / K) for k in range(K)]
        value = float(divergences.mean())

    grad_u_audio = np.zeros_like(np.asarray(U_audio, dtype=np.float64))
    grad_u_image = np.zeros_like(np.asarray(U_image, dtype=np.float64))
    grad_v_audio = np.zeros_like(np.asarray(V_audio, dtype=np.float64))
    grad_v_image = np.zeros_like(np.asarray(V_image, dtype=np.float64))

    for k, weight in active:
        g_comp_image = weight * _component_grad(
            grads_image[k], desc_image[k], comp_image[k], bank.image_anchors, degen_image[k]
        )
        g_comp_audio = weight * _component_grad(
            grads_audio[k], desc_audio[k], comp_audio[k], bank.audio_anchors, degen_audio[k]
        )
        if component_mode == "softmask":
            grad_u_image[:, k] += (X_image @ g_comp_image) / X_image.shape[0]
            grad_u_audio[:, k] += (X_audio @ g_comp_audio) / X_audio.shape[0]
        else:
            grad_v_image[k] += g_comp_image
            grad_v_audio[k] += g_comp_audio

    return PenaltyEval(
        value=value,
        descriptors=descriptors,
        grad_u_audio=grad_u_audio,
        grad_u_image=grad_u_image,
        grad_v_audio=grad_v_audio,
        grad_v_image=grad_v_image,
    )


def penalty_term(state, X_audio, X_image, bank: AnchorBank, **options) -> tuple[float, int]:
    """Penalty value and sounding-factor index for a decomposition state."""
    from .nmfcore import sigmoid

    result = evaluate_penalty(
        sigmoid(state.U_logits_A),
        sigmoid(state.U_logits_I),
        state.V_A,
        state.V_I,
        X_audio,
        X_image,
        bank,
        **options,
    )
    return result.value, result.descriptors.k_star
