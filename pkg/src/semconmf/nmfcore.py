"""Decomposition state, losses, and exact gradients.

Activations are optimized through logit matrices: U = sigmoid(U_logits)
keeps every activation strictly inside (0, 1) by construction, giving a
calibrated on/off scale per token. Factor matrices V are kept
non-negative by projection after each optimizer step (handled by the
solver); this module only computes values and gradients.

The reconstruction terms of the optimized objective are per-element
means rather than raw sums of squares. This keeps their scale, and
therefore the stability window of plain gradient descent, independent
of the matrix sizes, which is what makes the default learning rate and
penalty weight usable across problem sizes. The standalone
:func:`reconstruction_loss` helper still reports the raw sum.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, InvalidInput
from .semantics import AnchorBank, DescriptorSet, evaluate_penalty

INIT_STD = 0.1


def sigmoid(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class DecompositionState:
    """Logits for both activation matrices plus both factor matrices."""

    U_logits_A: np.ndarray
    U_logits_I: np.ndarray
    V_A: np.ndarray
    V_I: np.ndarray

    @property
    def K(self) -> int:
        return self.U_logits_A.shape[1]

    @property
    def activations_audio(self) -> np.ndarray:
        return sigmoid(self.U_logits_A)

    @property
    def activations_image(self) -> np.ndarray:
        return sigmoid(self.U_logits_I)

    def copy(self) -> "DecompositionState":
        return DecompositionState(
            U_logits_A=self.U_logits_A.copy(),
            U_logits_I=self.U_logits_I.copy(),
            V_A=self.V_A.copy(),
            V_I=self.V_I.copy(),
        )


@dataclass(frozen=True)
class LossBreakdown:
    """One evaluation of the objective, split into its terms.

    ``total = recon_audio + recon_image + penalty_weight * penalty +
    temporal``. The temporal term is cosine-based and may be negative;
    every other term is non-negative.
    """

    recon_audio: float
    recon_image: float
    penalty: float
    temporal: float
    total: float

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.total))


@dataclass
class Gradients:
    """Exact gradients of the total loss for all four decision matrices."""

    U_logits_A: np.ndarray
    U_logits_I: np.ndarray
    V_A: np.ndarray
    V_I: np.ndarray


@dataclass(frozen=True)
class SemanticsContext:
    """Everything the penalty evaluation needs, bundled for the solver."""

    bank: AnchorBank
    penalty_weight: float = 125.0
    penalty_kind: str = "ce"
    min_mode: str = "min"
    component_mode: str = "softmask"
    temperature: float = 1.0


def _matrix_seeds(seed: int):
    """Four independent child streams, one per decision matrix.

    Per-matrix streams let a single-modality run reproduce exactly the
    matrices a joint run would draw for that modality, which is what the
    decoupling checks compare against.
    """
    return np.random.SeedSequence(seed).spawn(4)


def init_state(N_T, HW, C_A, C_I, K, seed) -> DecompositionState:
    """Draw a fresh state from seeded Gaussians (std 0.1).

    The small scale keeps sigmoid activations near 0.5 at the start, away
    from saturation. V matrices are clamped non-negative right after the
    draw so the state is feasible from iteration zero.
    """
    for name, value in (("N_T", N_T), ("HW", HW), ("C_A", C_A), ("C_I", C_I), ("K", K)):
        if value < 1:
            raise InvalidInput(f"{name} must be >= 1, got {value}")
    if K > min(N_T, HW):
        warnings.warn(
            f"K={K} exceeds min(N_T, HW)={min(N_T, HW)}: over-complete factorization",
            stacklevel=2,
        )
    seq_ua, seq_ui, seq_va, seq_vi = _matrix_seeds(seed)
    logits_a = np.random.default_rng(seq_ua).normal(0.0, INIT_STD, size=(N_T, K))
    logits_i = np.random.default_rng(seq_ui).normal(0.0, INIT_STD, size=(HW, K))
    v_a = np.random.default_rng(seq_va).normal(0.0, INIT_STD, size=(K, C_A))
    v_i = np.random.default_rng(seq_vi).normal(0.0, INIT_STD, size=(K, C_I))
    return DecompositionState(
        U_logits_A=logits_a,
        U_logits_I=logits_i,
        V_A=np.maximum(v_a, 0.0),
        V_I=np.maximum(v_i, 0.0),
    )


def init_single(N, C, K, seed, modality: str):
    """Logits and factors for one modality, matching the joint draw.

    ``modality`` is "audio" or "image"; the returned pair is bitwise
    identical to the corresponding matrices of :func:`init_state` called
    with the same seed.
    """
    seq_ua, seq_ui, seq_va, seq_vi = _matrix_seeds(seed)
    if modality == "audio":
        u_seq, v_seq = seq_ua, seq_va
    elif modality == "image":
        u_seq, v_seq = seq_ui, seq_vi
    else:
        raise InvalidInput(f"modality must be 'audio' or 'image', got {modality!r}")
    logits = np.random.default_rng(u_seq).normal(0.0, INIT_STD, size=(N, K))
    v = np.random.default_rng(v_seq).normal(0.0, INIT_STD, size=(K, C))
    return logits, np.maximum(v, 0.0)


def reconstruction_loss(X, U, V) -> float:
    """Raw sum of squared residuals of ``X - U @ V``.

    Zero exactly when the reconstruction is exact.
    """
    X = np.asarray(X, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape[1] != V.shape[0] or X.shape != (U.shape[0], V.shape[1]):
        raise DimensionMismatch(
            f"cannot reconstruct {X.shape} from {U.shape} @ {V.shape}"
        )
    residual = U @ V - X
    return float(np.sum(residual * residual))


def _recon_value_and_grads(X, U, V):
    """Mean-squared reconstruction term with gradients w.r.t. U and V."""
    residual = U @ V - X
    scale = 1.0 / residual.size
    value = float(np.sum(residual * residual) * scale)
    grad_u = (2.0 * scale) * (residual @ V.T)
    grad_v = (2.0 * scale) * (U.T @ residual)
    return value, grad_u, grad_v


def evaluate(
    state: DecompositionState,
    X_audio,
    X_image,
    ctx: SemanticsContext,
) -> tuple[LossBreakdown, Gradients, DescriptorSet]:
    """Single pass over the objective: loss terms, gradients, descriptors.

    The sigmoid chain rule is applied here so the returned gradients are
    with respect to the logit matrices. The temporal term is always zero
    for a single frame; sequence solving layers it on top.
    """
    U_audio = sigmoid(state.U_logits_A)
    U_image = sigmoid(state.U_logits_I)

    recon_a, grad_ua, grad_va = _recon_value_and_grads(X_audio, U_audio, state.V_A)
    recon_i, grad_ui, grad_vi = _recon_value_and_grads(X_image, U_image, state.V_I)

    pen = evaluate_penalty(
        U_audio,
        U_image,
        state.V_A,
        state.V_I,
        X_audio,
        X_image,
        ctx.bank,
        penalty_kind=ctx.penalty_kind,
        min_mode=ctx.min_mode,
        component_mode=ctx.component_mode,
        temperature=ctx.temperature,
    )

    if ctx.penalty_weight != 0.0:
        grad_ua = grad_ua + ctx.penalty_weight * pen.grad_u_audio
        grad_ui = grad_ui + ctx.penalty_weight * pen.grad_u_image
        grad_va = grad_va + ctx.penalty_weight * pen.grad_v_audio
        grad_vi = grad_vi + ctx.penalty_weight * pen.grad_v_image

    grads = Gradients(
        U_logits_A=grad_ua * U_audio * (1.0 - U_audio),
        U_logits_I=grad_ui * U_image * (1.0 - U_image),
        V_A=grad_va,
        V_I=grad_vi,
    )
    loss = LossBreakdown(
        recon_audio=recon_a,
        recon_image=recon_i,
        penalty=pen.value,
        temporal=0.0,
        total=recon_a + recon_i + ctx.penalty_weight * pen.value,
    )
    return loss, grads, pen.descriptors


def loss_gradients(state, X_audio, X_image, ctx: SemanticsContext) -> Gradients:
    """Exact gradients of the total loss for every decision matrix."""
    _, grads, _ = evaluate(state, X_audio, X_image, ctx)
    return grads


def with_temporal(loss: LossBreakdown, temporal: float) -> LossBreakdown:
    """Attach a temporal term to a per-frame breakdown, adjusting the total."""
    return replace(loss, temporal=temporal, total=loss.total + temporal)
