"""Inference-time optimization loops over one frame or a frame sequence.

Plain full-batch gradient descent with a fixed iteration count: every
iteration evaluates components, descriptors, and the total loss, then
updates all four matrices simultaneously from gradients of that same
evaluation and projects the factor matrices back onto the non-negative
orthant. No momentum, no adaptivity, no early stopping; results are
deterministic for a fixed seed and thread count.

Two reduced modes are provided as oracles: :func:`nmf_single` optimizes
one modality alone, and :func:`conmf_shared` ties both modalities to a
single shared activation matrix. A joint run with penalty and temporal
weights at zero must match per-modality single runs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DivergenceError, InvalidInput
from .nmfcore import (
    DecompositionState,
    Gradients,
    LossBreakdown,
    SemanticsContext,
    _recon_value_and_grads,
    evaluate,
    init_single,
    init_state,
    sigmoid,
    with_temporal,
)
from .semantics import AnchorBank, DescriptorSet, evaluate_penalty


@dataclass(frozen=True)
class SolverConfig:
    """Hyperparameters of the decomposition.

    Defaults follow the reference operating point: eight factors,
    penalty weight 125, 1800 steps at learning rate 0.25, temporal
    weight 1 (set ``beta_temp=0`` for multi-source material).
    """

    K: int = 8
    beta_p: float = 125.0
    beta_temp: float = 1.0
    learning_rate: float = 0.25
    iterations: int = 1800
    seed: int = 0
    penalty_kind: str = "ce"
    min_mode: str = "min"
    component_mode: str = "softmask"
    temperature: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInput("iterations must be >= 1")
        if self.learning_rate <= 0:
            raise InvalidInput("learning_rate must be > 0")
        if self.beta_p < 0:
            raise InvalidInput("beta_p must be >= 0")
        if self.beta_temp < 0:
            raise InvalidInput("beta_temp must be >= 0")
        if self.K < 1:
            raise InvalidInput("K must be >= 1")

    def semantics_context(self, bank: AnchorBank) -> SemanticsContext:
        return SemanticsContext(
            bank=bank,
            penalty_weight=self.beta_p,
            penalty_kind=self.penalty_kind,
            min_mode=self.min_mode,
            component_mode=self.component_mode,
            temperature=self.temperature,
        )


@dataclass
class DecompositionResult:
    """Converged state with its selection, descriptors, and loss history."""

    state: DecompositionState
    k_star: int
    loss_trace: list[LossBreakdown]
    descriptors: DescriptorSet
    frame_index: int = 0

    @property
    def sounding_image_factor(self) -> np.ndarray:
        return self.state.V_I[self.k_star]

    @property
    def sounding_audio_factor(self) -> np.ndarray:
        return self.state.V_A[self.k_star]


def _validated_features(X, name) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidInput(f"{name} must be a 2-D matrix, got ndim={X.ndim}")
    if not np.isfinite(X).all():
        raise InvalidInput(f"{name} contains non-finite entries")
    if (X < 0).any():
        raise InvalidInput(f"{name} has negative entries; apply clamp_nonneg first")
    return X


def _final_descriptors(state, X_audio, X_image, ctx) -> DescriptorSet:
    pen = evaluate_penalty(
        sigmoid(state.U_logits_A),
        sigmoid(state.U_logits_I),
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
    return pen.descriptors


def _step(state: DecompositionState, grads: Gradients, lr: float) -> None:
    state.U_logits_A -= lr * grads.U_logits_A
    state.U_logits_I -= lr * grads.U_logits_I
    state.V_A = np.maximum(state.V_A - lr * grads.V_A, 0.0)
    state.V_I = np.maximum(state.V_I - lr * grads.V_I, 0.0)


def decompose(X_audio, X_image, bank: AnchorBank, config: SolverConfig) -> DecompositionResult:
    """Jointly factorize one audio/image feature pair.

    Runs exactly ``config.iterations`` gradient steps. The loss trace
    holds the breakdown evaluated at the state each step started from;
    descriptors and the sounding factor are re-derived from the final
    state so they stay consistent with what the caller receives.

    Raises :class:`DivergenceError` with the iteration index if the loss
    stops being finite.
    """
    X_audio = _validated_features(X_audio, "X_audio")
    X_image = _validated_features(X_image, "X_image")
    ctx = config.semantics_context(bank)
    state = init_state(
        X_audio.shape[0], X_image.shape[0], X_audio.shape[1], X_image.shape[1],
        config.K, config.seed,
    )
    trace: list[LossBreakdown] = []
    for it in range(config.iterations):
        loss, grads, _ = evaluate(state, X_audio, X_image, ctx)
        if not loss.is_finite():
            raise DivergenceError(it)
        trace.append(loss)
        _step(state, grads, config.learning_rate)
    descriptors = _final_descriptors(state, X_audio, X_image, ctx)
    return DecompositionResult(
        state=state,
        k_star=descriptors.k_star,
        loss_trace=trace,
        descriptors=descriptors,
    )


def _cosine_and_grads(a, b):
    """cos(a, b) plus gradients for both vectors; zero-norm pairs contribute nothing."""
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0, np.zeros_like(a), np.zeros_like(b)
    cos = float(a @ b / (na * nb))
    grad_a = (b / nb - cos * a / na) / na
    grad_b = (a / na - cos * b / nb) / nb
    return cos, grad_a, grad_b


def _sequence_eval(states, pairs, ctx, beta_temp):
    """One joint evaluation of a frame sequence.

    Returns per-frame (loss, grads, descriptors) triples with the
    temporal coupling gradients already folded into the V gradients,
    plus the temporal term's value. The sounding index of each frame is
    taken from this evaluation's descriptors, and the coupling gradient
    treats those indices as fixed (subgradient through the argmin).
    """
    evals = [evaluate(states[t], pairs[t][0], pairs[t][1], ctx) for t in range(len(states))]
    if beta_temp == 0.0 or len(states) < 2:
        return evals, 0.0
    k_stars = [e[2].k_star for e in evals]
    cos_sum = 0.0
    for t in range(len(states) - 1):
        for v_attr in ("V_I", "V_A"):
            a = getattr(states[t], v_attr)[k_stars[t]]
            b = getattr(states[t + 1], v_attr)[k_stars[t + 1]]
            cos, grad_a, grad_b = _cosine_and_grads(a, b)
            cos_sum += cos
            getattr(evals[t][1], v_attr)[k_stars[t]] -= beta_temp * grad_a
            getattr(evals[t + 1][1], v_attr)[k_stars[t + 1]] -= beta_temp * grad_b
    return evals, -beta_temp * cos_sum


def decompose_sequence(
    frames, bank: AnchorBank, config: SolverConfig
) -> list[DecompositionResult]:
    """Jointly factorize a sequence of (X_audio, X_image) frame pairs.

    All frames are optimized together. With ``beta_temp > 0`` and at
    least two frames, a consistency term rewards cosine alignment of the
    sounding factor rows of consecutive frames, in both modalities. Each
    frame's sounding index is re-evaluated every iteration.

    Frame t draws its initialization from ``config.seed + t``, so with
    ``beta_temp=0`` the output matches independent :func:`decompose`
    calls seeded the same way, iterate for iterate.
    """
    pairs = [
        (_validated_features(xa, f"frame {t} audio"), _validated_features(xi, f"frame {t} image"))
        for t, (xa, xi) in enumerate(frames)
    ]
    if not pairs:
        raise InvalidInput("frame sequence is empty")
    ctx = config.semantics_context(bank)
    states = [
        init_state(xa.shape[0], xi.shape[0], xa.shape[1], xi.shape[1], config.K, config.seed + t)
        for t, (xa, xi) in enumerate(pairs)
    ]
    T = len(states)
    traces: list[list[LossBreakdown]] = [[] for _ in range(T)]
    couple = config.beta_temp != 0.0 and T >= 2

    for it in range(config.iterations):
        evals, temporal = _sequence_eval(states, pairs, ctx, config.beta_temp)
        if not np.isfinite(temporal):
            raise DivergenceError(it)
        for t, (loss, grads, _) in enumerate(evals):
            if not loss.is_finite():
                raise DivergenceError(it)
            traces[t].append(with_temporal(loss, temporal) if couple else loss)
            _step(states[t], grads, config.learning_rate)

    results = []
    for t in range(T):
        descriptors = _final_descriptors(states[t], pairs[t][0], pairs[t][1], ctx)
        results.append(
            DecompositionResult(
                state=states[t],
                k_star=descriptors.k_star,
                loss_trace=traces[t],
                descriptors=descriptors,
                frame_index=t,
            )
        )
    return results


@dataclass
class SingleResult:
    """Outcome of a one-modality factorization (oracle mode)."""

    U_logits: np.ndarray
    V: np.ndarray
    recon_trace: list[float] = field(default_factory=list)

    @property
    def activations(self) -> np.ndarray:
        return sigmoid(self.U_logits)


def nmf_single(X, K, learning_rate, iterations, seed, modality: str) -> SingleResult:
    """Factorize one matrix alone: min over (U_logits, V) of the mean
    squared residual of ``X - sigmoid(U_logits) @ V`` with V projected
    non-negative.

    Draws its matrices from the same per-matrix seed streams as a joint
    run, so a joint run with both coupling weights at zero reproduces
    two of these exactly.
    """
    X = _validated_features(X, "X")
    logits, V = init_single(X.shape[0], X.shape[1], K, seed, modality)
    trace = []
    for it in range(iterations):
        U = sigmoid(logits)
        value, grad_u, grad_v = _recon_value_and_grads(X, U, V)
        if not np.isfinite(value):
            raise DivergenceError(it)
        trace.append(value)
        logits -= learning_rate * (grad_u * U * (1.0 - U))
        V = np.maximum(V - learning_rate * grad_v, 0.0)
    return SingleResult(U_logits=logits, V=V, recon_trace=trace)


@dataclass
class SharedResult:
    """Outcome of a shared-activation co-factorization (oracle mode)."""

    U_logits: np.ndarray
    V_1: np.ndarray
    V_2: np.ndarray
    recon_trace: list[float] = field(default_factory=list)

    @property
    def activations(self) -> np.ndarray:
        return sigmoid(self.U_logits)


def conmf_shared(X_1, X_2, K, learning_rate, iterations, seed) -> SharedResult:
    """Co-factorize two views through one shared activation matrix.

    Both views must have the same number of rows; the shared activations
    receive the summed reconstruction gradients of both views.
    """
    X_1 = _validated_features(X_1, "X_1")
    X_2 = _validated_features(X_2, "X_2")
    if X_1.shape[0] != X_2.shape[0]:
        raise DimensionMismatch(
            f"shared activations need equal row counts, got {X_1.shape[0]} and {X_2.shape[0]}"
        )
    seq_u, _, seq_v1, seq_v2 = np.random.SeedSequence(seed).spawn(4)
    logits = np.random.default_rng(seq_u).normal(0.0, 0.1, size=(X_1.shape[0], K))
    V_1 = np.maximum(np.random.default_rng(seq_v1).normal(0.0, 0.1, size=(K, X_1.shape[1])), 0.0)
    V_2 = np.maximum(np.random.default_rng(seq_v2).normal(0.0, 0.1, size=(K, X_2.shape[1])), 0.0)
    trace = []
    for it in range(iterations):
        U = sigmoid(logits)
        val_1, grad_u1, grad_v1 = _recon_value_and_grads(X_1, U, V_1)
        val_2, grad_u2, grad_v2 = _recon_value_and_grads(X_2, U, V_2)
        total = val_1 + val_2
        if not np.isfinite(total):
            raise DivergenceError(it)
        trace.append(total)
        logits -= learning_rate * ((grad_u1 + grad_u2) * U * (1.0 - U))
        V_1 = np.maximum(V_1 - learning_rate * grad_v1, 0.0)
        V_2 = np.maximum(V_2 - learning_rate * grad_v2, 0.0)
    return SharedResult(U_logits=logits, V_1=V_1, V_2=V_2, recon_trace=trace)
