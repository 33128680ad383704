import numpy as np
import pytest

from semconmf.errors import DimensionMismatch, DivergenceError, InvalidInput
from semconmf.metrics import mask_iou
from semconmf.segment import activation_mask, binarize
from semconmf.semantics import (
    descriptor_cross_entropy,
    semantic_components,
    semantic_descriptor,
)
from semconmf.solver import (
    SolverConfig,
    conmf_shared,
    decompose,
    decompose_sequence,
    nmf_single,
)
from semconmf.synthetic import make_planted_sample
from semconmf.tensorio import clamp_nonneg

from .conftest import rank_one_pair


def _planted_inputs(seed, **kwargs):
    s = make_planted_sample(seed, **kwargs)
    return clamp_nonneg(s.X_audio), clamp_nonneg(s.X_image), s


def test_config_validation():
    with pytest.raises(InvalidInput):
        SolverConfig(iterations=0)
    with pytest.raises(InvalidInput):
        SolverConfig(learning_rate=0.0)
    with pytest.raises(InvalidInput):
        SolverConfig(beta_p=-1.0)
    with pytest.raises(InvalidInput):
        SolverConfig(beta_temp=-0.5)


def test_config_defaults_follow_reference_operating_point():
    cfg = SolverConfig()
    assert cfg.K == 8
    assert cfg.beta_p == 125.0
    assert cfg.beta_temp == 1.0
    assert cfg.learning_rate == 0.25
    assert cfg.iterations == 1800
    assert cfg.penalty_kind == "ce"
    assert cfg.min_mode == "min"
    assert cfg.component_mode == "softmask"


def test_decompose_rejects_negative_features(rng, small_bank):
    X_a = rng.normal(size=(6, 5))  # has negatives
    X_i = rng.uniform(0, 1, (9, 7))
    with pytest.raises(InvalidInput):
        decompose(X_a, X_i, small_bank, SolverConfig(K=2, iterations=2))


def test_decompose_is_deterministic():
    X_a, X_i, s = _planted_inputs(0)
    cfg = SolverConfig(K=3, iterations=40, seed=5, beta_temp=0.0)
    r1 = decompose(X_a, X_i, s.bank, cfg)
    r2 = decompose(X_a, X_i, s.bank, cfg)
    for name in ("U_logits_A", "U_logits_I", "V_A", "V_I"):
        assert np.array_equal(getattr(r1.state, name), getattr(r2.state, name))
    assert r1.k_star == r2.k_star
    assert [b.total for b in r1.loss_trace] == [b.total for b in r2.loss_trace]


def test_trace_length_and_feasibility():
    X_a, X_i, s = _planted_inputs(1)
    cfg = SolverConfig(K=3, iterations=25, seed=0, beta_temp=0.0)
    result = decompose(X_a, X_i, s.bank, cfg)
    assert len(result.loss_trace) == 25
    assert (result.state.V_A >= 0).all() and (result.state.V_I >= 0).all()
    u = result.state.activations_image
    assert (u > 0).all() and (u < 1).all()


def test_zero_penalty_equals_single_modality_runs():
    X_a, X_i, s = _planted_inputs(2)
    for iters in (1, 3, 10):
        cfg = SolverConfig(K=4, beta_p=0.0, beta_temp=0.0, iterations=iters, seed=7)
        joint = decompose(X_a, X_i, s.bank, cfg)
        audio = nmf_single(X_a, 4, cfg.learning_rate, iters, 7, "audio")
        image = nmf_single(X_i, 4, cfg.learning_rate, iters, 7, "image")
        assert np.array_equal(joint.state.U_logits_A, audio.U_logits)
        assert np.array_equal(joint.state.V_A, audio.V)
        assert np.array_equal(joint.state.U_logits_I, image.U_logits)
        assert np.array_equal(joint.state.V_I, image.V)
        # the joint trace's reconstruction terms match the single traces too
        assert [b.recon_audio for b in joint.loss_trace] == audio.recon_trace
        assert [b.recon_image for b in joint.loss_trace] == image.recon_trace


def test_rank_one_reconstruction_converges(small_bank):
    X_a, X_i = rank_one_pair(0, c_audio=5, c_image=7)
    result = decompose(X_a, X_i, small_bank, SolverConfig(K=1, seed=0, beta_temp=0.0))
    first, last = result.loss_trace[0], result.loss_trace[-1]
    assert last.recon_audio <= 1e-3 * first.recon_audio
    assert last.recon_image <= 1e-3 * first.recon_image


def test_final_kstar_consistent_with_brute_force():
    X_a, X_i, s = _planted_inputs(3)
    result = decompose(X_a, X_i, s.bank, SolverConfig(K=3, iterations=60, seed=1, beta_temp=0.0))
    comp_i = semantic_components(X_i, result.state.activations_image)
    comp_a = semantic_components(X_a, result.state.activations_audio)
    brute = [
        descriptor_cross_entropy(
            semantic_descriptor(comp_i[k], s.bank.image_anchors).values,
            semantic_descriptor(comp_a[k], s.bank.audio_anchors).values,
        )
        for k in range(3)
    ]
    assert np.allclose(result.descriptors.per_factor_ce, brute, rtol=1e-12)
    assert result.k_star == int(np.argmin(brute))
    # the selected pair beats every other factor pair by construction
    assert all(brute[result.k_star] <= brute[k] for k in range(3))


def test_divergence_raises_with_iteration_index(rng, small_bank):
    # a step size large enough to overflow float64 within a few iterations
    X_a = rng.uniform(0, 1, (6, 5)) * 100.0
    X_i = rng.uniform(0, 1, (9, 7)) * 100.0
    cfg = SolverConfig(K=2, iterations=50, seed=0, learning_rate=1e200, beta_temp=0.0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as exc:
            decompose(X_a, X_i, small_bank, cfg)
    assert 0 <= exc.value.iteration < 50


def test_planted_recovery_smoke():
    X_a, X_i, s = _planted_inputs(4)
    result = decompose(X_a, X_i, s.bank, SolverConfig(seed=4, beta_temp=0.0))
    mask = activation_mask(result, s.spatial_dims)
    assert mask_iou(binarize(mask), s.gt_mask) >= 0.8
    assert int(np.argmax(result.descriptors.image_desc[result.k_star])) == s.shared_concept
    assert result.loss_trace[-1].total < result.loss_trace[0].total


# sequences

def test_sequence_with_zero_temporal_equals_independent_runs():
    X_a, X_i, s = _planted_inputs(5)
    X_a2, X_i2, _ = _planted_inputs(5, jitter=0.04)
    frames = [(X_a, X_i), (X_a2, X_i2)]
    cfg = SolverConfig(K=3, beta_temp=0.0, iterations=15, seed=11)
    seq = decompose_sequence(frames, s.bank, cfg)
    for t, (xa, xi) in enumerate(frames):
        solo = decompose(xa, xi, s.bank, SolverConfig(K=3, beta_temp=0.0, iterations=15, seed=11 + t))
        for name in ("U_logits_A", "U_logits_I", "V_A", "V_I"):
            assert np.array_equal(getattr(seq[t].state, name), getattr(solo.state, name))
        assert seq[t].k_star == solo.k_star
        assert [b.total for b in seq[t].loss_trace] == [b.total for b in solo.loss_trace]


def _sounding_row_cosine(results):
    a = results[0].state.V_I[results[0].k_star]
    b = results[1].state.V_I[results[1].k_star]
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def test_temporal_coupling_raises_alignment():
    wins = 0
    for seed in range(3):
        X_a, X_i, s = _planted_inputs(40 + seed)
        frames = [(X_a, X_i), (X_a, X_i)]  # identical frames, different inits
        on = decompose_sequence(frames, s.bank, SolverConfig(beta_temp=1.0, iterations=400, seed=seed))
        off = decompose_sequence(frames, s.bank, SolverConfig(beta_temp=0.0, iterations=400, seed=seed))
        wins += _sounding_row_cosine(on) >= _sounding_row_cosine(off)
    assert wins == 3


def test_sequence_trace_totals_include_temporal_term():
    X_a, X_i, s = _planted_inputs(6)
    frames = [(X_a, X_i), (X_a, X_i)]
    seq = decompose_sequence(frames, s.bank, SolverConfig(beta_temp=1.0, iterations=10, seed=2))
    for result in seq:
        assert len(result.loss_trace) == 10
        for b in result.loss_trace:
            assert b.total == pytest.approx(
                b.recon_audio + b.recon_image + 125.0 * b.penalty + b.temporal, rel=1e-12
            )
    # identical frames share the sequence-wide temporal value
    assert seq[0].loss_trace[3].temporal == seq[1].loss_trace[3].temporal


def test_three_frame_planted_sequence_keeps_the_concept():
    base = make_planted_sample(77)
    frames = []
    for t in range(3):
        s = make_planted_sample(77, jitter=0.03 * t)
        frames.append((clamp_nonneg(s.X_audio), clamp_nonneg(s.X_image)))
    results = decompose_sequence(frames, base.bank, SolverConfig(iterations=600, seed=3))
    for r in results:
        assert int(np.argmax(r.descriptors.image_desc[r.k_star])) == base.shared_concept
        assert int(np.argmax(r.descriptors.audio_desc[r.k_star])) == base.shared_concept


def test_empty_sequence_rejected(small_bank):
    with pytest.raises(InvalidInput):
        decompose_sequence([], small_bank, SolverConfig())


# oracle modes

def test_single_mode_reduces_reconstruction():
    X_a, _ = rank_one_pair(3)
    out = nmf_single(X_a, 1, 0.25, 1000, 0, "audio")
    assert out.recon_trace[-1] < 1e-2 * out.recon_trace[0]
    assert (out.V >= 0).all()


def test_single_mode_rejects_unknown_modality(rng):
    with pytest.raises(InvalidInput):
        nmf_single(rng.uniform(0, 1, (4, 3)), 2, 0.1, 5, 0, "video")


def test_shared_mode_requires_equal_rows(rng):
    with pytest.raises(DimensionMismatch):
        conmf_shared(rng.uniform(0, 1, (4, 3)), rng.uniform(0, 1, (5, 3)), 2, 0.1, 5, 0)


def test_shared_mode_reduces_joint_reconstruction(rng):
    U_true = rng.uniform(0.2, 0.8, (12, 2))
    X_1 = U_true @ rng.uniform(0.3, 1.0, (2, 6))
    X_2 = U_true @ rng.uniform(0.3, 1.0, (2, 5))
    out = conmf_shared(X_1, X_2, 2, 0.25, 600, 1)
    assert out.recon_trace[-1] < 0.05 * out.recon_trace[0]
    assert (out.V_1 >= 0).all() and (out.V_2 >= 0).all()
    assert out.activations.shape == (12, 2)
