import numpy as np
import pytest
from sklearn.base import clone

from semconmf.estimator import SemanticCoFactorization
from semconmf.solver import SolverConfig, decompose
from semconmf.synthetic import make_planted_sample
from semconmf.tensorio import clamp_nonneg


@pytest.fixture(scope="module")
def planted():
    s = make_planted_sample(8)
    return clamp_nonneg(s.X_audio), clamp_nonneg(s.X_image), s


def _fast_estimator(bank, **kw):
    defaults = dict(anchor_bank=bank, n_factors=4, n_iter=120, random_state=3,
                    temporal_weight=0.0)
    defaults.update(kw)
    return SemanticCoFactorization(**defaults)


def test_get_set_params_round_trip(planted):
    _, _, s = planted
    est = _fast_estimator(s.bank, penalty_weight=10.0)
    params = est.get_params()
    assert params["n_factors"] == 4
    assert params["penalty_weight"] == 10.0
    est.set_params(penalty_weight=20.0)
    assert est.penalty_weight == 20.0
    cloned = clone(est)
    assert cloned.get_params()["penalty_weight"] == 20.0


def test_fit_exposes_factorization(planted):
    X_a, X_i, s = planted
    est = _fast_estimator(s.bank).fit(X_i, X_a)
    hw, c_i = X_i.shape
    nt, c_a = X_a.shape
    assert est.image_activations_.shape == (hw, 4)
    assert est.audio_activations_.shape == (nt, 4)
    assert est.image_factors_.shape == (4, c_i)
    assert est.audio_factors_.shape == (4, c_a)
    assert 0 <= est.k_star_ < 4
    assert len(est.loss_trace_) == 120
    assert est.n_features_in_ == c_i


def test_fit_matches_direct_solver_call(planted):
    X_a, X_i, s = planted
    est = _fast_estimator(s.bank).fit(X_i, X_a)
    cfg = SolverConfig(K=4, beta_p=125.0, beta_temp=0.0, learning_rate=0.25,
                       iterations=120, seed=3)
    direct = decompose(X_a, X_i, s.bank, cfg)
    assert est.k_star_ == direct.k_star
    assert np.array_equal(est.image_activations_, direct.state.activations_image)
    assert np.array_equal(est.audio_factors_, direct.state.V_A)


def test_transform_and_predict(planted):
    X_a, X_i, s = planted
    est = _fast_estimator(s.bank).fit(X_i, X_a)
    fitted = est.transform()
    assert fitted.shape == (X_i.shape[0], 4)
    encoded = est.transform(X_i)
    assert encoded.shape == fitted.shape
    assert (encoded > 0).all() and (encoded < 1).all()
    labels = est.predict()
    assert labels.shape == (X_i.shape[0],)
    assert set(labels) <= set(range(4))
    # deterministic re-encoding
    assert np.array_equal(encoded, est.transform(X_i))


def test_sounding_mask_and_label(planted):
    X_a, X_i, s = planted
    est = _fast_estimator(s.bank, n_factors=8, n_iter=400).fit(X_i, X_a)
    mask = est.sounding_mask(s.spatial_dims)
    assert mask.values.shape == s.spatial_dims
    label, score = est.predict_label()
    assert label == s.shared_label
    assert 0.0 < score <= 1.0


def test_requires_bank_and_nonnegative_inputs(planted):
    X_a, X_i, s = planted
    with pytest.raises(ValueError):
        SemanticCoFactorization().fit(X_i, X_a)
    est = _fast_estimator(s.bank)
    with pytest.raises(ValueError):
        est.fit(X_i - 10.0, X_a)
    with pytest.raises(Exception):
        est.transform()  # not fitted


def test_transform_checks_feature_width(planted):
    X_a, X_i, s = planted
    est = _fast_estimator(s.bank).fit(X_i, X_a)
    with pytest.raises(ValueError):
        est.transform(X_i[:, :-1])
