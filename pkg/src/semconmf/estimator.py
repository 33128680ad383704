"""Scikit-learn style front door to the joint factorization.

The decomposition is transductive (it optimizes activations for the
exact matrices it is given), so the estimator follows the manifold
learner convention: ``fit`` solves the joint problem and exposes the
factorization through attributes, ``transform`` encodes image features
against the fitted image factors, and ``predict`` assigns each image
token to its dominant factor.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_non_negative

from .nmfcore import _recon_value_and_grads, init_single, sigmoid
from .segment import SoftMask, classify_sounding_factor
from .solver import SolverConfig, decompose


def encode_activations(X, V, learning_rate, iterations, seed):
    """Activations of ``X`` against fixed factors ``V``.

    Gradient descent on fresh logits only; the factor matrix does not
    move. Mirrors the joint solver's update rule.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    logits, _ = init_single(X.shape[0], V.shape[1], V.shape[0], seed, "image")
    for _ in range(iterations):
        U = sigmoid(logits)
        _, grad_u, _ = _recon_value_and_grads(X, U, V)
        logits -= learning_rate * (grad_u * U * (1.0 - U))
    return sigmoid(logits)


class SemanticCoFactorization(BaseEstimator):
    """Joint non-negative decomposition of paired image and audio features.

    Factorizes image patch features ``X`` (HW x C_I) and audio token
    features ``Y`` (N_T x C_A) into per-factor activations and factor
    vectors, with a cross-modal penalty that aligns the semantics of the
    closest factor pair through the anchor bank. The aligned factor
    index is exposed as ``k_star_`` and its image activation column is a
    soft segmentation of the sounding region.

    Parameters
    ----------
    anchor_bank : AnchorBank
        Paired per-modality anchor vectors; required at fit time.
    n_factors : int, default=8
        Rank of both decompositions.
    penalty_weight : float, default=125.0
        Weight of the cross-modal penalty.
    temporal_weight : float, default=1.0
        Kept for config parity; single-pair fits never use it.
    learning_rate : float, default=0.25
    n_iter : int, default=1800
        Fixed number of full-batch gradient steps.
    penalty : {"ce", "kl"}, default="ce"
    min_mode : {"min", "mean"}, default="min"
    component_mode : {"softmask", "factorrow"}, default="softmask"
    temperature : float, default=1.0
        Softmax temperature applied to descriptors inside the penalty.
    random_state : int, default=0

    Attributes
    ----------
    image_activations_ : ndarray of shape (HW, n_factors)
    audio_activations_ : ndarray of shape (N_T, n_factors)
    image_factors_ : ndarray of shape (n_factors, C_I)
    audio_factors_ : ndarray of shape (n_factors, C_A)
    k_star_ : int
        Index of the sounding factor.
    descriptors_ : DescriptorSet
    loss_trace_ : list of LossBreakdown
    result_ : DecompositionResult
    """

    def __init__(
        self,
        anchor_bank=None,
        n_factors=8,
        penalty_weight=125.0,
        temporal_weight=1.0,
        learning_rate=0.25,
        n_iter=1800,
        penalty="ce",
        min_mode="min",
        component_mode="softmask",
        temperature=1.0,
        random_state=0,
    ):
        self.anchor_bank = anchor_bank
        self.n_factors = n_factors
        self.penalty_weight = penalty_weight
        self.temporal_weight = temporal_weight
        self.learning_rate = learning_rate
        self.n_iter = n_iter
        self.penalty = penalty
        self.min_mode = min_mode
        self.component_mode = component_mode
        self.temperature = temperature
        self.random_state = random_state

    def _solver_config(self) -> SolverConfig:
        return SolverConfig(
            K=self.n_factors,
            beta_p=self.penalty_weight,
            beta_temp=self.temporal_weight,
            learning_rate=self.learning_rate,
            iterations=self.n_iter,
            seed=self.random_state,
            penalty_kind=self.penalty,
            min_mode=self.min_mode,
            component_mode=self.component_mode,
            temperature=self.temperature,
        )

    def _validate_pair(self, X, Y):
        X = check_array(X, dtype=np.float64)
        Y = check_array(Y, dtype=np.float64)
        check_non_negative(X, "SemanticCoFactorization (image features)")
        check_non_negative(Y, "SemanticCoFactorization (audio features)")
        return X, Y

    def fit(self, X, Y):
        """Solve the joint decomposition of one image/audio feature pair.

        Parameters
        ----------
        X : array-like of shape (HW, C_I)
            Non-negative image patch features.
        Y : array-like of shape (N_T, C_A)
            Non-negative audio token features.
        """
        if self.anchor_bank is None:
            raise ValueError("anchor_bank is required to fit")
        X, Y = self._validate_pair(X, Y)
        result = decompose(Y, X, self.anchor_bank, self._solver_config())
        self.result_ = result
        self.image_activations_ = result.state.activations_image
        self.audio_activations_ = result.state.activations_audio
        self.image_factors_ = result.state.V_I
        self.audio_factors_ = result.state.V_A
        self.k_star_ = result.k_star
        self.descriptors_ = result.descriptors
        self.loss_trace_ = result.loss_trace
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X=None):
        """Per-token factor activations of image features.

        With ``X=None`` returns the activations fitted jointly; otherwise
        encodes the given features against the fitted image factors.
        """
        check_is_fitted(self, "result_")
        if X is None:
            return self.image_activations_.copy()
        X = check_array(X, dtype=np.float64)
        check_non_negative(X, "SemanticCoFactorization.transform")
        if X.shape[1] != self.image_factors_.shape[1]:
            raise ValueError(
                f"X has {X.shape[1]} features, fitted factors have "
                f"{self.image_factors_.shape[1]}"
            )
        return encode_activations(
            X, self.image_factors_, self.learning_rate, self.n_iter, self.random_state
        )

    def fit_transform(self, X, Y):
        return self.fit(X, Y).transform()

    def predict(self, X=None):
        """Dominant factor index of each image token."""
        return np.argmax(self.transform(X), axis=1)

    def sounding_mask(self, spatial_dims=None) -> SoftMask:
        """The sounding factor's activation column as a soft mask."""
        check_is_fitted(self, "result_")
        column = self.image_activations_[:, self.k_star_]
        if spatial_dims is None:
            values = column.reshape(1, -1)
        else:
            values = column.reshape(spatial_dims)
        return SoftMask(values=values)

    def predict_label(self) -> tuple[str, float]:
        """Anchor label closest to the sounding image factor, with its score."""
        check_is_fitted(self, "result_")
        return classify_sounding_factor(self.image_factors_[self.k_star_], self.anchor_bank)
