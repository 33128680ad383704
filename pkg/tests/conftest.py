import numpy as np
import pytest

from semconmf.semantics import AnchorBank


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_bank(rng, J=3, C_I=7, C_A=5):
    """Strictly positive random anchors (never degenerate)."""
    return AnchorBank(
        labels=[f"word{j}" for j in range(J)],
        image_anchors=rng.uniform(0.1, 1.0, size=(J, C_I)),
        audio_anchors=rng.uniform(0.1, 1.0, size=(J, C_A)),
    )


def orthogonal_bank(labels, C_I, C_A):
    """Anchors on disjoint channel blocks: distinct words are orthogonal."""
    J = len(labels)
    image = np.zeros((J, C_I))
    audio = np.zeros((J, C_A))
    wi, wa = C_I // J, C_A // J
    for j in range(J):
        image[j, j * wi:(j + 1) * wi] = 1.0
        audio[j, j * wa:(j + 1) * wa] = 1.0
    return AnchorBank(labels=list(labels), image_anchors=image, audio_anchors=audio)


def rank_one_pair(seed, n_audio=10, c_audio=6, n_image=16, c_image=8):
    """Exactly rank-1 non-negative feature matrices for both modalities.

    Row weights stay inside the sigmoid's comfortable range and column
    scales are order one, so plain gradient descent at the default
    learning rate reconstructs them quickly.
    """
    r = np.random.default_rng(seed)
    X_audio = np.outer(r.uniform(0.25, 0.75, n_audio), r.uniform(0.5, 1.5, c_audio))
    X_image = np.outer(r.uniform(0.25, 0.75, n_image), r.uniform(0.5, 1.5, c_image))
    return X_audio, X_image


@pytest.fixture
def small_bank(rng):
    return random_bank(rng)
