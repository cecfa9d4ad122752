from __future__ import annotations

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from compdenoise.estimators import BayesDenoiser, CodebookDenoiser, PosteriorSamplingDenoiser
from compdenoise.exceptions import ValidationError
from compdenoise.inference import forward_backward
from compdenoise.probcore import bsc
from compdenoise.sources import MarkovSource, make_rng, pass_through, sample_paths

P = [[0.8, 0.2], [0.2, 0.8]]


@pytest.fixture(scope="module")
def data():
    src, ch = MarkovSource(P), bsc(0.1)
    rng = make_rng(11)
    x = sample_paths(src, 300, 6, rng)
    return x, pass_through(ch, x, rng)


def test_params_roundtrip_and_clone():
    est = CodebookDenoiser(P, [[0.9, 0.1], [0.1, 0.9]], rate_slack_bits=0.2, random_state=4)
    params = est.get_params()
    assert params["rate_slack_bits"] == 0.2 and params["random_state"] == 4
    twin = clone(est)
    assert twin.get_params()["rate_slack_bits"] == 0.2 and twin is not est
    est.set_params(loss="mse")
    assert est.loss == "mse"


def test_bayes_matches_forward_backward(data):
    x, z = data
    est = BayesDenoiser(P, [[0.9, 0.1], [0.1, 0.9]]).fit(z)
    proba = est.predict_proba(z)
    ref = forward_backward(MarkovSource(P), bsc(0.1), z[2]).probs
    np.testing.assert_allclose(proba[2], ref, atol=1e-12)
    np.testing.assert_array_equal(est.transform(z)[2], np.argmax(ref, axis=1))
    assert est.n_features_in_ == 300


def test_bayes_beats_identity(data):
    x, z = data
    est = BayesDenoiser(P, bsc(0.1)).fit(z)
    assert est.score(z, x) >= -float(np.mean(z != x))


def test_posterior_sampling_is_reproducible(data):
    _, z = data
    a = PosteriorSamplingDenoiser(P, bsc(0.1), random_state=3).fit_transform(z)
    b = PosteriorSamplingDenoiser(P, bsc(0.1), random_state=3).fit_transform(z)
    np.testing.assert_array_equal(a, b)


def test_codebook_denoiser_shapes(data):
    x, z = data
    est = CodebookDenoiser(P, bsc(0.1), random_state=1).fit(z)
    y = est.transform(z)
    assert y.shape == z.shape and est.code_.n == 300
    assert -1.0 <= est.score(z, x) <= 0.0
    with pytest.raises(ValidationError):
        est.transform(z[:, :100])


def test_validation_errors(data):
    _, z = data
    with pytest.raises(NotFittedError):
        BayesDenoiser(P, bsc(0.1)).transform(z)
    with pytest.raises(ValidationError):
        BayesDenoiser(P, bsc(0.1)).fit(z + 5)
    with pytest.raises(ValidationError):
        BayesDenoiser(P, [[0.5, 0.25, 0.25]]).fit(z)
    with pytest.raises(ValidationError):
        CodebookDenoiser(P, bsc(0.1), rate_slack_bits=-1).fit(z)
    with pytest.raises(ValidationError):
        BayesDenoiser(P, bsc(0.1)).fit(z).score(z, z[:, :10])


def test_iid_source_from_vector():
    est = BayesDenoiser([0.5, 0.5], bsc(0.1)).fit([[0, 1, 1]])
    np.testing.assert_array_equal(est.transform([[0, 1, 1]]), [[0, 1, 1]])
