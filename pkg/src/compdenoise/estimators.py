"""Scikit-learn style denoisers over finite-alphabet sequences.

Each estimator takes rows of an observation array as independent noisy
sequences. The statistical model (source and channel) is a hyperparameter;
``fit`` validates it and prepares anything that depends on the block length.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_channel, check_sequences, check_source
from .codec import product_codebook
from .empirics import LossSpec
from .exceptions import ValidationError
from .inference import posterior_samples_batch, smooth_batch
from .probcore import LN2, matched_distortion
from .ratedist import matched_rate
from .sources import make_rng

# keeps estimator draws off the streams used by simulation helpers with the same seed
_ESTIMATOR_STREAM = 0x5EED


def _loss_spec(loss, n_states):
    if isinstance(loss, LossSpec):
        return loss
    if loss == "hamming":
        return LossSpec.hamming(n_states)
    if loss == "mse":
        return LossSpec.mse(np.arange(n_states))
    return LossSpec(np.asarray(loss, dtype=float))


class _ModelDenoiser(TransformerMixin, BaseEstimator):
    def _fit_model(self, X):
        self.source_ = check_source(self.source)
        self.channel_ = check_channel(self.channel, self.source_.n_states)
        self.loss_ = _loss_spec(self.loss, self.source_.n_states)
        X = check_sequences(X, self.channel_.n_outputs)
        self.n_features_in_ = X.shape[1]
        return X

    def _check(self, X):
        check_is_fitted(self, "source_")
        return check_sequences(X, self.channel_.n_outputs)

    def score(self, X, y):
        """Negative mean per-symbol loss of ``transform(X)`` against clean ``y``."""
        y_hat = self.transform(X)
        y = check_sequences(y, self.source_.n_states)
        if y.shape != y_hat.shape:
            raise ValidationError("clean sequences must match the observations in shape")
        return -float(self.loss_.table[y, y_hat].mean())


class BayesDenoiser(_ModelDenoiser):
    """Per-symbol Bayes response to the exact smoothed posterior.

    Parameters
    ----------
    source : MarkovSource, IidSource or array-like
        A transition matrix (2-d) or i.i.d. law (1-d) is converted.
    channel : Channel or array-like
    loss : {"hamming", "mse"}, LossSpec or array-like
    """

    def __init__(self, source=None, channel=None, loss="hamming"):
        self.source = source
        self.channel = channel
        self.loss = loss

    def fit(self, X, y=None):
        self._fit_model(X)
        return self

    def predict_proba(self, X):
        """Posterior marginals, shape (n_sequences, n, |X|)."""
        X = self._check(X)
        return smooth_batch(self.source_, self.channel_, X)

    def transform(self, X):
        return np.argmin(self.predict_proba(X) @ self.loss_.table, axis=-1)


class PosteriorSamplingDenoiser(_ModelDenoiser):
    """Replace each observation sequence by one exact draw from its posterior."""

    def __init__(self, source=None, channel=None, loss="hamming", random_state=0):
        self.source = source
        self.channel = channel
        self.loss = loss
        self.random_state = random_state

    def fit(self, X, y=None):
        self._fit_model(X)
        return self

    def transform(self, X):
        X = self._check(X)
        return posterior_samples_batch(self.source_, self.channel_, X,
                                       make_rng(self.random_state, _ESTIMATOR_STREAM))


class CodebookDenoiser(_ModelDenoiser):
    """Lossy compression under the matched distortion, used as a denoiser.

    ``fit`` draws a random product codebook for the training block length at
    the matched-level rate plus ``rate_slack_bits``.
    """

    def __init__(self, source=None, channel=None, loss="hamming", rate_slack_bits=0.1,
                 random_state=0):
        self.source = source
        self.channel = channel
        self.loss = loss
        self.rate_slack_bits = rate_slack_bits
        self.random_state = random_state

    def fit(self, X, y=None):
        X = self._fit_model(X)
        if self.rate_slack_bits < 0:
            raise ValidationError("rate_slack_bits must be non-negative")
        self.distortion_ = matched_distortion(self.channel_, self.source_.stationary.probs)
        self.rate_ = matched_rate(self.source_, self.channel_) + self.rate_slack_bits * LN2
        self.code_ = product_codebook(self.source_, X.shape[1], self.rate_, self.random_state)
        return self

    def transform(self, X):
        X = self._check(X)
        if X.shape[1] != self.code_.n:
            raise ValidationError(f"fitted for length {self.code_.n}, got {X.shape[1]}")
        return self.code_.encode_many(self.distortion_, X)[1]


__all__ = ["BayesDenoiser", "PosteriorSamplingDenoiser", "CodebookDenoiser"]
