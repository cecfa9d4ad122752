"""Input checks shared by the estimator wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ValidationError
from .probcore import Channel
from .sources import IidSource, MarkovSource


def check_sequences(X, n_symbols: int, min_length: int = 1) -> np.ndarray:
    """Return ``X`` as a (n_sequences, n) int64 array of symbols in [0, n_symbols)."""
    arr = check_array(X, dtype=None, ensure_2d=False, ensure_min_features=0)
    arr = np.atleast_2d(arr)
    if arr.ndim != 2:
        raise ValidationError("expected a 2-d array of symbol sequences")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ValidationError("symbols must be integers")
    arr = arr.astype(np.int64)
    if arr.shape[1] < min_length:
        raise ValidationError(f"sequences must have length >= {min_length}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_symbols):
        raise ValidationError(f"symbols must lie in [0, {n_symbols})")
    return arr


def check_source(source):
    if isinstance(source, (MarkovSource, IidSource)):
        return source
    mat = np.asarray(source, dtype=float)
    if mat.ndim == 1:
        return IidSource(mat)
    return MarkovSource(mat)


def check_channel(channel, n_inputs: int) -> Channel:
    ch = channel if isinstance(channel, Channel) else Channel(channel)
    if ch.n_inputs != n_inputs:
        raise ValidationError(f"channel has {ch.n_inputs} inputs, source has {n_inputs} states")
    return ch
