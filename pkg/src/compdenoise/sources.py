"""Stationary sources: i.i.d. laws and finite-state Markov chains.

Random streams come from ``numpy``'s counter-based Philox generator keyed by
``(seed, *key)`` through :class:`numpy.random.SeedSequence`, so trial ``t`` of
a run always sees the same stream no matter how trials are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import BudgetExceededError, ValidationError
from .probcore import JointPmf, Pmf, entropy

BLOCK_BUDGET = 2**22


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _is_primitive(mat) -> bool:
    n = mat.shape[0]
    a = (mat > 0).astype(np.int64)
    # Wielandt: a primitive matrix has A^m > 0 for m = (n-1)^2 + 1.
    power = np.eye(n, dtype=np.int64)
    for _ in range((n - 1) ** 2 + 1):
        power = np.minimum(power @ a, 1)
    return bool(np.all(power > 0))


def stationary_distribution(transition) -> Pmf:
    """Unique invariant law of an irreducible aperiodic chain.

    Raises
    ------
    ValidationError
        If the chain is not ergodic (reducible or periodic).
    """
    m = np.asarray(transition, dtype=float)
    _check_stochastic(m)
    if not _is_primitive(m):
        raise ValidationError("transition matrix is not irreducible and aperiodic")
    n = m.shape[0]
    a = np.vstack([m.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(a, b, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    for _ in range(1000):
        nxt = pi @ m
        nxt /= nxt.sum()
        done = np.max(np.abs(nxt - pi)) < 1e-15
        pi = nxt
        if done:
            break
    return Pmf(pi)


def _check_stochastic(m):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("transition matrix must be square")
    for i, row in enumerate(m):
        try:
            Pmf(row)
        except ValidationError as exc:
            raise ValidationError(f"transition row {i}: {exc}") from None


@dataclass(frozen=True, eq=False)
class MarkovSource:
    """Stationary ergodic Markov chain started from its invariant law."""

    transition: np.ndarray
    stationary: Pmf = None

    def __post_init__(self):
        m = np.array(self.transition, dtype=float)
        m.setflags(write=False)
        pi = stationary_distribution(m)
        if self.stationary is not None:
            given = np.asarray(self.stationary, dtype=float)
            if given.shape != pi.probs.shape or np.max(np.abs(given @ m - given)) > 1e-10:
                raise ValidationError("supplied stationary law is not invariant")
            pi = Pmf(given)
        object.__setattr__(self, "transition", m)
        object.__setattr__(self, "stationary", pi)

    @classmethod
    def binary_symmetric(cls, p_s: float) -> "MarkovSource":
        return cls(np.array([[1.0 - p_s, p_s], [p_s, 1.0 - p_s]]))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    def __repr__(self):
        return f"MarkovSource(transition={self.transition.tolist()})"


@dataclass(frozen=True, eq=False)
class IidSource:
    law: Pmf

    def __post_init__(self):
        if not isinstance(self.law, Pmf):
            object.__setattr__(self, "law", Pmf(self.law))

    @property
    def n_states(self) -> int:
        return len(self.law)

    @property
    def stationary(self) -> Pmf:
        return self.law

    @property
    def transition(self) -> np.ndarray:
        return np.tile(self.law.probs, (self.n_states, 1))

    def __repr__(self):
        return f"IidSource(law={self.law.probs.tolist()})"


Source = Union[MarkovSource, IidSource]


@dataclass(frozen=True, eq=False)
class SamplePath:
    symbols: np.ndarray
    seed: int = 0

    def __post_init__(self):
        s = np.array(self.symbols, dtype=np.int64)
        if s.ndim != 1:
            raise ValidationError("a sample path is one-dimensional")
        if s.size and s.min() < 0:
            raise ValidationError("symbols must be non-negative indices")
        s.setflags(write=False)
        object.__setattr__(self, "symbols", s)

    def __len__(self):
        return self.symbols.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.symbols, dtype=dtype)


def as_symbols(path) -> np.ndarray:
    return np.asarray(getattr(path, "symbols", path), dtype=np.int64)


def chain_of(src: Source):
    """``(initial law, transition matrix)`` arrays for either source kind."""
    return np.asarray(src.stationary.probs), np.asarray(src.transition)


def _draw(cdf_rows, u):
    # cdf_rows: (B, S) cumulative rows; u: (B,) uniforms
    idx = (u[:, None] >= cdf_rows).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_paths(src: Source, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` independent stationary paths of length ``n`` (``(size, n)`` array)."""
    if n < 1:
        raise ValidationError("path length must be >= 1")
    pi, m = chain_of(src)
    out = np.empty((size, n), dtype=np.int64)
    if isinstance(src, IidSource):
        out[:] = rng.choice(pi.size, size=(size, n), p=pi)
        return out
    cdf0 = np.cumsum(pi)
    cdf = np.cumsum(m, axis=1)
    u = rng.random((size, n))
    out[:, 0] = _draw(np.broadcast_to(cdf0, (size, pi.size)), u[:, 0])
    for i in range(1, n):
        out[:, i] = _draw(cdf[out[:, i - 1]], u[:, i])
    return out


def sample_path(src: Source, n: int, seed: int) -> SamplePath:
    """One stationary path; identical for identical ``(src, n, seed)``."""
    return SamplePath(sample_paths(src, n, 1, make_rng(seed))[0], seed)


def pass_through(ch, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Apply a memoryless channel symbol-by-symbol to an integer array."""
    x = np.asarray(x, dtype=np.int64)
    cdf = np.cumsum(ch.matrix, axis=1)
    flat = x.ravel()
    u = rng.random(flat.size)
    z = _draw(cdf[flat], u)
    return z.reshape(x.shape)


def block_pmf(src: Source, k: int) -> JointPmf:
    """Exact law of ``X^k`` as a ``k``-dimensional table."""
    pi, m = chain_of(src)
    s = pi.size
    if k < 1:
        raise ValidationError("block length must be >= 1")
    if s**k > BLOCK_BUDGET:
        raise BudgetExceededError(f"|X|^k = {s}^{k} exceeds {BLOCK_BUDGET}")
    table = pi.copy()
    for _ in range(1, k):
        table = table[..., None] * m
    return JointPmf(table)


def two_point_marginal(p_s: float, gap: int) -> np.ndarray:
    """``P(X_t = b | X_s = a)`` for the binary symmetric chain, ``t - s = gap``."""
    if gap < 0:
        raise ValidationError("gap must be >= 0")
    q = (1.0 - 2.0 * p_s) ** gap
    sign = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return 0.5 * (sign * q + 1.0)


def entropy_rate(src: Source) -> float:
    """Entropy rate in nats per symbol."""
    if isinstance(src, IidSource):
        return entropy(src.law.probs)
    pi, m = chain_of(src)
    return float(sum(pi[x] * entropy(m[x]) for x in range(pi.size)))


__all__ = [
    "MarkovSource",
    "IidSource",
    "SamplePath",
    "make_rng",
    "stationary_distribution",
    "sample_path",
    "sample_paths",
    "pass_through",
    "block_pmf",
    "two_point_marginal",
    "entropy_rate",
    "chain_of",
    "as_symbols",
]
