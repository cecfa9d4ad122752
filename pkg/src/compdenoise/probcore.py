"""Finite-alphabet probability primitives.

All information quantities are in nats. Infinite distortions are stored as
``numpy.inf``; they only arise where the defining transition probability is 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .exceptions import ValidationError

SUM_TOL = 1e-12
NEG_TOL = 1e-15
RANK_TOL = 1e-10

LN2 = math.log(2.0)


def to_bits(nats):
    return nats / LN2


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Alphabet:
    size: int
    labels: Optional[tuple] = None

    def __post_init__(self):
        if int(self.size) != self.size or self.size < 1:
            raise ValidationError(f"alphabet size must be a positive integer, got {self.size}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
            if len(self.labels) != self.size:
                raise ValidationError("labels must have exactly `size` entries")

    def __len__(self):
        return self.size


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over a finite alphabet.

    Construction validates; use :meth:`normalized_from` to rescale
    non-negative weights.
    """

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size == 0:
            raise ValidationError("pmf must be a non-empty 1-d vector")
        _check_simplex(p)
        object.__setattr__(self, "probs", p)

    @classmethod
    def normalized_from(cls, weights) -> "Pmf":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and non-negative")
        total = w.sum()
        if total <= 0:
            raise ValidationError("weights sum to zero")
        return cls(w / total)

    @classmethod
    def uniform(cls, size: int) -> "Pmf":
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def from_file(cls, path) -> "Pmf":
        m = load_matrix(path)
        if m.shape[0] != 1:
            raise ValidationError(f"{path}: a pmf file must have exactly one row")
        return cls(m[0])

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.probs.size)

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __repr__(self):
        return f"Pmf({np.array2string(self.probs, precision=6)})"


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Probability table over a product of alphabets (one array axis per coordinate)."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim < 1:
            raise ValidationError("joint pmf needs at least one coordinate")
        _check_simplex(p)
        object.__setattr__(self, "probs", p)

    @property
    def shape(self):
        return self.probs.shape

    def marginal(self, axes) -> "JointPmf":
        """Keep only the coordinates listed in ``axes`` (in table order)."""
        if np.isscalar(axes):
            axes = (int(axes),)
        drop = tuple(i for i in range(self.probs.ndim) if i not in set(axes))
        return JointPmf(self.probs.sum(axis=drop))

    def marginal_pmf(self, axis: int) -> Pmf:
        return Pmf(self.marginal((axis,)).probs)

    def flat(self) -> Pmf:
        return Pmf(self.probs.ravel())


def _check_simplex(p):
    if not np.all(np.isfinite(p)):
        raise ValidationError("probabilities must be finite")
    if np.any(p < -NEG_TOL):
        raise ValidationError(f"negative probability {p.min():.3e}")
    s = p.sum()
    if abs(s - 1.0) > SUM_TOL * max(1.0, math.sqrt(p.size)):
        raise ValidationError(f"probabilities sum to {s!r}, not 1")


@dataclass(frozen=True, eq=False)
class Channel:
    """Memoryless channel: ``matrix[x, z] = P(Z=z | X=x)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.ndim != 2:
            raise ValidationError("channel matrix must be 2-d")
        for i, row in enumerate(m):
            try:
                _check_simplex(row)
            except ValidationError as exc:
                raise ValidationError(f"channel row {i}: {exc}") from None
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_file(cls, path) -> "Channel":
        return cls(load_matrix(path))

    @property
    def n_inputs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.matrix.shape[1]

    def _prior(self, prior):
        p = np.asarray(prior, dtype=float)
        if p.shape != (self.n_inputs,):
            raise ValidationError(
                f"prior has {p.size} entries, channel has {self.n_inputs} inputs"
            )
        return p

    def joint(self, prior) -> JointPmf:
        """Joint law of (X, Z) as an ``|X| x |Z|`` table."""
        return JointPmf(self._prior(prior)[:, None] * self.matrix)

    def output_law(self, prior) -> Pmf:
        return Pmf(np.clip(self._prior(prior) @ self.matrix, 0.0, None))

    def posterior(self, prior) -> np.ndarray:
        """``|Z| x |X|`` table of P(X=x | Z=z); rows of unreachable z are NaN."""
        j = self._prior(prior)[:, None] * self.matrix
        col = j.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return (j / col).T


def bsc(p: float) -> Channel:
    return Channel([[1.0 - p, p], [p, 1.0 - p]])


def bec(p_e: float) -> Channel:
    """Binary erasure channel; output index 2 is the erasure symbol."""
    return Channel([[1.0 - p_e, 0.0, p_e], [0.0, 1.0 - p_e, p_e]])


def additive_channel(noise) -> Channel:
    """Channel Z = X + N over Z_m with noise law ``noise``."""
    noise = np.asarray(noise, dtype=float)
    m = noise.size
    mat = np.empty((m, m))
    for x in range(m):
        for z in range(m):
            mat[x, z] = noise[(z - x) % m]
    return Channel(mat)


def identity_channel(size: int) -> Channel:
    return Channel(np.eye(size))


@dataclass(frozen=True, eq=False)
class DistortionMatrix:
    """``values[z, y]`` in nats; ``level`` is the target distortion, if known."""

    values: np.ndarray
    level: Optional[float] = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValidationError("distortion matrix must be 2-d")
        if np.any(np.isnan(v)) or np.any(v < 0):
            raise ValidationError("distortions must be non-negative (inf allowed)")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0]
    return float(max(0.0, -np.sum(nz * np.log(nz))))


def conditional_entropy(ch: Channel, prior) -> float:
    """H(Z|X) = sum_x prior(x) H(row_x)."""
    prior = ch._prior(prior)
    return float(sum(prior[x] * entropy(ch.matrix[x]) for x in range(ch.n_inputs)))


def mutual_information(joint) -> float:
    j = np.asarray(getattr(joint, "probs", joint), dtype=float)
    if j.ndim != 2:
        raise ValidationError("mutual information needs a two-coordinate joint")
    mi = entropy(j.sum(axis=1)) + entropy(j.sum(axis=0)) - entropy(j)
    return float(max(0.0, mi))


def matched_distortion(ch: Channel, prior=None) -> DistortionMatrix:
    """rho(z, y) = -ln P(Z=z | X=y), with +inf on zero transitions.

    The reproduction alphabet is the channel input alphabet. When ``prior``
    is given, ``level`` is set to H(Z|X) under that prior.
    """
    with np.errstate(divide="ignore"):
        values = -np.log(ch.matrix.T)
    values[ch.matrix.T == 0] = np.inf
    values[values == 0] = 0.0  # -0.0 from log(1)
    level = None if prior is None else conditional_entropy(ch, prior)
    return DistortionMatrix(values, level)


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError("tv_distance: shape mismatch")
    return float(0.5 * np.abs(p - q).sum())


def kl_divergence(p, q) -> float:
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValidationError("kl_divergence: shape mismatch")
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(max(0.0, np.sum(p[mask] * np.log(p[mask] / q[mask]))))


def channel_rank_class(ch: Channel) -> str:
    """One of ``"invertible"``, ``"full_row_rank"`` or ``"deficient"``."""
    s = np.linalg.svd(ch.matrix, compute_uv=False)
    rank = int(np.sum(s > RANK_TOL * s[0]))
    rows, cols = ch.matrix.shape
    if rank < rows:
        return "deficient"
    return "invertible" if rows == cols else "full_row_rank"


def load_matrix(path) -> np.ndarray:
    """Read the plain-text matrix format.

    Grammar: optional ``#`` comments and blank lines are ignored; the first
    remaining line is ``rows cols``; then exactly ``rows`` lines of ``cols``
    whitespace-separated decimal numbers.
    """
    path = Path(path)
    lines = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if text:
            lines.append((lineno, text))
    if not lines:
        raise ValidationError(f"{path}: empty matrix file")
    lineno, header = lines[0]
    parts = header.split()
    try:
        rows, cols = (int(t) for t in parts)
    except ValueError:
        raise ValidationError(f"{path}:{lineno}: header must be `rows cols`") from None
    body = lines[1:]
    if len(body) != rows:
        raise ValidationError(f"{path}: expected {rows} rows, found {len(body)}")
    out = np.empty((rows, cols))
    for i, (lineno, text) in enumerate(body):
        try:
            vals = [float(t) for t in text.split()]
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric entry") from None
        if len(vals) != cols:
            raise ValidationError(f"{path}:{lineno}: expected {cols} values, got {len(vals)}")
        out[i] = vals
    return out


def dump_matrix(matrix, path=None) -> str:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    text = f"{m.shape[0]} {m.shape[1]}\n" + "".join(
        " ".join(repr(float(v)) for v in row) + "\n" for row in m
    )
    if path is not None:
        Path(path).write_text(text)
    return text


def binary_entropy(p) -> np.ndarray:
    """h(p) in nats, elementwise."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log(p) + (1 - p) * np.log1p(-p))
    return np.where((p <= 0) | (p >= 1), 0.0, h)


__all__ = [
    "Alphabet",
    "Pmf",
    "JointPmf",
    "Channel",
    "DistortionMatrix",
    "bsc",
    "bec",
    "additive_channel",
    "identity_channel",
    "entropy",
    "conditional_entropy",
    "mutual_information",
    "matched_distortion",
    "tv_distance",
    "kl_divergence",
    "channel_rank_class",
    "load_matrix",
    "dump_matrix",
    "binary_entropy",
    "to_bits",
]
