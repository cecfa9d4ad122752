"""Lossy source codes for the observation sequence.

A codebook holds reproduction words over the channel input alphabet. Encoding
is minimum-distortion search under a single-letter distortion table, with ties
going to the lowest codeword index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List

import numpy as np

from .exceptions import BudgetExceededError, InfeasibleError, ValidationError
from .inference import posterior_path_sample
from .probcore import conditional_entropy
from .ratedist import block_joint, _values
from .sources import SamplePath, as_symbols, make_rng, pass_through, sample_paths

CODEBOOK_BUDGET = 2**22
SMALL_CODE_BUDGET = 2**16


@dataclass(frozen=True, eq=False)
class Codebook:
    words: np.ndarray
    n: int
    rate: float
    generator_seed: int = 0

    def __post_init__(self):
        w = np.array(self.words, dtype=np.int64)
        if w.ndim != 2 or w.shape[1] != self.n:
            raise ValidationError("codewords must form a (num_words, n) array")
        w.setflags(write=False)
        object.__setattr__(self, "words", w)
        if not math.isclose(self.rate, math.log(w.shape[0]) / self.n, abs_tol=1e-12):
            raise ValidationError("stored rate disagrees with ln(|words|)/n")

    @classmethod
    def from_words(cls, words, generator_seed: int = 0) -> "Codebook":
        w = np.atleast_2d(np.asarray(words, dtype=np.int64))
        return cls(w, w.shape[1], math.log(w.shape[0]) / w.shape[1], generator_seed)

    def __len__(self):
        return self.words.shape[0]

    @cached_property
    def _indicators(self):
        size = int(self.words.max()) + 1
        return [(self.words == b).astype(np.float64).T for b in range(size)]


@dataclass(frozen=True, eq=False)
class EncodingResult:
    index: object
    y: np.ndarray
    distortion: float


def _word_count(n: int, rate_nats: float) -> int:
    if rate_nats < 0:
        raise ValidationError("rate must be non-negative")
    # exp(n R) is computed in floating point; shave rounding noise before ceil
    return max(1, math.ceil(math.exp(n * rate_nats) * (1 - 1e-12)))


def random_codebook(src, n: int, rate_nats: float, seed: int) -> Codebook:
    """Codewords drawn i.i.d. from the source block law P_{X^n}."""
    count = _word_count(n, rate_nats)
    if count > CODEBOOK_BUDGET:
        raise BudgetExceededError(f"{count} codewords exceed the budget of {CODEBOOK_BUDGET}")
    words = sample_paths(src, n, count, make_rng(seed))
    return Codebook(words, n, math.log(count) / n, seed)


def block_costs(words: np.ndarray, rho: np.ndarray, zs: np.ndarray, indicators=None) -> np.ndarray:
    """Total distortion sum_i rho(z_i, y_i) for every (observation row, codeword) pair.

    Integer symbol-pair counts are pooled over cells sharing a distortion
    value before any rounding happens, so two words using each value equally
    often get bit-identical totals and ties are resolved purely by index.
    ``indicators[b]`` may carry the precomputed (n, num_words) indicator of
    symbol ``b`` in the words.
    """
    zs = np.atleast_2d(zs)
    n_z, n_y = rho.shape
    zoh = [(zs == a).astype(np.float64) for a in range(n_z)]
    if indicators is None:
        indicators = [(words == b).astype(np.float64).T for b in range(n_y)]
    pooled = {}
    for a in range(n_z):
        for b in range(min(n_y, len(indicators))):
            if rho[a, b] == 0:
                continue
            counts = zoh[a] @ indicators[b]
            key = float(rho[a, b])
            pooled[key] = counts if key not in pooled else pooled[key] + counts
    total = np.zeros((zs.shape[0], words.shape[0]))
    for value in sorted(pooled):
        if math.isinf(value):
            total[pooled[value] > 0] = np.inf
        else:
            total += pooled[value] * value
    return total


def encode_many(cb: Codebook, dist, zs, chunk: int = 512):
    """Minimum-distortion indices and per-letter distortions for a batch of blocks."""
    rho = _values(dist)
    zs = np.atleast_2d(np.asarray(zs, dtype=np.int64))
    if zs.shape[1] != cb.n:
        raise ValidationError(f"observation length {zs.shape[1]} != block length {cb.n}")
    idx = np.empty(zs.shape[0], dtype=np.int64)
    best = np.empty(zs.shape[0])
    for start in range(0, zs.shape[0], chunk):
        cost = block_costs(cb.words, rho, zs[start:start + chunk], cb._indicators)
        j = np.argmin(cost, axis=1)
        idx[start:start + chunk] = j
        best[start:start + chunk] = cost[np.arange(j.size), j]
    if np.any(np.isinf(best)):
        raise InfeasibleError("no codeword has finite distortion for some observation")
    return idx, best / cb.n


def encode(cb, dist, z) -> EncodingResult:
    """Map ``z`` to its minimum-distortion codeword (lowest index on ties)."""
    if isinstance(cb, ProductCode):
        return cb.encode(dist, z)
    idx, d = encode_many(cb, dist, as_symbols(z)[None, :])
    return EncodingResult(int(idx[0]), cb.words[idx[0]].copy(), float(d[0]))


@dataclass(frozen=True, eq=False)
class ProductCode:
    """Length-n code built as a Cartesian product of shorter random codebooks.

    The block is cut into consecutive chunks; each chunk is encoded with its
    own codebook. The rate is ln(prod |C_j|) / n.
    """

    codebooks: List[Codebook]
    n: int = field(init=False)
    rate: float = field(init=False)

    def __post_init__(self):
        n = sum(cb.n for cb in self.codebooks)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rate", sum(math.log(len(cb)) for cb in self.codebooks) / n)

    @property
    def bounds(self):
        edges = np.cumsum([0] + [cb.n for cb in self.codebooks])
        return list(zip(edges[:-1], edges[1:]))

    def encode_many(self, dist, zs):
        zs = np.atleast_2d(np.asarray(zs, dtype=np.int64))
        if zs.shape[1] != self.n:
            raise ValidationError(f"observation length {zs.shape[1]} != block length {self.n}")
        ys = np.empty_like(zs)
        total = np.zeros(zs.shape[0])
        indices = []
        for cb, (lo, hi) in zip(self.codebooks, self.bounds):
            idx, d = encode_many(cb, dist, zs[:, lo:hi])
            ys[:, lo:hi] = cb.words[idx]
            total += d * cb.n
            indices.append(idx)
        return np.stack(indices, axis=1), ys, total / self.n

    def encode(self, dist, z) -> EncodingResult:
        idx, ys, d = self.encode_many(dist, as_symbols(z)[None, :])
        return EncodingResult(tuple(int(i) for i in idx[0]), ys[0], float(d[0]))


def product_codebook(src, n: int, rate_nats: float, seed: int,
                     max_words: int = SMALL_CODE_BUDGET) -> ProductCode:
    """Random product code of total length ``n``.

    Chunks use the longest length ``b`` whose codebook at ``rate_nats`` has at
    most ``max_words`` words; a shorter final chunk covers the remainder.
    Chunk ``j`` is drawn with seed stream ``(seed, j)``.
    """
    if rate_nats <= 0:
        return ProductCode([random_codebook(src, n, 0.0, seed)])
    b = max(1, int(math.log(max_words) / rate_nats))
    while b > 1 and _word_count(b, rate_nats) > max_words:
        b -= 1
    b = min(b, n)
    lengths = [b] * (n // b) + ([n % b] if n % b else [])
    books = []
    for j, length in enumerate(lengths):
        count = _word_count(length, rate_nats)
        words = sample_paths(src, length, count, make_rng(seed, j))
        books.append(Codebook(words, length, math.log(count) / length, seed))
    return ProductCode(books)


def _all_words(n_symbols: int, n: int) -> np.ndarray:
    grids = np.indices((n_symbols,) * n).reshape(n, -1).T
    return grids.astype(np.int64)


@dataclass(frozen=True, eq=False)
class SmallCode:
    codebook: Codebook
    encoder: np.ndarray
    expected_distortion: float
    history: tuple = ()


def optimal_small_code(src, ch, n: int, num_words: int, dist, restarts: int = 32,
                       seed: int = 0, max_iter: int = 200) -> SmallCode:
    """Deterministic code for tiny blocks by alternating minimisation.

    Each restart alternates nearest-word assignment of every z^n with a
    coordinate-wise refit of each word against the exact law of Z^n; the
    restart with the lowest expected per-letter distortion is returned.
    ``encoder[i]`` is the word index for the i-th sequence in row-major order.
    """
    rho = _values(dist)
    n_z, n_y = rho.shape
    if n_z**n > SMALL_CODE_BUDGET:
        raise BudgetExceededError(f"|Z|^n = {n_z}^{n} exceeds {SMALL_CODE_BUDGET}")
    pz = block_joint(src, ch, n).sum(axis=1)
    zs = _all_words(n_z, n)
    n_cand = n_y**n
    rng = make_rng(seed)
    best = None
    for _ in range(restarts):
        if num_words <= n_cand:
            picks = rng.choice(n_cand, size=num_words, replace=False)
            words = _all_words(n_y, n)[np.sort(picks)]
        else:
            words = rng.integers(0, n_y, size=(num_words, n))
        history = []
        assign = None
        for _ in range(max_iter):
            cost = block_costs(words, rho, zs)
            new_assign = np.argmin(cost, axis=1)
            per = cost[np.arange(zs.shape[0]), new_assign]
            obj = float(pz[pz > 0] @ per[pz > 0]) / n
            history.append(obj)
            if assign is not None and np.array_equal(new_assign, assign):
                break
            assign = new_assign
            words = _refit(words, assign, zs, pz, rho)
        if best is None or history[-1] < best[2]:
            best = (words.copy(), assign.copy(), history[-1], tuple(history))
    words, assign, obj, history = best
    return SmallCode(Codebook.from_words(words, seed), assign, obj, history)


def _refit(words, assign, zs, pz, rho):
    words = words.copy()
    n_z = rho.shape[0]
    for j in range(words.shape[0]):
        cell = assign == j
        if not np.any(cell & (pz > 0)):
            continue
        wz = pz[cell]
        cz = zs[cell]
        for i in range(words.shape[1]):
            hist = np.bincount(cz[:, i], weights=wz, minlength=n_z)
            used = hist > 0
            cost = hist[used] @ rho[used]
            words[j, i] = int(np.argmin(cost))
    return words


def posterior_sampling_denoiser(src, ch, z, seed: int) -> SamplePath:
    """Ideal good code at the matched level: an exact posterior draw of X^n."""
    return posterior_path_sample(src, ch, z, seed)


@dataclass(frozen=True)
class GoodnessReport:
    mean_distortion: float
    std_err: float
    target_D: float
    rate: float


def goodness_report(cb, dist, src, ch, trials: int, seed: int) -> GoodnessReport:
    """Monte Carlo estimate of E[rho_n(Z^n, phi(Z^n))] against D = H(Z|X)."""
    rng = make_rng(seed)
    xs = sample_paths(src, cb.n, trials, rng)
    zs = pass_through(ch, xs, rng)
    if isinstance(cb, ProductCode):
        _, _, d = cb.encode_many(dist, zs)
    else:
        _, d = encode_many(cb, dist, zs)
    se = float(d.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return GoodnessReport(float(d.mean()), se, conditional_entropy(ch, src.stationary.probs), cb.rate)


__all__ = [
    "Codebook",
    "EncodingResult",
    "ProductCode",
    "SmallCode",
    "GoodnessReport",
    "random_codebook",
    "product_codebook",
    "encode",
    "encode_many",
    "block_costs",
    "optimal_small_code",
    "posterior_sampling_denoiser",
    "goodness_report",
]
