"""Empirical window statistics, losses and reference baselines.

Windowed joint tables index a window ``w_{-k}^{k}`` by its row-major code
``sum_j w_j * base**(2k-j)``, matching :func:`compdenoise.ratedist.block_joint`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import linprog

from ._parallel import map_trials
from .codec import Codebook, ProductCode, SmallCode, encode_many, product_codebook
from .exceptions import BudgetExceededError, ValidationError
from .inference import (
    center_posteriors,
    mixing_coefficient,
    posterior_radius,
    posterior_samples_batch,
    smooth_batch,
)
from .probcore import Channel, JointPmf, bec, matched_distortion, tv_distance
from .ratedist import block_joint
from .sources import (
    IidSource,
    MarkovSource,
    SamplePath,
    as_symbols,
    block_pmf,
    make_rng,
    pass_through,
    sample_paths,
)

EXACT_BUDGET = 2**24


# ---------------------------------------------------------------------------
# Loss functions


@dataclass(frozen=True, eq=False)
class LossSpec:
    """Per-symbol loss ``table[x, y]`` bounded by ``lambda_max``."""

    table: np.ndarray
    lambda_max: Optional[float] = None
    kind: str = "matrix"

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or not np.all(np.isfinite(t)) or np.any(t < 0):
            raise ValidationError("loss table must be a finite non-negative matrix")
        lmax = float(t.max()) if self.lambda_max is None else float(self.lambda_max)
        if t.max() > lmax:
            raise ValidationError("loss entries exceed lambda_max")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)
        object.__setattr__(self, "lambda_max", lmax)

    @classmethod
    def hamming(cls, size: int = 2) -> "LossSpec":
        return cls(1.0 - np.eye(size), 1.0, "hamming")

    @classmethod
    def mse(cls, embedding) -> "LossSpec":
        """Squared error between real embeddings of the symbols."""
        e = np.asarray(embedding, dtype=float)
        return cls((e[:, None] - e[None, :]) ** 2, None, "mse")

    @property
    def is_hamming(self) -> bool:
        t = self.table
        return t.shape[0] == t.shape[1] and np.array_equal(t, 1.0 - np.eye(t.shape[0]))


def block_loss(x, y, loss: LossSpec) -> float:
    """Average per-symbol loss (1/n) sum_i loss(x_i, y_i)."""
    x, y = as_symbols(x), as_symbols(y)
    if x.shape != y.shape:
        raise ValidationError("sequences must have equal length")
    return float(loss.table[x, y].mean())


# ---------------------------------------------------------------------------
# Empirical window tables


def window_codes(seqs, base: int, k: int) -> np.ndarray:
    """Row-major codes of every length-(2k+1) window, shape (B, n - 2k)."""
    seqs = np.atleast_2d(np.asarray(seqs, dtype=np.int64))
    w = 2 * k + 1
    powers = base ** np.arange(w - 1, -1, -1, dtype=np.int64)
    return sliding_window_view(seqs, w, axis=1) @ powers


@dataclass(frozen=True, eq=False)
class EmpiricalJoint:
    """Counts over (x_0, z-window, y-window) for the interior positions."""

    k: int
    counts: np.ndarray
    n_effective: int

    def __post_init__(self):
        if self.counts.sum() != self.n_effective:
            raise ValidationError("counts must sum to n - 2k")

    def normalized(self) -> JointPmf:
        return JointPmf(self.counts / self.n_effective)


def empirical_joint(x, z, y, k: int, sizes=None) -> EmpiricalJoint:
    """Exact window counts over positions k .. n-k-1 (0-based).

    ``sizes = (|X|, |Z|, |Y|)``; each defaults to one more than the largest
    symbol present.
    """
    x, z, y = (as_symbols(s) for s in (x, z, y))
    n = x.size
    if not (z.size == y.size == n):
        raise ValidationError("x, z and y must have equal length")
    if n <= 2 * k:
        raise ValidationError(f"need n > 2k, got n={n}, k={k}")
    if sizes is None:
        sizes = tuple(int(s.max()) + 1 for s in (x, z, y))
    nx, nz, ny = sizes
    w = 2 * k + 1
    zc = window_codes(z, nz, k)[0]
    yc = window_codes(y, ny, k)[0]
    x0 = x[k:n - k]
    flat = (x0 * nz**w + zc) * ny**w + yc
    counts = np.bincount(flat, minlength=nx * nz**w * ny**w).reshape(nx, nz**w, ny**w)
    return EmpiricalJoint(k, counts, n - 2 * k)


@dataclass(frozen=True, eq=False)
class ExpectedEmpirical:
    """Expected window table Q^(n) with per-cell standard errors in Monte Carlo mode."""

    k: int
    n: int
    joint: JointPmf
    std_err: Optional[np.ndarray] = None

    @property
    def probs(self) -> np.ndarray:
        return self.joint.probs

    def zy_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=0)


class PosteriorSampler:
    """Stochastic code returning one exact posterior draw per observation row."""

    deterministic = False

    def __init__(self, src, ch: Channel):
        self.src, self.ch = src, ch

    def __call__(self, zs, rng):
        return posterior_samples_batch(self.src, self.ch, zs, rng)


def as_code(code, dist=None) -> Callable:
    """Adapt a code object to ``f(zs, rng) -> ys`` acting on (B, n) arrays."""
    if isinstance(code, SmallCode):
        words = code.codebook.words
        n = words.shape[1]
        base = int(round(code.encoder.size ** (1.0 / n)))
        powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
        return lambda zs, rng=None: words[code.encoder[np.atleast_2d(zs) @ powers]]
    if isinstance(code, ProductCode):
        if dist is None:
            raise ValidationError("a distortion matrix is needed to encode with a codebook")
        return lambda zs, rng=None: code.encode_many(dist, zs)[1]
    if isinstance(code, Codebook):
        if dist is None:
            raise ValidationError("a distortion matrix is needed to encode with a codebook")
        return lambda zs, rng=None: code.words[encode_many(code, dist, zs)[0]]
    if callable(code):
        return code
    raise ValidationError(f"unsupported code object {type(code).__name__}")


def _code_length(code, n):
    for obj in (getattr(code, "codebook", None), code):
        if obj is not None and hasattr(obj, "n"):
            return int(obj.n)
    if n is None:
        raise ValidationError("block length n must be given for this code")
    return int(n)


def _all_sequences(size: int, n: int) -> np.ndarray:
    return np.indices((size,) * n).reshape(n, -1).T.astype(np.int64)


def expected_empirical(src, ch: Channel, code, k: int, n: Optional[int] = None,
                       trials: Optional[int] = None, seed: int = 0, dist=None,
                       n_y: Optional[int] = None, threads: int = 1) -> ExpectedEmpirical:
    """Q^(n): the expected order-k window table.

    With ``trials=None`` every (x^n, z^n) pair is enumerated with its exact
    probability (the code must be deterministic). Otherwise ``trials``
    independent blocks are simulated, trial ``t`` on stream ``(seed, t)``.
    """
    n = _code_length(code, n)
    if n <= 2 * k:
        raise ValidationError(f"need n > 2k, got n={n}, k={k}")
    f = as_code(code, dist)
    nx, nz = ch.matrix.shape
    ny = nx if n_y is None else n_y
    w = 2 * k + 1
    shape = (nx, nz**w, ny**w)
    if trials is None:
        if getattr(code, "deterministic", True) is False:
            raise ValidationError("exact mode needs a deterministic code")
        if nx**n * nz**n > EXACT_BUDGET:
            raise BudgetExceededError(f"|X|^n |Z|^n exceeds {EXACT_BUDGET}")
        return ExpectedEmpirical(k, n, JointPmf(_exact_table(src, ch, f, k, n, shape)))

    def one(t, rng):
        xs = sample_paths(src, n, 1, rng)
        zs = pass_through(ch, xs, rng)
        ys = f(zs, rng)
        return empirical_joint(xs[0], zs[0], ys[0], k, (nx, nz, ny)).normalized().probs

    tables = np.stack(map_trials(one, trials, seed, threads))
    mean = tables.mean(axis=0)
    se = tables.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.full(shape, np.nan)
    return ExpectedEmpirical(k, n, JointPmf(mean / mean.sum()), se)


def _exact_table(src, ch, f, k, n, shape):
    nx, nz = ch.matrix.shape
    nzw, nyw = shape[1], shape[2]
    xs = _all_sequences(nx, n)
    zs = _all_sequences(nz, n)
    ys = np.asarray(f(zs, None), dtype=np.int64)
    px = block_pmf(src, n).probs.ravel()
    lik = np.ones((1, 1))
    for _ in range(n):
        lik = np.kron(lik, ch.matrix)
    weight = px[:, None] * lik  # (|X|^n, |Z|^n)
    zc = window_codes(zs, nz, k)
    yc = window_codes(ys, int(round(nyw ** (1.0 / (2 * k + 1)))), k)
    table = np.zeros(shape)
    npos = n - 2 * k
    for j in range(npos):
        onehot = (xs[:, k + j][:, None] == np.arange(nx)).astype(float)
        per_z = onehot.T @ weight  # (nx, |Z|^n)
        cell = zc[:, j] * nyw + yc[:, j]
        for a in range(nx):
            table[a] += np.bincount(cell, weights=per_z[a], minlength=nzw * nyw).reshape(nzw, nyw)
    return table / npos


# ---------------------------------------------------------------------------
# Markov-violation and convergence checks


@dataclass(frozen=True)
class MarkovViolation:
    max_tv: float
    mass_weighted_tv: float
    bound: float
    delta_k: float


def _window_arrays(codes, base, w):
    return np.stack(np.unravel_index(codes, (base,) * w), axis=1).astype(np.int64)


def markov_violation(q: ExpectedEmpirical, src, ch: Channel, delta: Optional[float] = None,
                     w: int = 6) -> MarkovViolation:
    """Distance of Q_{X_0|z,y} from the window posterior P_{X_0|z} and the |X| delta_k bound.

    ``delta`` defaults to the exhaustive-tail estimate with extension ``w``.
    """
    k = q.k
    nx, nz = ch.matrix.shape
    length = 2 * k + 1
    if delta is None:
        if isinstance(src, IidSource):
            delta = 0.0
        else:
            delta = mixing_coefficient(src, ch, k, w=w, exhaustive=True).delta_k
    probs = q.probs
    mass = probs.sum(axis=0)
    zi, yi = np.nonzero(mass > 0)
    if zi.size == 0:
        return MarkovViolation(0.0, 0.0, nx * delta, delta)
    uniq, inv = np.unique(zi, return_inverse=True)
    post = center_posteriors(src, ch, _window_arrays(uniq, nz, length))[inv]
    cond = probs[:, zi, yi].T / mass[zi, yi][:, None]
    tv = 0.5 * np.abs(cond - post).sum(axis=1)
    m = mass[zi, yi]
    return MarkovViolation(float(tv.max()), float(m @ tv / m.sum()), nx * delta, float(delta))


def convergence_gap(q: ExpectedEmpirical, src, ch: Channel, k: Optional[int] = None) -> float:
    """TV between the (Z-window, Y-window) marginal of Q^(n) and P_{Z-window, X-window}."""
    k = q.k if k is None else k
    if k != q.k:
        raise ValidationError("window radius disagrees with the table")
    exact = block_joint(src, ch, 2 * k + 1)
    got = q.zy_marginal()
    if got.shape != exact.shape:
        raise ValidationError("reconstruction alphabet must equal the source alphabet")
    return tv_distance(got, exact)


# ---------------------------------------------------------------------------
# Denoisers and posterior-based baselines


def bayes_denoiser(src, ch: Channel, z, loss: LossSpec) -> SamplePath:
    """Per-index argmin_y sum_x P(X_i = x | z) loss(x, y); ties go to the lowest y."""
    post = smooth_batch(src, ch, as_symbols(z)[None, :])[0]
    return SamplePath(np.argmin(post @ loss.table, axis=1))


def max_coupling_loss(p, table) -> float:
    """sup over couplings of (U, V) with both marginals ``p`` of E loss(U, V)."""
    p = np.asarray(p, dtype=float)
    s = p.size
    if s == 2:
        a = p[1]
        c = min(a, 1.0 - a)
        t = table
        stay = (1 - a) * t[0, 0] + a * t[1, 1]
        swap = (1 - a - c) * t[0, 0] + c * (t[0, 1] + t[1, 0]) + (a - c) * t[1, 1]
        return float(max(stay, swap))
    a_eq = np.zeros((2 * s, s * s))
    for i in range(s):
        a_eq[i, i * s:(i + 1) * s] = 1.0
        a_eq[s + i, i::s] = 1.0
    res = linprog(-np.asarray(table, float).ravel(), A_eq=a_eq, b_eq=np.concatenate([p, p]),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise ValidationError(f"coupling LP failed: {res.message}")
    return float(-res.fun)


def _coupling_bounds(post, loss: LossSpec):
    if loss.is_hamming:
        return np.minimum(1.0, 2.0 * (1.0 - post.max(axis=1)))
    keys, inv = np.unique(np.round(post, 12), axis=0, return_inverse=True)
    vals = np.array([max_coupling_loss(k / k.sum(), loss.table) for k in keys])
    return vals[np.ravel(inv)]


@dataclass(frozen=True)
class LossStatistics:
    """Posterior-based losses averaged over observations (with standard errors)."""

    bayes: float
    pair: float
    upper: float
    bayes_se: float
    pair_se: float
    upper_se: float
    radius: int


def posterior_loss_statistics(src, ch: Channel, loss: LossSpec, trials: int = 32,
                              seed: int = 0, length: int = 4096, radius: Optional[int] = None,
                              threads: int = 1) -> LossStatistics:
    """Monte Carlo over Z of the Bayes, posterior-pair and worst-coupling losses.

    Each trial smooths a fresh length-``length`` observation and keeps only
    positions at least ``radius`` from both ends, where ``radius`` is the
    smallest window with estimated delta < 1e-6 unless given.
    """
    if radius is None:
        radius = posterior_radius(src, ch)
    if length <= 2 * radius:
        raise ValidationError("sequence too short for the posterior radius")
    table = loss.table

    def one(t, rng):
        xs = sample_paths(src, length, 1, rng)
        zs = pass_through(ch, xs, rng)
        post = smooth_batch(src, ch, zs)[0][radius:length - radius]
        pair = np.einsum("ix,xy,iy->i", post, table, post)
        bayes = (post @ table).min(axis=1)
        upper = _coupling_bounds(post, loss)
        return bayes.mean(), pair.mean(), upper.mean()

    vals = np.array(map_trials(one, trials, seed, threads))
    mean = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(trials) if trials > 1 else np.full(3, np.nan)
    return LossStatistics(*mean, *se, radius)


def theoretical_pair_loss(src, ch: Channel, loss: LossSpec, trials: int = 32, seed: int = 0,
                          **kwargs) -> float:
    """E_Z sum_{u,v} pi(u|Z) pi(v|Z) loss(u, v): the loss of compression-based denoising."""
    return posterior_loss_statistics(src, ch, loss, trials, seed, **kwargs).pair


def coupling_upper_bound(src, ch: Channel, loss: LossSpec, trials: int = 32, seed: int = 0,
                         **kwargs) -> float:
    """E_Z of the worst-case coupling loss of the posterior with itself."""
    return posterior_loss_statistics(src, ch, loss, trials, seed, **kwargs).upper


def hamming_envelopes(alpha):
    """``(phi, F, 2 phi)`` for a binary posterior P(X=1|Z) = alpha."""
    a = np.asarray(alpha, dtype=float)
    phi = np.minimum(a, 1.0 - a)
    return phi, 2.0 * a * (1.0 - a), 2.0 * phi


# ---------------------------------------------------------------------------
# Erasure example


@dataclass(frozen=True)
class ErasureLosses:
    bayes_loss: float
    denoiser_loss: float
    terms_used: int


def erasure_closed_forms(p_s: float, p_e: float, truncation_tol: float = 1e-12) -> ErasureLosses:
    """Bayes and compression-denoiser Hamming losses for the binary symmetric chain over a BEC.

    The double sum is cut to s, t < N with N the smallest size whose
    remaining mass bound, (1 - (1 - p_e^N)^2) / 2, is below the tolerance.
    ``p_s = 1/2`` (q = 0) is accepted as the memoryless limit.
    """
    if not 0.0 < p_s <= 0.5:
        raise ValidationError("p_s must lie in (0, 1/2]")
    if not 0.0 <= p_e < 1.0:
        raise ValidationError("p_e must lie in [0, 1)")
    q = 1.0 - 2.0 * p_s
    bayes = p_e * p_s / (1.0 - p_e**2 * q)
    size = 1
    while 0.5 * (1.0 - (1.0 - p_e**size) ** 2) >= truncation_tol:
        size += 1
    idx = np.arange(size, dtype=float)
    s, t = idx[:, None], idx[None, :]
    a = np.power(q, 2.0 * (t + 1.0))
    b = np.power(q, 2.0 * s)  # numpy gives 0.0**0 == 1, the q -> 0 limit
    terms = np.power(p_e, s + t) * (1.0 - a) * (1.0 - b) / (1.0 - a * b)
    loss = 0.5 * (1.0 - p_e) ** 2 * terms.sum()
    return ErasureLosses(float(bayes), float(loss), size * size)


def erasure_setup(p_s: float, p_e: float):
    return MarkovSource.binary_symmetric(p_s), bec(p_e)


# ---------------------------------------------------------------------------
# Experiments and figure tables


@dataclass(frozen=True)
class ExperimentResult:
    mean_loss: float
    std_err: float
    theoretical_loss: float
    bayes_loss: float
    upper_bound: float
    realized_distortion: float
    rate: float


def denoise_trials(src, ch: Channel, code, loss: LossSpec, n: int, trials: int, seed: int,
                   dist=None, threads: int = 1):
    """Per-trial ``(realized_distortion, realized_loss)`` of a code used as a denoiser.

    Distortion is the block matched distortion when ``dist`` is given, else NaN.
    """
    f = as_code(code, dist)
    rho = None if dist is None else np.asarray(getattr(dist, "values", dist), float)
    stochastic = getattr(code, "deterministic", True) is False

    def one(t, rng):
        xs = sample_paths(src, n, 1, rng)
        zs = pass_through(ch, xs, rng)
        ys = f(zs, rng) if stochastic else None
        return xs[0], zs[0], ys

    draws = map_trials(one, trials, seed, threads, stream=1)
    xs = np.stack([d[0] for d in draws])
    zs = np.stack([d[1] for d in draws])
    ys = np.stack([d[2][0] for d in draws]) if stochastic else f(zs, None)
    dist_col = rho[zs, ys].mean(axis=1) if rho is not None else np.full(trials, math.nan)
    loss_col = loss.table[xs, ys].mean(axis=1)
    return np.column_stack([dist_col, loss_col])


def _mean_se(v):
    v = np.asarray(v, float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
    return float(v.mean()), se


def posterior_denoiser_loss(src, ch: Channel, loss: LossSpec, n: int, trials: int, seed: int,
                            threads: int = 1):
    """``(mean, std_err)`` Hamming-style loss of the posterior-sampling denoiser."""
    res = denoise_trials(src, ch, PosteriorSampler(src, ch), loss, n, trials, seed, threads=threads)
    return _mean_se(res[:, 1])


@dataclass(frozen=True)
class FigureConfig:
    p_s: float = 0.1
    p_e: float = 0.5
    n: int = 2048
    trials: int = 16
    seed: int = 0
    threads: int = 1


@dataclass(frozen=True)
class Table:
    columns: tuple
    rows: np.ndarray

    def to_csv(self) -> str:
        lines = [",".join(self.columns)]
        for row in np.atleast_2d(self.rows):
            lines.append(",".join(format_value(v) for v in row))
        return "\n".join(lines) + "\n"


def format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


FIGURE_COLUMNS = ("parameter", "bayes", "compression_denoiser_theoretical",
                  "compression_denoiser_empirical", "upper_bound")


def figure_data(which: str, grid, config: Optional[FigureConfig] = None) -> Table:
    """Rows of (parameter, bayes, theoretical, empirical, upper bound) over ``grid``.

    ``bsc_hamming`` tabulates phi, F, 2 phi against alpha, with the empirical
    column a Monte Carlo estimate of P(U != V) for independent U, V ~ Bern(alpha).
    The erasure tables vary p_e (at ``config.p_s``) or p_s (at ``config.p_e``);
    their empirical column is the posterior-sampling denoiser's measured loss.
    """
    cfg = config or FigureConfig()
    grid = np.asarray(grid, dtype=float)
    rows = []
    if which == "bsc_hamming":
        if np.any((grid < 0) | (grid > 1)):
            raise ValidationError("alpha grid must lie in [0, 1]")
        phi, f, upper = hamming_envelopes(grid)
        for i, a in enumerate(grid):
            rng = make_rng(cfg.seed, 2, i)
            draws = rng.random((2, cfg.trials * 1024)) < a
            emp = float(np.mean(draws[0] != draws[1]))
            rows.append((a, phi[i], f[i], emp, upper[i]))
    elif which in ("erasure_vs_pe", "erasure_vs_ps"):
        loss = LossSpec.hamming(2)
        for i, v in enumerate(grid):
            p_s, p_e = (cfg.p_s, v) if which == "erasure_vs_pe" else (v, cfg.p_e)
            forms = erasure_closed_forms(p_s, p_e)
            src, ch = erasure_setup(p_s, p_e)
            emp, _ = posterior_denoiser_loss(src, ch, loss, cfg.n, cfg.trials, cfg.seed + i,
                                             cfg.threads)
            rows.append((v, forms.bayes_loss, forms.denoiser_loss, emp, 2.0 * forms.bayes_loss))
    else:
        raise ValidationError(f"unknown figure {which!r}")
    return Table(FIGURE_COLUMNS, np.array(rows, dtype=float).reshape(-1, 5))


def random_code_experiment(src, ch: Channel, loss: LossSpec, n: int, rate_nats: float,
                           trials: int, seed: int, threads: int = 1):
    """Product random codebook at ``rate_nats`` used as a denoiser.

    Returns ``(code, per_trial)`` with per-trial rows (distortion, loss).
    """
    dist = matched_distortion(ch)
    code = product_codebook(src, n, rate_nats, seed)
    return code, denoise_trials(src, ch, code, loss, n, trials, seed, dist=dist, threads=threads)


__all__ = [
    "LossSpec",
    "EmpiricalJoint",
    "ExpectedEmpirical",
    "ExperimentResult",
    "ErasureLosses",
    "LossStatistics",
    "MarkovViolation",
    "FigureConfig",
    "Table",
    "PosteriorSampler",
    "as_code",
    "block_loss",
    "window_codes",
    "empirical_joint",
    "expected_empirical",
    "markov_violation",
    "convergence_gap",
    "bayes_denoiser",
    "max_coupling_loss",
    "posterior_loss_statistics",
    "theoretical_pair_loss",
    "coupling_upper_bound",
    "hamming_envelopes",
    "erasure_closed_forms",
    "erasure_setup",
    "denoise_trials",
    "posterior_denoiser_loss",
    "figure_data",
    "random_code_experiment",
    "format_value",
]
