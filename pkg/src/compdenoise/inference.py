"""Exact posterior inference for a Markov source seen through a memoryless channel."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import BudgetExceededError, ModelMismatchError, ValidationError
from .probcore import Channel, Pmf
from .sources import (
    IidSource,
    SamplePath,
    as_symbols,
    chain_of,
    make_rng,
    pass_through,
    sample_paths,
)

WINDOW_BUDGET = 2**20
ERASURE = 2


@dataclass(frozen=True, eq=False)
class PosteriorMarginals:
    """Row ``i`` is P(X_i = . | Z^n = z^n)."""

    probs: np.ndarray

    def __len__(self):
        return self.probs.shape[0]

    def __getitem__(self, i) -> Pmf:
        return Pmf(self.probs[i])


@dataclass(frozen=True)
class MixingEstimate:
    k: int
    delta_k: float
    extension_window: int
    tails_sampled: int
    exhaustive: bool = False


def _likelihoods(ch: Channel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.int64)
    if z.size and (z.min() < 0 or z.max() >= ch.n_outputs):
        raise ValidationError("observation symbol outside the channel output alphabet")
    return ch.matrix.T[z]  # (..., n, S)


def forward_filter(pi, m, lik):
    """Normalised filtering distributions for a batch ``lik`` of shape (B, n, S).

    Returns ``(alpha, log_evidence)``; alpha[b, t] = P(X_t | z_1..z_t).
    """
    b, n, s = lik.shape
    alpha = np.empty_like(lik)
    logev = np.zeros(b)
    a = pi[None, :] * lik[:, 0]
    for t in range(n):
        if t:
            a = (alpha[:, t - 1] @ m) * lik[:, t]
        c = a.sum(axis=1)
        if np.any(c <= 0):
            raise ModelMismatchError(f"observation has zero likelihood at index {t}")
        alpha[:, t] = a / c[:, None]
        logev += np.log(c)
    return alpha, logev


def backward_messages(m, lik):
    b, n, s = lik.shape
    beta = np.empty_like(lik)
    beta[:, n - 1] = 1.0
    for t in range(n - 2, -1, -1):
        v = (lik[:, t + 1] * beta[:, t + 1]) @ m.T
        beta[:, t] = v / v.sum(axis=1, keepdims=True)
    return beta


def smooth_batch(src, ch: Channel, zs: np.ndarray) -> np.ndarray:
    """Smoothed marginals for a batch of observation sequences, shape (B, n, S)."""
    pi, m = chain_of(src)
    lik = _likelihoods(ch, np.atleast_2d(zs))
    alpha, _ = forward_filter(pi, m, lik)
    beta = backward_messages(m, lik)
    post = alpha * beta
    return post / post.sum(axis=2, keepdims=True)


def forward_backward(src, ch: Channel, z) -> PosteriorMarginals:
    """Exact smoothed marginals P(X_i | Z^n = z).

    Raises
    ------
    ModelMismatchError
        If ``z`` has zero probability under the model.
    """
    z = as_symbols(z)
    return PosteriorMarginals(smooth_batch(src, ch, z[None, :])[0])


def _backward_sample(alpha, m, rng):
    """Draw X^n from the smoothing law given filtered ``alpha`` (B, n, S)."""
    b, n, s = alpha.shape
    out = np.empty((b, n), dtype=np.int64)
    u = rng.random((b, n))
    w = alpha[:, n - 1]
    out[:, n - 1] = _pick(w, u[:, n - 1])
    for t in range(n - 2, -1, -1):
        w = alpha[:, t] * m[:, out[:, t + 1]].T
        out[:, t] = _pick(w, u[:, t])
    return out


def _pick(weights, u):
    cdf = np.cumsum(weights, axis=1)
    cdf /= cdf[:, -1:]
    return np.minimum((u[:, None] >= cdf).sum(axis=1), weights.shape[1] - 1)


def posterior_samples(src, ch: Channel, z, size: int, rng) -> np.ndarray:
    """``size`` independent draws of X^n from P(X^n | Z^n = z), shape (size, n)."""
    pi, m = chain_of(src)
    lik = _likelihoods(ch, as_symbols(z)[None, :])
    alpha, _ = forward_filter(pi, m, lik)
    return _backward_sample(np.broadcast_to(alpha, (size,) + alpha.shape[1:]), m, rng)


def posterior_samples_batch(src, ch: Channel, zs: np.ndarray, rng) -> np.ndarray:
    """One posterior draw per row of ``zs`` (B, n)."""
    pi, m = chain_of(src)
    alpha, _ = forward_filter(pi, m, _likelihoods(ch, np.atleast_2d(zs)))
    return _backward_sample(alpha, m, rng)


def posterior_path_sample(src, ch: Channel, z, seed: int) -> SamplePath:
    """Exact draw of X^n from its posterior given ``z`` (forward filter, backward sampling)."""
    return SamplePath(posterior_samples(src, ch, z, 1, make_rng(seed))[0], seed)


def _window_operators(src, ch: Channel, windows: np.ndarray):
    """Per-window left/right transfer matrices around the center.

    For windows of length 2k+1 returns ``(left, right)`` with shapes (B, S, S):
    ``left[b, a, x] = P(z_{-k..0}, X_0 = x | X_{-k} = a)`` and
    ``right[b, x, c] = P(z_{1..k}, X_k = c | X_0 = x)``.
    """
    _, m = chain_of(src)
    windows = np.atleast_2d(windows)
    b, length = windows.shape
    if length % 2 != 1:
        raise ValidationError("window length must be odd (2k+1)")
    k = length // 2
    lik = _likelihoods(ch, windows)
    s = m.shape[0]
    left = np.einsum("ij,bj->bij", np.eye(s), lik[:, 0])
    for t in range(1, k + 1):
        left = (left @ m) * lik[:, t, None, :]
        left /= np.maximum(left.max(axis=(1, 2), keepdims=True), 1e-300)
    right = np.broadcast_to(np.eye(s), (b, s, s)).copy()
    for t in range(k + 1, length):
        right = (right @ m) * lik[:, t, None, :]
        right /= np.maximum(right.max(axis=(1, 2), keepdims=True), 1e-300)
    return left, right


def _combine(left, right, mu, nu):
    """Center posteriors for boundary law ``mu`` (.., S) and boundary likelihood ``nu``."""
    f = np.einsum("...a,...ax->...x", mu, left)
    g = np.einsum("...xc,...c->...x", right, nu)
    w = f * g
    tot = w.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return w / tot, tot[..., 0] > 0


def center_posteriors(src, ch: Channel, windows: np.ndarray) -> np.ndarray:
    """P(X_0 | window) for a batch of windows (B, 2k+1); stationary boundary."""
    pi, _ = chain_of(src)
    left, right = _window_operators(src, ch, windows)
    s = pi.size
    post, ok = _combine(left, right, np.broadcast_to(pi, (left.shape[0], s)),
                        np.ones((left.shape[0], s)))
    if not np.all(ok):
        raise ModelMismatchError("window has zero likelihood under the model")
    return post


def windowed_posterior(src, ch: Channel, window) -> Pmf:
    """Posterior of the center symbol given only ``window`` = z_{-k}^{k}."""
    return Pmf(center_posteriors(src, ch, as_symbols(window)[None, :])[0])


def erasure_posterior_closed_form(p_s: float, p_e: float, z, center=None) -> Pmf:
    """Posterior of X_0 for the binary symmetric chain behind an erasure channel.

    Only the nearest unerased observation on each side matters: with
    q = 1 - 2 p_s, T- = max{t <= 0: z_t observed}, T+ = min{t > 0: z_t observed},

        P(X_0 = x) ∝ (1 + (-1)^(x + z_-) q^(-T-)) (1 + (-1)^(x + z_+) q^(T+)).

    A side with no observation inside ``z`` contributes a constant factor.
    Erasures are symbol index 2.
    """
    if not (0.0 < p_s < 0.5) or not (0.0 <= p_e < 1.0):
        raise ValidationError("need p_s in (0, 1/2) and p_e in [0, 1)")
    z = as_symbols(z)
    c = z.size // 2 if center is None else int(center)
    q = 1.0 - 2.0 * p_s
    w = np.ones(2)
    sign = np.array([1.0, -1.0])
    past = np.flatnonzero(z[: c + 1] != ERASURE)
    if past.size:
        t_minus = past[-1] - c
        if t_minus == 0:
            out = np.zeros(2)
            out[z[c]] = 1.0
            return Pmf(out)
        zm = z[c + t_minus]
        w *= 1.0 + sign[(np.arange(2) + zm) % 2] * q ** (-t_minus)
    future = np.flatnonzero(z[c + 1:] != ERASURE)
    if future.size:
        t_plus = future[0] + 1
        zp = z[c + t_plus]
        w *= 1.0 + sign[(np.arange(2) + zp) % 2] * q**t_plus
    return Pmf(w / w.sum())


def _tail_summaries(src, ch: Channel, left_tails, right_tails):
    """Boundary law at X_{-k} from left tails and boundary likelihood at X_k from right tails."""
    pi, m = chain_of(src)
    s = pi.size
    if left_tails.shape[1]:
        alpha, _ = forward_filter(pi, m, _likelihoods(ch, left_tails))
        mu = alpha[:, -1] @ m
    else:
        mu = pi[None, :].copy()
    if right_tails.shape[1]:
        lik = _likelihoods(ch, right_tails)
        beta = backward_messages(m, lik)
        nu = (lik[:, 0] * beta[:, 0]) @ m.T
        nu /= nu.sum(axis=1, keepdims=True)
    else:
        nu = np.ones((1, s))
    return mu, nu


def _max_deviation(left, right, base, mu, nu, chunk=4096):
    """max over windows, tail pairs and x0 of |P(x0 | window, tails) - base|."""
    s = base.shape[1]
    if s == 2:
        # Center posterior odds factor into monotone functions of mu[0] and the
        # likelihood ratio nu[0]/nu[1], so extremes over all tail pairs sit at corners.
        i_mu = np.unique([np.argmin(mu[:, 0]), np.argmax(mu[:, 0])])
        ratio = nu[:, 0] / np.maximum(nu.sum(axis=1), 1e-300)
        i_nu = np.unique([np.argmin(ratio), np.argmax(ratio)])
        mu, nu = mu[i_mu], nu[i_nu]
    best = 0.0
    pairs = [(a, c) for a in range(mu.shape[0]) for c in range(nu.shape[0])]
    for start in range(0, left.shape[0], chunk):
        sl = slice(start, start + chunk)
        for a, c in pairs:
            post, ok = _combine(left[sl], right[sl], np.broadcast_to(mu[a], (left[sl].shape[0], s)),
                                np.broadcast_to(nu[c], (left[sl].shape[0], s)))
            if np.any(ok):
                best = max(best, float(np.max(np.abs(post[ok] - base[sl][ok]))))
    return best


def _all_windows(n_symbols: int, length: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n_symbols), repeat=length)), dtype=np.int64).reshape(-1, length)


def _feasible_windows(src, ch, windows):
    pi, m = chain_of(src)
    _, logev = _window_evidence(pi, m, _likelihoods(ch, windows))
    return windows[np.isfinite(logev)]


def _window_evidence(pi, m, lik):
    b, n, s = lik.shape
    a = pi[None, :] * lik[:, 0]
    logev = np.zeros(b)
    for t in range(n):
        if t:
            a = (a @ m) * lik[:, t]
        c = a.sum(axis=1)
        with np.errstate(divide="ignore"):
            logev += np.log(c)
        a = a / np.where(c > 0, c, 1.0)[:, None]
    return a, logev


def mixing_coefficient(src, ch: Channel, k: int, w: int | None = None, m: int = 512,
                       seed: int = 0, exhaustive: bool = False) -> MixingEstimate:
    """Estimate the double-sided mixing coefficient delta_k.

    Every positive-probability center window z_{-k}^{k} is enumerated. Its
    window-only posterior is compared with the posterior after appending
    ``w`` extra observations on each side. Left and right extensions are
    drawn independently (``m`` per side) from the stationary model and all
    left/right combinations are scored, or, with ``exhaustive=True``, every
    extension in Z^w is used. The result is a lower bound on delta_k.
    """
    if w is None:
        w = k + 16
    n_z = ch.n_outputs
    length = 2 * k + 1
    if n_z**length > WINDOW_BUDGET:
        raise BudgetExceededError(f"|Z|^(2k+1) = {n_z}^{length} exceeds {WINDOW_BUDGET}")
    if isinstance(src, IidSource):
        return MixingEstimate(k, 0.0, w, 0 if exhaustive else m, exhaustive)
    windows = _feasible_windows(src, ch, _all_windows(n_z, length))
    if exhaustive:
        if n_z**w > 2**16:
            raise BudgetExceededError(f"exhaustive tails: |Z|^w = {n_z}^{w} too large")
        tails = _feasible_windows(src, ch, _all_windows(n_z, w)) if w else np.zeros((1, 0), np.int64)
        left_tails = right_tails = tails
        sampled = tails.shape[0]
    else:
        rng = make_rng(seed, k)
        xs = sample_paths(src, w, 2 * m, rng) if w else np.zeros((2 * m, 0), np.int64)
        zs = pass_through(ch, xs, rng)
        left_tails, right_tails = zs[:m], zs[m:]
        sampled = m
    left, right = _window_operators(src, ch, windows)
    pi, _ = chain_of(src)
    s = pi.size
    base, _ = _combine(left, right, np.broadcast_to(pi, (left.shape[0], s)), np.ones((left.shape[0], s)))
    mu, nu = _tail_summaries(src, ch, left_tails, right_tails)
    delta = _max_deviation(left, right, base, mu, nu)
    return MixingEstimate(k, min(1.0, delta), w, sampled, exhaustive)


def sampled_mixing_coefficient(src, ch: Channel, k: int, w: int = 16, m: int = 64,
                               n_centers: int = 256, seed: int = 0) -> float:
    """Cheaper delta_k lower bound over sampled (not enumerated) center windows."""
    if isinstance(src, IidSource):
        return 0.0
    rng = make_rng(seed, 1_000_003, k)
    length = 2 * k + 1
    xs = sample_paths(src, length + 2 * w, n_centers + 2 * m, rng)
    zs = pass_through(ch, xs, rng)
    windows = zs[:n_centers, w:w + length]
    left_tails = zs[n_centers:n_centers + m, :w]
    right_tails = zs[n_centers + m:, w + length:]
    left, right = _window_operators(src, ch, windows)
    pi, _ = chain_of(src)
    s = pi.size
    base, _ = _combine(left, right, np.broadcast_to(pi, (left.shape[0], s)), np.ones((left.shape[0], s)))
    mu, nu = _tail_summaries(src, ch, left_tails, right_tails)
    return min(1.0, _max_deviation(left, right, base, mu, nu))


def posterior_radius(src, ch: Channel, tol: float = 1e-6, k_max: int = 32, seed: int = 0) -> int:
    """Smallest window radius whose estimated delta_k falls below ``tol`` (capped at ``k_max``)."""
    if isinstance(src, IidSource):
        return 0
    for k in range(k_max + 1):
        if sampled_mixing_coefficient(src, ch, k, seed=seed) < tol:
            return k
    return k_max


def mixing_decay(src, ch, k_max, extension=0, tails=512, seed=0):
    """``(ks, deltas, slope, r2)`` for the log-linear fit of delta_k over k = 0..k_max."""
    ks = np.arange(k_max + 1)
    deltas = np.array([mixing_coefficient(src, ch, int(k), w=extension or None, m=tails, seed=seed).delta_k
                       for k in ks])
    if np.any(deltas <= 0) or ks.size < 2:
        return ks, deltas, math.nan, math.nan
    y = np.log(deltas)
    slope, icept = np.polyfit(ks, y, 1)
    resid = y - (slope * ks + icept)
    ss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss if ss > 0 else 1.0
    return ks, deltas, float(slope), r2

__all__ = [
    "PosteriorMarginals",
    "MixingEstimate",
    "forward_backward",
    "smooth_batch",
    "posterior_path_sample",
    "posterior_samples",
    "posterior_samples_batch",
    "windowed_posterior",
    "center_posteriors",
    "erasure_posterior_closed_form",
    "mixing_coefficient",
    "sampled_mixing_coefficient",
    "posterior_radius",
    "mixing_decay",
]
