"""Rate-distortion machinery built around the Blahut-Arimoto iteration.

Rates are in nats per (super-)symbol unless a name says otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .exceptions import BudgetExceededError, InfeasibleError, ValidationError
from .probcore import (
    Channel,
    DistortionMatrix,
    Pmf,
    channel_rank_class,
    conditional_entropy,
    entropy,
    matched_distortion,
    to_bits,
    tv_distance,
)
from .sources import block_pmf, chain_of

SUPER_BUDGET = 4096
MONOTONE_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class RdPoint:
    rate: float
    distortion: float
    conditional: np.ndarray
    beta: float
    output_law: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def rate_bits(self) -> float:
        return to_bits(self.rate)

    def recompute(self, source_law, dist) -> tuple:
        """``(rate, distortion)`` evaluated afresh from the stored conditional."""
        return _rate_and_distortion(np.asarray(source_law, float), self.conditional, _values(dist))


def _values(dist):
    return np.asarray(getattr(dist, "values", getattr(dist, "d", dist)), dtype=float)


def _rate_and_distortion(p, q, d):
    r = p @ q
    mask = (q > 0) & (p[:, None] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mask, q * np.log(q / r[None, :]), 0.0)
        dterm = np.where(mask, q * d, 0.0)
    rate = float(max(0.0, p @ terms.sum(axis=1)))
    distortion = float(p @ dterm.sum(axis=1))
    return rate, distortion


def _log_kernel(d, beta):
    with np.errstate(invalid="ignore"):
        lk = -beta * d
    lk[np.isinf(d)] = -np.inf
    return lk


def _zero_rate_point(p, d):
    """Best constant reproduction; None when no column is finite on the support of p."""
    sup = p > 0
    with np.errstate(invalid="ignore"):
        cost = np.where(sup[:, None], d, 0.0)
    expected = p @ np.where(np.isinf(cost), np.inf, cost)
    y = int(np.argmin(expected))
    if not np.isfinite(expected[y]):
        return None
    q = np.zeros_like(d)
    q[:, y] = 1.0
    return RdPoint(0.0, float(expected[y]), q, 0.0, q[0].copy(), 0)


def blahut_arimoto(source_law, dist, beta: float, tol: float = 1e-10, max_iter: int = 100_000,
                   init_output=None, check_monotone: bool = True) -> RdPoint:
    """Blahut-Arimoto point on the rate-distortion curve for slope parameter ``beta``.

    Parameters
    ----------
    source_law : array-like, shape (n_z,)
        Law of the symbol (or super-symbol) being compressed.
    dist : DistortionMatrix or array, shape (n_z, n_y)
        Distortion table; ``inf`` cells receive zero conditional mass.
    beta : float
        Non-negative Lagrange multiplier.
    tol : float
        Stop when the relative change in rate between sweeps is below ``tol``.

    Returns
    -------
    RdPoint
    """
    p = np.asarray(source_law, dtype=float)
    d = _values(dist)
    if d.shape[0] != p.size:
        raise ValidationError("source law and distortion rows disagree")
    if beta < 0:
        raise ValidationError("beta must be non-negative")
    if np.any(np.all(np.isinf(d[p > 0]), axis=1)):
        raise InfeasibleError("some source symbol has no finite-distortion reproduction")
    if beta == 0:
        pt = _zero_rate_point(p, d)
        if pt is not None:
            return pt
    lk = _log_kernel(d, beta)
    n_y = d.shape[1]
    r = np.full(n_y, 1.0 / n_y) if init_output is None else np.asarray(init_output, float).copy()
    r = np.clip(r, 1e-300, None)
    r /= r.sum()
    prev_obj = math.inf
    prev_rate = math.inf
    rate = dist_val = 0.0
    q = None
    it = 0
    for it in range(1, int(max_iter) + 1):
        with np.errstate(divide="ignore"):
            logq = np.log(r)[None, :] + lk
        logq -= logsumexp(logq, axis=1, keepdims=True)
        q = np.exp(logq)
        r = p @ q
        rate, dist_val = _rate_and_distortion(p, q, d)
        obj = rate + beta * dist_val
        if check_monotone and obj > prev_obj + MONOTONE_SLACK * max(1.0, abs(prev_obj)):
            raise AssertionError(f"BA objective increased at sweep {it}: {prev_obj!r} -> {obj!r}")
        if abs(rate - prev_rate) <= tol * max(rate, 1e-4):
            break
        prev_obj, prev_rate = obj, rate
    return RdPoint(rate, dist_val, q, float(beta), r, it)


def rd_at_distortion(source_law, dist, target: float, tol: float = 1e-10,
                     max_iter: int = 100_000, xtol: float = 1e-12) -> RdPoint:
    """Point of the rate-distortion curve at distortion ``target``.

    ``beta`` is found by bisection on the converged BA distortion, with the
    output law warm-started between evaluations.

    Raises
    ------
    InfeasibleError
        If ``target`` is below the minimum achievable distortion.
    """
    p = np.asarray(source_law, dtype=float)
    d = _values(dist)
    with np.errstate(invalid="ignore"):
        d_min = float(p @ np.where(p[:, None] > 0, d, 0.0).min(axis=1))
    if target < d_min - 1e-12:
        raise InfeasibleError(f"target {target:.6g} below minimum distortion {d_min:.6g}")
    top = _zero_rate_point(p, d)
    if top is not None and target >= top.distortion:
        return top
    state = {"r": None}

    def run(beta):
        pt = blahut_arimoto(p, d, beta, tol=tol, max_iter=max_iter, init_output=state["r"])
        if beta > 0:
            state["r"] = pt.output_law
        return pt

    dtol = xtol * max(1.0, abs(target))
    lo, hi = 0.0, 1.0
    best = run(hi)
    while best.distortion > target + dtol:
        lo, hi = hi, hi * 2.0
        if hi > 1e8:
            raise InfeasibleError("could not bracket the target distortion")
        best = run(hi)
    while abs(best.distortion - target) > dtol and hi - lo > xtol * hi:
        mid = 0.5 * (lo + hi)
        pt = run(mid)
        if pt.distortion > target:
            lo = mid
        else:
            hi = mid
        if abs(pt.distortion - target) < abs(best.distortion - target):
            best = pt
    return best


# ---------------------------------------------------------------------------
# Block (super-alphabet) constructions


def block_joint(src, ch: Channel, k: int) -> np.ndarray:
    """Exact ``P(Z^k = z^k, X^k = x^k)`` as a (|Z|^k, |X|^k) matrix (row-major words)."""
    px = block_pmf(src, k).probs
    n_x, n_z = ch.matrix.shape
    operands = [px, list(range(k))]
    for i in range(k):
        operands += [ch.matrix, [i, k + i]]
    table = np.einsum(*operands, list(range(k, 2 * k)) + list(range(k)))
    return table.reshape(n_z**k, n_x**k)


def block_distortion(dist, k: int) -> np.ndarray:
    """Per-letter averaged block distortion (1/k) sum_i rho(z_i, y_i)."""
    rho = _values(dist)
    acc = rho
    for _ in range(1, k):
        acc = (acc[:, None, :, None] + rho[None, :, None, :]).reshape(
            acc.shape[0] * rho.shape[0], acc.shape[1] * rho.shape[1])
    return acc / k


@dataclass(frozen=True, eq=False)
class IdentityReport:
    k: int
    distortion: float
    lhs_rate: float
    rhs_rate: float
    point: RdPoint = field(repr=False)

    @property
    def gap(self) -> float:
        return abs(self.lhs_rate - self.rhs_rate)

    @property
    def gap_bits(self) -> float:
        return to_bits(self.gap)


def _super_setup(src, ch: Channel, k: int):
    if ch.n_outputs**k > SUPER_BUDGET or ch.n_inputs**k > SUPER_BUDGET:
        raise BudgetExceededError(f"super-alphabet exceeds {SUPER_BUDGET} symbols at k={k}")
    joint = block_joint(src, ch, k)
    pz = joint.sum(axis=1)
    rho_k = block_distortion(matched_distortion(ch), k)
    level = conditional_entropy(ch, src.stationary.probs)
    return joint, pz, rho_k, level


def matched_level_identity_check(src, ch: Channel, k: int, tol: float = 1e-12) -> IdentityReport:
    """Compare the BA rate at D = H(Z|X) with (1/k) H(Z^k) - H(Z|X)."""
    joint, pz, rho_k, level = _super_setup(src, ch, k)
    pt = rd_at_distortion(pz, rho_k, level, tol=tol)
    return IdentityReport(k, level, pt.rate / k, entropy(pz) / k - level, pt)


@dataclass(frozen=True)
class AchieverReport:
    k: int
    rank_class: str
    checked: bool
    tv_gap: float = math.nan
    warning: str = ""


def achiever_is_posterior_check(src, ch: Channel, k: int, tol: float = 1e-12,
                                point: Optional[RdPoint] = None) -> AchieverReport:
    """TV distance between the BA-optimal joint of (Z^k, Y^k) and the exact joint of (Z^k, X^k)."""
    rank = channel_rank_class(ch)
    if rank == "deficient":
        msg = "channel matrix is rank deficient; the achiever need not be unique"
        warnings.warn(msg)
        return AchieverReport(k, rank, False, math.nan, msg)
    joint, pz, rho_k, level = _super_setup(src, ch, k)
    if point is None:
        point = rd_at_distortion(pz, rho_k, level, tol=tol)
    ba_joint = pz[:, None] * point.conditional
    return AchieverReport(k, rank, True, tv_distance(ba_joint, joint))


# ---------------------------------------------------------------------------
# Indirect rate distortion


@dataclass(frozen=True, eq=False)
class IndirectDistortion:
    """d(z, y) = E[loss(X, y) | Z = z]; rows of unobservable z are NaN."""

    d: np.ndarray
    channel: Channel = field(repr=False)
    prior: np.ndarray = field(repr=False)
    loss: np.ndarray = field(repr=False)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(self.d).any(axis=1)

    @property
    def observation_law(self) -> np.ndarray:
        return self.prior @ self.channel.matrix


def witsenhausen_reduce(ch: Channel, prior, loss) -> IndirectDistortion:
    """Reduce indirect compression under ``loss`` to direct compression of Z."""
    prior = np.asarray(prior, dtype=float)
    loss = np.asarray(loss, dtype=float)
    if prior.shape != (ch.n_inputs,) or loss.shape[0] != ch.n_inputs:
        raise ValidationError("prior, channel and loss dimensions disagree")
    post = ch.posterior(prior)  # (Z, X)
    d = post @ loss
    missing = np.isnan(post).any(axis=1)
    if np.any(missing):
        warnings.warn(f"observations {np.flatnonzero(missing).tolist()} have zero probability; excluded")
        d[missing] = np.nan
    return IndirectDistortion(d, ch, prior, loss)


def indirect_rd_curve(reduced: IndirectDistortion, observation_law, losses) -> list:
    """Rate-distortion points of the reduced problem at each target loss."""
    pz = np.asarray(observation_law, dtype=float)
    keep = reduced.observed & (pz > 0)
    d = reduced.d[keep]
    p = pz[keep] / pz[keep].sum()
    out = []
    for target in losses:
        out.append(rd_at_distortion(p, d, float(target)))
    return out


@dataclass(frozen=True, eq=False)
class AffinityReport:
    affine: bool
    c1: float
    c2: np.ndarray
    residual: float
    identifiable: bool = True
    note: str = ""


def rho_affinity_test(dist, reduced, tol: float = 1e-9) -> AffinityReport:
    """Decide whether rho(z, y) = c1 d(z, y) + c2(z) on the observed rows."""
    rho = _values(dist)
    d = np.asarray(getattr(reduced, "d", reduced), dtype=float)
    rows = ~np.isnan(d).any(axis=1)
    rho, d = rho[rows], d[rows]
    if np.any(np.isinf(rho)):
        bad = np.flatnonzero(np.isinf(rho).any(axis=1)).tolist()
        return AffinityReport(False, math.nan, np.full(rho.shape[0], math.nan), math.inf,
                              note=f"rows {bad} contain infinite distortion; no finite affine map exists")
    a = (d - d[:, :1]).ravel()
    b = (rho - rho[:, :1]).ravel()
    if np.max(np.abs(a)) <= tol:
        resid = float(np.max(np.abs(b)))
        c2 = rho.mean(axis=1)
        return AffinityReport(resid <= tol, math.nan, c2, resid, False,
                              "d is constant within rows; c1 is unidentifiable")
    c1 = float(a @ b / (a @ a))
    resid = float(np.max(np.abs(b - c1 * a)))
    c2 = (rho - c1 * d).mean(axis=1)
    return AffinityReport(resid <= tol * max(1.0, float(np.max(np.abs(b)))), c1, c2, resid)


@dataclass(frozen=True)
class RdpReport:
    satisfied: bool
    beta: float
    residual: float
    note: str = ""


def rdp_exponential_form_test(candidate, reduced: IndirectDistortion, output_law,
                              tol: float = 1e-9) -> RdpReport:
    """Check whether ``candidate`` P(Y|Z) has the exponential form optimal under perfect perception.

    Tests that ln(candidate(y|z) / output_law(y)) + beta d(z, y) splits as
    A(y) + B(z) for some beta >= 0 on the supported cells.

    Raises
    ------
    ValidationError
        If ``candidate`` does not reproduce ``output_law`` from the observation law.
    """
    q = np.asarray(candidate, dtype=float)
    r = np.asarray(output_law, dtype=float)
    pz = reduced.observation_law
    rows = reduced.observed & (pz > 0)
    if np.any(np.abs(q.sum(axis=1) - 1.0) > 1e-9) or np.any(q < 0):
        raise ValidationError("candidate rows must be pmfs")
    if np.max(np.abs(pz @ q - r)) > 1e-9:
        raise ValidationError("candidate violates the perfect perception constraint")
    q, d = q[rows], reduced.d[rows]
    cols = r > 0
    q, d, r = q[:, cols], d[:, cols], r[cols]
    support = q > 0
    if not np.all(support | np.isinf(d)):
        return RdpReport(False, math.nan, math.inf, "zero conditional mass where the output law is positive")
    with np.errstate(divide="ignore"):
        g = np.log(q / r[None, :])
    if np.all(support):
        cg = g - g.mean(axis=0) - g.mean(axis=1, keepdims=True) + g.mean()
        cd = d - d.mean(axis=0) - d.mean(axis=1, keepdims=True) + d.mean()
        denom = float((cd * cd).sum())
        beta = -float((cg * cd).sum()) / denom if denom > 0 else 0.0
        resid = float(np.max(np.abs(cg + beta * cd)))
    else:
        zi, yi = np.nonzero(support)
        n_z, n_y = q.shape
        design = np.zeros((zi.size, n_z + n_y + 1))
        design[np.arange(zi.size), zi] = 1.0
        design[np.arange(zi.size), n_z + yi] = 1.0
        design[:, -1] = -d[zi, yi]
        sol = np.linalg.lstsq(design, g[zi, yi], rcond=None)[0]
        beta = float(sol[-1])
        resid = float(np.max(np.abs(design @ sol - g[zi, yi])))
    ok = resid < tol and beta >= -tol
    note = "" if ok or resid >= tol else "separable only with negative beta"
    return RdpReport(bool(ok), beta, resid, note)


# ---------------------------------------------------------------------------
# Scalar Gaussian source through an AWGN channel (closed forms)


@dataclass(frozen=True)
class GaussianReport:
    gamma: float
    compress_rate: float
    compress_loss: float
    indirect_rate_at_L: float
    indirect_loss_at_R: float

    @property
    def rdp_point(self) -> tuple:
        """(rate, loss) of the compression-based denoiser, which sits on the perfect-perception curve."""
        return (self.compress_rate, self.compress_loss)

    @property
    def compress_rate_bits(self) -> float:
        return to_bits(self.compress_rate)

    @property
    def indirect_rate_at_L_bits(self) -> float:
        return to_bits(self.indirect_rate_at_L)


def gaussian_indirect_rate(gamma: float, loss: float) -> float:
    """Indirect rate (nats) for MSE ``loss`` with X ~ N(0,1), Z = sqrt(gamma) X + N(0,1)."""
    floor = 1.0 / (1.0 + gamma)
    if loss <= floor:
        raise InfeasibleError(f"loss must exceed the MMSE {floor:.6g}")
    return max(0.0, 0.5 * math.log(gamma / ((1.0 + gamma) * loss - 1.0)))


def gaussian_example(gamma: float) -> GaussianReport:
    if gamma <= 0:
        raise ValidationError("gamma must be positive")
    compress_loss = 2.0 / (1.0 + gamma)
    compress_rate = 0.5 * math.log1p(gamma)
    return GaussianReport(
        gamma=gamma,
        compress_rate=compress_rate,
        compress_loss=compress_loss,
        indirect_rate_at_L=gaussian_indirect_rate(gamma, compress_loss),
        indirect_loss_at_R=(1.0 + 2.0 * gamma) / (1.0 + gamma) ** 2,
    )


# ---------------------------------------------------------------------------
# Matched-level rate of the whole observation process


def observation_block_law(src, ch: Channel, k: int) -> np.ndarray:
    """Exact ``P(Z^k)`` as a vector over row-major words."""
    pi, m = chain_of(src)
    n_z = ch.n_outputs
    if n_z**k > 2**20:
        raise BudgetExceededError(f"|Z|^k = {n_z}^{k} exceeds {2**20}")
    a = pi[None, :, None] * ch.matrix[None, :, :]  # (words, x, z)
    a = a.transpose(0, 2, 1).reshape(n_z, -1)
    for _ in range(1, k):
        a = np.einsum("wx,xy,yz->wzy", a, m, ch.matrix).reshape(-1, m.shape[0])
    return a.sum(axis=1)


def matched_rate(src, ch: Channel, k_max: int = 12) -> float:
    """Rate at the matched level for long blocks: H(Z) entropy rate minus H(Z|X).

    The entropy rate is approximated from above by H(Z^k) - H(Z^{k-1}) at the
    largest ``k <= k_max`` with |Z|^k <= 2^14 (exact for memoryless sources).
    """
    level = conditional_entropy(ch, src.stationary.probs)
    if np.allclose(src.transition, src.transition[0]):
        return entropy(src.stationary.probs @ ch.matrix) - level
    k = 1
    while k < k_max and ch.n_outputs ** (k + 1) <= 2**14:
        k += 1
    h = entropy(observation_block_law(src, ch, k)) - entropy(observation_block_law(src, ch, k - 1))
    return max(0.0, h - level)

__all__ = [
    "RdPoint",
    "blahut_arimoto",
    "rd_at_distortion",
    "block_joint",
    "block_distortion",
    "IdentityReport",
    "matched_level_identity_check",
    "AchieverReport",
    "achiever_is_posterior_check",
    "IndirectDistortion",
    "witsenhausen_reduce",
    "indirect_rd_curve",
    "AffinityReport",
    "rho_affinity_test",
    "RdpReport",
    "rdp_exponential_form_test",
    "GaussianReport",
    "gaussian_example",
    "gaussian_indirect_rate",
    "observation_block_law",
    "matched_rate",
]
