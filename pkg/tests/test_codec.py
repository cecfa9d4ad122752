from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from compdenoise.codec import (
    Codebook,
    ProductCode,
    encode,
    encode_many,
    goodness_report,
    optimal_small_code,
    posterior_sampling_denoiser,
    product_codebook,
    random_codebook,
)
from compdenoise.exceptions import BudgetExceededError, InfeasibleError, ValidationError
from compdenoise.inference import forward_backward
from compdenoise.probcore import LN2, bec, bsc, identity_channel, matched_distortion
from compdenoise.ratedist import block_joint
from compdenoise.sources import IidSource, MarkovSource, block_pmf, make_rng, pass_through, sample_path


def test_rate_zero_single_word(markov02):
    cb = random_codebook(markov02, 16, 0.0, seed=1)
    assert len(cb) == 1 and cb.rate == 0.0


def test_one_bit_per_symbol_count(markov02):
    cb = random_codebook(markov02, 8, LN2, seed=1)
    assert len(cb) == 256
    assert cb.rate == pytest.approx(LN2)


def test_budget(markov02):
    with pytest.raises(BudgetExceededError):
        random_codebook(markov02, 64, LN2, seed=0)


def test_codebook_rate_invariant():
    with pytest.raises(ValidationError):
        Codebook(np.zeros((4, 3), dtype=int), 3, 1.0)


def test_codeword_statistics_follow_source_law(markov02):
    cb = random_codebook(markov02, 3, math.log(40_000) / 3, seed=2)
    codes = cb.words @ np.array([4, 2, 1])
    freq = np.bincount(codes, minlength=8) / len(cb)
    exact = block_pmf(markov02, 3).probs.ravel()
    se = np.sqrt(exact * (1 - exact) / len(cb))
    assert np.all(np.abs(freq - exact) < 4 * se)


def test_tie_goes_to_lowest_index():
    d = matched_distortion(bsc(0.1))
    res = encode(Codebook.from_words([[0, 0], [1, 1]]), d, [0, 1])
    assert res.index == 0
    assert res.distortion == pytest.approx(0.5 * (-math.log(0.9) - math.log(0.1)))


def test_self_match_selected(markov02, bsc01):
    z = sample_path(markov02, 12, 5).symbols
    words = random_codebook(markov02, 12, 0.3, seed=3).words
    words = np.vstack([words, z])
    res = encode(Codebook.from_words(words), matched_distortion(bsc01), z)
    assert np.array_equal(res.y, z)
    assert res.distortion == pytest.approx(-math.log(0.9))


def test_matched_bsc_argmin_is_min_hamming(markov02, bsc01):
    cb = random_codebook(markov02, 20, 0.4, seed=4)
    zs = pass_through(bsc01, np.zeros((50, 20), dtype=int), make_rng(1))
    idx, _ = encode_many(cb, matched_distortion(bsc01), zs)
    ham = (zs[:, None, :] != cb.words[None, :, :]).sum(axis=2)
    np.testing.assert_array_equal(idx, np.argmin(ham, axis=1))


def test_encoding_distortion_recomputed_exactly(markov02, bsc01):
    cb = random_codebook(markov02, 10, 0.5, seed=6)
    d = matched_distortion(bsc01)
    z = sample_path(markov02, 10, 1).symbols
    res = encode(cb, d, z)
    assert res.distortion == pytest.approx(d.values[z, res.y].mean(), rel=1e-14)
    assert encode(cb, d, z).index == res.index


def test_all_infinite_raises():
    d = matched_distortion(bec(0.3))
    with pytest.raises(InfeasibleError):
        encode(Codebook.from_words([[0, 0]]), d, [1, 1])


def test_erasures_excluded_correctly():
    d = matched_distortion(bec(0.3))
    res = encode(Codebook.from_words([[0, 0], [0, 1], [1, 1]]), d, [2, 1])
    assert res.index == 1


def test_product_code_rate_and_encoding(uniform_iid):
    pc = product_codebook(uniform_iid, 100, 0.3, seed=0, max_words=2**10)
    assert isinstance(pc, ProductCode) and pc.n == 100
    assert pc.rate >= 0.3 - 1e-12
    z = sample_path(uniform_iid, 100, 2).symbols
    d = matched_distortion(bsc(0.2))
    res = encode(pc, d, z)
    parts = [encode(cb, d, z[lo:hi]) for cb, (lo, hi) in zip(pc.codebooks, pc.bounds)]
    np.testing.assert_array_equal(res.y, np.concatenate([p.y for p in parts]))


def test_small_code_identity_when_words_cover_all(markov02, bsc01):
    d = matched_distortion(bsc01)
    sc = optimal_small_code(markov02, bsc01, 4, 16, d, restarts=2)
    # every z^4 maps to itself: per-letter distortion is -ln 0.9
    assert sc.expected_distortion == pytest.approx(-math.log(0.9))


def test_small_code_noiseless_identity_is_zero(markov02):
    ch = identity_channel(2)
    sc = optimal_small_code(markov02, ch, 3, 8, matched_distortion(ch), restarts=2)
    assert sc.expected_distortion == 0.0


def test_single_word_is_exhaustive_optimum(markov02, bsc01):
    d = matched_distortion(bsc01)
    n = 4
    sc = optimal_small_code(markov02, bsc01, n, 1, d, restarts=4)
    pz = block_joint(markov02, bsc01, n).sum(axis=1)
    zs = np.array(list(itertools.product(range(2), repeat=n)))
    best = min(pz @ d.values[zs, np.array(y)[None, :]].mean(axis=1)
               for y in itertools.product(range(2), repeat=n))
    assert sc.expected_distortion == pytest.approx(best)


def test_small_code_history_non_increasing(markov02, bsc01):
    sc = optimal_small_code(markov02, bsc01, 6, 5, matched_distortion(bsc01), restarts=4)
    assert np.all(np.diff(sc.history) <= 1e-15)


def test_small_code_monotone_in_words(markov02, bsc01):
    d = matched_distortion(bsc01)
    vals = [optimal_small_code(markov02, bsc01, 5, w, d, restarts=8).expected_distortion for w in (1, 2, 4, 8, 32)]
    assert np.all(np.diff(vals) <= 1e-12)


def test_small_code_budget(markov02):
    with pytest.raises(BudgetExceededError):
        optimal_small_code(markov02, bec(0.2), 11, 4, matched_distortion(bec(0.2)))


def test_posterior_sampling_identity_channel(markov02):
    z = sample_path(markov02, 30, 0).symbols
    y = posterior_sampling_denoiser(markov02, identity_channel(2), z, seed=1)
    np.testing.assert_array_equal(y.symbols, z)


def test_posterior_sampling_marginal_calibration(markov02, bsc01):
    src, ch = MarkovSource.binary_symmetric(0.1), bsc(0.2)
    z = pass_through(ch, sample_path(src, 64, 3).symbols, make_rng(3))
    post = forward_backward(src, ch, z).probs[:, 1]
    trials = 20_000
    from compdenoise.inference import posterior_samples

    draws = posterior_samples(src, ch, z, trials, make_rng(4))
    se = np.sqrt(post * (1 - post) / trials)
    assert np.all(np.abs(draws.mean(axis=0) - post) <= 4 * se + 1e-12)


def test_goodness_identity_channel_all_sequences(markov02):
    ch = identity_channel(2)
    words = np.array(list(itertools.product(range(2), repeat=6)))
    rep = goodness_report(Codebook.from_words(words), matched_distortion(ch), markov02, ch, 20, 0)
    assert rep.mean_distortion == 0.0 and rep.target_D == 0.0


def test_goodness_overshoot_at_high_rate(uniform_iid):
    ch = bsc(0.2)
    d = matched_distortion(ch)
    low = goodness_report(product_codebook(uniform_iid, 64, 0.05, 0), d, uniform_iid, ch, 40, 1)
    high = goodness_report(random_codebook(uniform_iid, 16, 0.6, 0), d, uniform_iid, ch, 40, 1)
    assert high.mean_distortion < high.target_D < low.mean_distortion
