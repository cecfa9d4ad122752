from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from compdenoise.codec import Codebook, block_costs, encode
from compdenoise.config import parse_config_text, serialize
from compdenoise.empirics import (
    LossSpec,
    block_loss,
    empirical_joint,
    erasure_closed_forms,
    hamming_envelopes,
    max_coupling_loss,
)
from compdenoise.inference import forward_backward
from compdenoise.probcore import Channel, bsc, entropy, kl_divergence, matched_distortion, tv_distance
from compdenoise.ratedist import blahut_arimoto, matched_level_identity_check
from compdenoise.sources import MarkovSource, make_rng, pass_through, sample_path

prob = st.floats(0.02, 0.98)


@st.composite
def simplex(draw, size):
    w = draw(arrays(float, size, elements=st.floats(0.05, 1.0)))
    return w / w.sum()


@st.composite
def channels(draw, n_in=2, n_out=2):
    return Channel(np.stack([draw(simplex(n_out)) for _ in range(n_in)]))


@settings(max_examples=40, deadline=None)
@given(p=simplex(3), q=simplex(3))
def test_divergence_basics(p, q):
    assert kl_divergence(p, q) >= -1e-12
    assert 0.0 <= tv_distance(p, q) <= 1.0
    assert 0.0 <= entropy(p) <= np.log(3) + 1e-12


@settings(max_examples=30, deadline=None)
@given(p=simplex(3), beta=st.floats(0.0, 20.0))
def test_ba_point_is_feasible(p, beta):
    d = 1.0 - np.eye(3)
    pt = blahut_arimoto(p, d, beta)
    assert pt.rate >= -1e-10
    assert pt.rate <= entropy(p) + 1e-8
    assert 0.0 <= pt.distortion <= 1.0 + 1e-12
    np.testing.assert_allclose(pt.conditional.sum(axis=1), 1.0, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(ps=st.floats(0.05, 0.45), ch=channels())
def test_identity_holds_for_random_channels(ps, ch):
    rep = matched_level_identity_check(MarkovSource.binary_symmetric(ps), ch, 1)
    assert abs(rep.gap) < 1e-4 * np.log(2)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.0, 1.0))
def test_envelope_sandwich(a):
    phi, f, up = hamming_envelopes(np.array([a]))
    assert phi[0] <= f[0] + 1e-15 <= up[0] + 2e-15
    p = np.array([1 - a, a])
    assert abs(max_coupling_loss(p, 1 - np.eye(2)) - up[0]) < 1e-9


@settings(max_examples=30, deadline=None)
@given(p=simplex(3), table=arrays(float, (3, 3), elements=st.floats(0.0, 2.0)))
def test_coupling_bound_dominates_independent_pair(p, table):
    # the product coupling is feasible, so the max over couplings is at least its value
    assert max_coupling_loss(p, table) >= p @ table @ p - 1e-9


@settings(max_examples=40, deadline=None)
@given(ps=st.floats(1e-3, 0.5), pe=st.floats(0.0, 0.95))
def test_erasure_ordering(ps, pe):
    r = erasure_closed_forms(ps, pe)
    assert -1e-15 <= r.bayes_loss <= r.denoiser_loss + 1e-12
    assert r.denoiser_loss <= 2 * r.bayes_loss + 1e-12


@settings(max_examples=40, deadline=None)
@given(data=st.data(), n=st.integers(1, 40))
def test_block_loss_range_and_symmetry(data, n):
    x = data.draw(arrays(np.int64, n, elements=st.integers(0, 2)))
    y = data.draw(arrays(np.int64, n, elements=st.integers(0, 2)))
    loss = LossSpec.hamming(3)
    v = block_loss(x, y, loss)
    assert 0.0 <= v <= 1.0 and v == block_loss(y, x, loss)
    assert (v == 0.0) == bool(np.array_equal(x, y))


@settings(max_examples=30, deadline=None)
@given(data=st.data(), k=st.integers(0, 3), n=st.integers(8, 40))
def test_empirical_joint_counts(data, k, n):
    seqs = [data.draw(arrays(np.int64, n, elements=st.integers(0, 1))) for _ in range(3)]
    ej = empirical_joint(*seqs, k, sizes=(2, 2, 2))
    assert ej.counts.sum() == n - 2 * k == ej.n_effective
    np.testing.assert_allclose(ej.normalized().probs.sum(), 1.0)


@settings(max_examples=25, deadline=None)
@given(data=st.data(), n=st.integers(2, 8), words=st.integers(1, 12))
def test_encoder_picks_a_minimum_with_lowest_index(data, n, words):
    w = data.draw(arrays(np.int64, (words, n), elements=st.integers(0, 1)))
    z = data.draw(arrays(np.int64, n, elements=st.integers(0, 1)))
    cb = Codebook.from_words(w)
    dist = matched_distortion(bsc(0.2))
    res = encode(cb, dist, z)
    costs = block_costs(cb.words, dist.values, z)[0]
    assert costs[res.index] == costs.min()
    assert res.index == int(np.flatnonzero(costs == costs.min())[0])


@settings(max_examples=20, deadline=None)
@given(ps=st.floats(0.05, 0.45), p=st.floats(0.01, 0.45), seed=st.integers(0, 2**31))
def test_posterior_marginals_normalised(ps, p, seed):
    src = MarkovSource.binary_symmetric(ps)
    z = pass_through(bsc(p), sample_path(src, 60, seed).symbols, make_rng(seed))
    post = forward_backward(src, bsc(p), z).probs
    assert np.all(post >= 0)
    np.testing.assert_allclose(post.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(3, 5000), trials=st.integers(1, 500), p=st.floats(0.0, 1.0))
def test_config_round_trip(n, trials, p):
    text = f"run.n = {n}\nrun.trials = {trials}\nchannel.p = {p!r}\n"
    cfg = parse_config_text(text)
    assert parse_config_text(serialize(cfg)).values == cfg.values
