from __future__ import annotations

import numpy as np
import pytest

from compdenoise.exceptions import BudgetExceededError, ValidationError
from compdenoise.sources import (
    IidSource,
    MarkovSource,
    block_pmf,
    entropy_rate,
    make_rng,
    sample_path,
    sample_paths,
    stationary_distribution,
    two_point_marginal,
)
from compdenoise.probcore import binary_entropy


def test_stationary_two_state():
    pi = stationary_distribution([[0.9, 0.1], [0.2, 0.8]])
    np.testing.assert_allclose(pi.probs, [2 / 3, 1 / 3], atol=1e-14)


def test_stationary_three_state_matches_eigenvector():
    m = np.array([[0.5, 0.3, 0.2], [0.1, 0.8, 0.1], [0.3, 0.3, 0.4]])
    pi = stationary_distribution(m).probs
    w, v = np.linalg.eig(m.T)
    ref = np.real(v[:, np.argmin(np.abs(w - 1))])
    np.testing.assert_allclose(pi, ref / ref.sum(), atol=1e-12)


@pytest.mark.parametrize("m", [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]])
def test_non_ergodic_rejected(m):
    with pytest.raises(ValidationError):
        MarkovSource(m)


def test_block_pmf_pairs():
    t = block_pmf(MarkovSource.binary_symmetric(0.2), 2).probs
    np.testing.assert_allclose(t, [[0.4, 0.1], [0.1, 0.4]])


def test_block_pmf_budget():
    with pytest.raises(BudgetExceededError):
        block_pmf(MarkovSource.binary_symmetric(0.2), 23)


def test_two_point_marginal_matches_matrix_power():
    src = MarkovSource.binary_symmetric(0.15)
    np.testing.assert_allclose(two_point_marginal(0.15, 5), np.linalg.matrix_power(src.transition, 5))


def test_sample_path_deterministic():
    src = MarkovSource.binary_symmetric(0.2)
    a = sample_path(src, 100, seed=3).symbols
    b = sample_path(src, 100, seed=3).symbols
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_path(src, 100, seed=4).symbols)


def test_empirical_frequencies_match_stationary_law():
    src = MarkovSource([[0.9, 0.1], [0.2, 0.8]])
    n = 10**6
    x = sample_path(src, n, seed=11).symbols
    freq = np.mean(x == 1)
    # the chain is positively correlated; inflate the iid standard error by the
    # asymptotic variance factor (1 + lambda) / (1 - lambda), lambda = 0.7
    se = np.sqrt((1 / 3) * (2 / 3) / n * (1.7 / 0.3))
    assert abs(freq - 1 / 3) < 4 * se


def test_iid_first_symbol_frequency():
    src = IidSource([0.25, 0.75])
    xs = sample_paths(src, 1, 10**6, make_rng(5))
    se = np.sqrt(0.25 * 0.75 / 10**6)
    assert abs(np.mean(xs == 0) - 0.25) < 3 * se


def test_transition_frequencies():
    src = MarkovSource.binary_symmetric(0.3)
    x = sample_path(src, 200_000, seed=2).symbols
    flips = np.mean(x[1:] != x[:-1])
    assert abs(flips - 0.3) < 4 * np.sqrt(0.21 / x.size)


def test_entropy_rate():
    assert entropy_rate(MarkovSource.binary_symmetric(0.2)) == pytest.approx(float(binary_entropy(0.2)))
    assert entropy_rate(IidSource([0.5, 0.5])) == pytest.approx(np.log(2))


def test_streams_are_independent_of_call_order():
    a = make_rng(9, 3).random(4)
    make_rng(9, 1).random(100)
    np.testing.assert_array_equal(a, make_rng(9, 3).random(4))
