try:
    import unittest2 as unittest
except ImportError:
    import unittest
import math
from fractions import Fraction

import hypothesis.strategies as st
from hypothesis import given, example
import numpy as np
import pytest

from .bounds import (
    BoundError,
    Error,
    binomial,
    bound_no_insert,
    bound_with_insert,
    derangements,
    exact_match_distribution,
    log2_key_space,
    log_factorial,
    monte_carlo_match,
    rencontres,
)


class TestCounting(unittest.TestCase):
    def test_derangements(self):
        self.assertEqual(
            [derangements(n) for n in range(7)], [1, 0, 1, 2, 9, 44, 265]
        )

    def test_rencontres(self):
        self.assertEqual(rencontres(7, 2), 924)
        self.assertEqual(rencontres(7, 7), 1)
        self.assertEqual(rencontres(7, 6), 0)
        self.assertEqual(rencontres(3, 4), 0)

    def test_rencontres_cover_every_permutation(self):
        for n in range(1, 9):
            total = sum(rencontres(n, m) for m in range(n + 1))
            self.assertEqual(total, math.factorial(n))

    def test_binomial(self):
        self.assertEqual(binomial(5, 2), 10)
        self.assertEqual(binomial(5, 6), 0)

    def test_negative(self):
        with self.assertRaises(BoundError):
            derangements(-1)

    def test_log_factorial(self):
        self.assertAlmostEqual(log_factorial(10), math.log(3628800))
        self.assertAlmostEqual(
            log_factorial(6000) / math.lgamma(6001), 1.0, places=12
        )


@given(st.integers(1, 500), st.integers(0, 150))
@example(128, 5)
def test_bound_no_insert_is_inverse_factorial(N, n):
    n = min(n, N)
    expected = 1 / math.factorial(n)
    assert math.isclose(bound_no_insert(N, n), expected, rel_tol=1e-9)


@given(st.integers(2, 300), st.integers(0, 40), st.integers(0, 300))
def test_inserting_zeros_never_weakens_the_bound(N, k, n):
    n = min(n, N)
    with_insert = bound_with_insert(N, N + k, k, n)
    assert 0.0 <= with_insert <= 1.0
    assert with_insert <= bound_no_insert(N, n) * (1 + 1e-9)


def test_bound_with_insert_reduces_without_zeros():
    for n in range(0, 21):
        assert math.isclose(
            bound_with_insert(128, 128, 0, n),
            bound_no_insert(128, n),
            rel_tol=1e-9,
        )


def test_bound_with_insert_closed_form():
    # C(4,2) * 4! / 2! / (C(6,2) * 4!) = 6 * 12 / 360
    assert math.isclose(bound_with_insert(4, 6, 2, 2), 0.2)


class TestBoundErrors(unittest.TestCase):
    def test_range(self):
        with self.assertRaises(BoundError):
            bound_no_insert(5, 6)
        with self.assertRaises(BoundError):
            bound_with_insert(5, 8, 2, 1)
        with self.assertRaises(BoundError):
            bound_with_insert(5, 4, -1, 1)

    def test_hierarchy(self):
        self.assertTrue(issubclass(BoundError, Error))
        self.assertTrue(issubclass(BoundError, ValueError))


@pytest.mark.parametrize("N", range(1, 8))
def test_enumeration_matches_closed_form(N):
    enumerated = exact_match_distribution(N, "enumerate")
    closed = exact_match_distribution(N)
    assert enumerated == closed
    assert sum(closed) == 1


def test_exact_distribution_values():
    dist = exact_match_distribution(4)
    assert dist == [
        Fraction(9, 24),
        Fraction(8, 24),
        Fraction(6, 24),
        Fraction(0),
        Fraction(1, 24),
    ]


def test_exact_distribution_errors():
    with pytest.raises(BoundError):
        exact_match_distribution(11, "enumerate")
    with pytest.raises(BoundError):
        exact_match_distribution(5, "guess")
    with pytest.raises(BoundError):
        exact_match_distribution(0)


class TestMonteCarlo(unittest.TestCase):
    def test_two_or_more_matches(self):
        freq = monte_carlo_match(20, 0, 20000, seed=3)
        self.assertAlmostEqual(sum(freq), 1.0)
        self.assertLess(abs(freq[2:].sum() - (1 - 2 / math.e)), 0.015)

    def test_follows_exact_distribution(self):
        freq = monte_carlo_match(6, 0, 30000, seed=1)
        exact = [float(p) for p in exact_match_distribution(6)]
        self.assertTrue(np.allclose(freq, exact, atol=0.015))

    def test_zeros_lower_the_match_rate(self):
        plain = monte_carlo_match(16, 0, 20000, seed=2)
        inserted = monte_carlo_match(16, 8, 20000, seed=2)
        self.assertLess(inserted[1:].sum(), plain[1:].sum())

    def test_repeatable(self):
        a = monte_carlo_match(10, 2, 5000, seed=9)
        b = monte_carlo_match(10, 2, 5000, seed=9)
        self.assertTrue(np.array_equal(a, b))

    def test_given_real_key(self):
        real = np.array([1, -1, 0])
        freq = monte_carlo_match(2, 1, 3000, seed=0, real=real)
        # the only full match is the key itself, one of 3! arrangements
        self.assertLess(abs(freq[2] - 1 / 6), 0.03)

    def test_stays_under_the_bound(self):
        trials = 100000
        freq = monte_carlo_match(128, 0, trials, seed=4)
        tails = np.cumsum(freq[::-1])[::-1]
        self.assertLess(abs(tails[2] - (1 - 2 / math.e)), 0.01)
        for n in range(1, 21):
            bound = bound_no_insert(128, n)
            sigma = math.sqrt(bound * (1 - bound) / trials)
            self.assertLessEqual(tails[n], bound + 3 * sigma)

    def test_too_few_trials(self):
        with self.assertRaises(BoundError):
            monte_carlo_match(10, 0, 999)


def test_log2_key_space():
    assert math.isclose(log2_key_space(3), math.log2(6))
    assert math.isclose(log2_key_space(3, 2), math.log2(60))
    assert log2_key_space(128, 16) > log2_key_space(128)
