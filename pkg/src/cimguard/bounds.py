#! /usr/bin/env python
#
# Probabilities of guessing shuffle key digits.
#
# A key of N channels (plus k ZERO slots) is one of M!/k! arrangements.
# An adversary drawing keys uniformly matches n digits of the real key
# with a probability given by the rencontres numbers; the closed forms
# below bound the chance of matching n or more digits.

from __future__ import division

import itertools
import logging
import math
from fractions import Fraction

import numpy as np

from .util import keyed_rng


__all__ = [
    "Error",
    "BoundError",
    "MC_BLOCK",
    "ENUMERATION_LIMIT",
    "binomial",
    "derangements",
    "rencontres",
    "log_factorial",
    "log_binomial",
    "bound_no_insert",
    "bound_with_insert",
    "exact_match_distribution",
    "monte_carlo_match",
    "log2_key_space",
]


logger = logging.getLogger(__name__)


# Monte-Carlo trials drawn per keyed stream; results do not depend on how
# the blocks are spread over workers
MC_BLOCK = 4096
ENUMERATION_LIMIT = 10
# factorials up to here are formed exactly before taking the log
EXACT_LOG_LIMIT = 5000


class Error(Exception):
    """Base class for exceptions in this module."""

    pass


class BoundError(Error, ValueError):
    pass


def binomial(n, k):
    """Exact C(n, k)."""
    if not 0 <= k <= n:
        return 0
    return math.comb(n, k)


def derangements(n):
    """Number of permutations of n items without a fixed point."""
    if n < 0:
        raise BoundError("negative item count")
    previous, current = 1, 0
    if n == 0:
        return previous
    for i in range(2, n + 1):
        previous, current = current, (i - 1) * (current + previous)
    return current


def rencontres(n, m):
    """Permutations of n items with exactly m fixed points."""
    if not 0 <= m <= n:
        return 0
    return binomial(n, m) * derangements(n - m)


def log_factorial(n):
    if n <= EXACT_LOG_LIMIT:
        return math.log(math.factorial(n))
    return math.lgamma(n + 1)


def log_binomial(n, k):
    return log_factorial(n) - log_factorial(k) - log_factorial(n - k)


def bound_no_insert(N, n):
    """
    Probability bound that a random key matches at least n of N digits,
    without zero insertion: C(N, n) * (N - n)! / N!, which reduces to 1/n!.

    Computed in log space.

    :raises BoundError: n outside [0, N]
    """
    if not 0 <= n <= N:
        raise BoundError("need 0 <= n <= N, got n={0}, N={1}".format(n, N))
    log_value = log_binomial(N, n) + log_factorial(N - n) - log_factorial(N)
    return min(1.0, math.exp(log_value))


def bound_with_insert(N, M, k, n):
    """
    Probability bound that a random key matches at least n of N digits when
    k ZERO slots are inserted (M = N + k):

        [C(N, n) * (M - n)! / k!] / [C(M, k) * N!]

    Computed in log space and clamped to [0, 1]; clamping is logged.

    :raises BoundError: M != N + k, negative k or n outside [0, N]
    """
    if k < 0 or M != N + k:
        raise BoundError("need M = N + k with k >= 0")
    if not 0 <= n <= N:
        raise BoundError("need 0 <= n <= N, got n={0}, N={1}".format(n, N))
    log_value = (
        log_binomial(N, n)
        + log_factorial(M - n)
        - log_factorial(k)
        - log_binomial(M, k)
        - log_factorial(N)
    )
    value = math.exp(min(log_value, 700.0))
    if value > 1.0:
        logger.warning(
            "bound for N=%d, k=%d, n=%d is %.6g, clamped to 1", N, k, n, value
        )
        value = 1.0
    return value


def exact_match_distribution(N, method="rencontres"):
    """
    Exact probability that a uniformly random permutation of N items has
    exactly n fixed points, for n = 0..N.

    :param str method: ``rencontres`` (closed form, any N) or ``enumerate``
        (visit every permutation, N up to 10)

    :rtype: list of fractions.Fraction
    """
    if N < 1:
        raise BoundError("need at least one item")
    total = math.factorial(N)
    if method == "rencontres":
        return [Fraction(rencontres(N, n), total) for n in range(N + 1)]
    if method != "enumerate":
        raise BoundError("unknown method %r" % (method,))
    if N > ENUMERATION_LIMIT:
        raise BoundError(
            "enumeration is limited to N <= %d" % ENUMERATION_LIMIT
        )
    counts = [0] * (N + 1)
    identity = tuple(range(N))
    for perm in itertools.permutations(identity):
        counts[sum(1 for a, b in zip(perm, identity) if a == b)] += 1
    return [Fraction(c, total) for c in counts]


def _random_arrangements(rng, trials, N, k):
    # uniform arrangements of N real channels and k ZERO slots, as in
    # shuffle.gen_key: slot perm[i] receives channel i
    M = N + k
    perm = np.argsort(rng.random((trials, M)), axis=1)
    out = np.full((trials, M), -1, dtype=np.int64)
    rows = np.arange(trials)[:, None]
    out[rows, perm[:, :N]] = np.arange(N)[None, :]
    return out


def monte_carlo_match(N, k, trials, seed=0, real=None):
    """
    Frequency of each matched-digit count over random guesses.

    :param real: the real key as a slot array (ZERO = -1); a random one
        drawn from ``seed`` when None
    :raises BoundError: fewer than 1000 trials

    :return: array of length N + 1, entry n the fraction of guesses that
        match exactly n digits
    """
    if trials < 1000:
        raise BoundError("Monte-Carlo needs at least 1000 trials")
    if real is None:
        real = _random_arrangements(keyed_rng("mc-real", seed), 1, N, k)[0]
    real = np.asarray(real)
    counts = np.zeros(N + 1, dtype=np.int64)
    for block, start in enumerate(range(0, trials, MC_BLOCK)):
        size = min(MC_BLOCK, trials - start)
        rng = keyed_rng("mc", seed, block)
        guesses = _random_arrangements(rng, size, N, k)
        matched = np.sum((guesses == real[None, :]) & (real[None, :] >= 0), 1)
        counts += np.bincount(matched, minlength=N + 1)
    return counts / trials


def log2_key_space(N, k=0):
    """log2 of the number of distinct keys, M! / k!."""
    return (log_factorial(N + k) - log_factorial(k)) / math.log(2)
