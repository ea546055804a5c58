"""Strategy matrices of standard LDP mechanisms.

Each constructor builds unnormalized column weights and divides by the column
sums, so every output is column-stochastic by construction.
"""
from itertools import combinations
from math import comb

import numpy as np

from .model import StrategyMatrix

RAPPOR_MAX_N = 12
SUBSET_MAX_ROWS = 10**6


def _normalize(weights, epsilon, kind):
    Q = weights / weights.sum(axis=0, keepdims=True)
    return StrategyMatrix(Q, epsilon, kind=kind)


def randomized_response(n, epsilon):
    if n < 2:
        raise ValueError(f"randomized response needs n >= 2, got {n}")
    # e^eps on the diagonal over (e^eps + n - 1); written as 1/(1 + (n-1)e^-eps)
    # so huge epsilon does not overflow
    d = np.exp(-epsilon)
    Q = np.full((n, n), d / (1.0 + (n - 1) * d))
    np.fill_diagonal(Q, 1.0 / (1.0 + (n - 1) * d))
    return StrategyMatrix(Q, epsilon, kind="rr")


def sylvester(K):
    """K x K Sylvester-Hadamard matrix, ``H[i, j] = (-1)^popcount(i & j)``."""
    if K < 1 or K & (K - 1):
        raise ValueError(f"Hadamard order must be a power of two, got {K}")
    H = np.ones((1, 1))
    while H.shape[0] < K:
        H = np.block([[H, H], [H, -H]])
    return H


def hadamard(n, epsilon):
    """Hadamard response over ``K = 2^ceil(log2(n+1))`` outputs.

    User ``u`` (0-based) takes column ``u + 1`` of the Sylvester matrix, so the
    all-ones column is never used.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    K = 1 << int(n).bit_length()  # smallest power of two > n
    H = sylvester(K)[:, 1 : n + 1]
    weights = np.where(H > 0, np.exp(epsilon), 1.0)
    return _normalize(weights, epsilon, "hadamard")


def rappor(n, epsilon):
    """Unary-encoding RAPPOR: outputs are bit vectors, bit ``u`` is the MSB-first position ``u``."""
    if not 1 <= n <= RAPPOR_MAX_N:
        raise ValueError(
            f"RAPPOR strategy has 2^n rows; n={n} exceeds the limit of {RAPPOR_MAX_N} (2^{RAPPOR_MAX_N} rows)"
        )
    o = np.arange(2**n)
    bits = (o[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1  # (2^n, n)
    ones = bits.sum(axis=1, keepdims=True)
    # ||o - e_u||_1 = popcount(o) - 2 o_u + 1
    dist = ones - 2 * bits + 1
    weights = np.exp(epsilon / 2.0 * (n - dist))
    return _normalize(weights, epsilon, "rappor")


def auto_subset_size(n, epsilon):
    return max(1, min(n - 1, int(round(n / (np.exp(epsilon) + 1)))))


def subset_selection(n, epsilon, d="auto"):
    """Outputs are the size-``d`` subsets of the domain (lexicographic order)."""
    if d in (None, "auto"):
        d = auto_subset_size(n, epsilon)
    d = int(d)
    if not 1 <= d < n:
        raise ValueError(f"subset size must satisfy 1 <= d < n, got d={d}, n={n}")
    rows = comb(n, d)
    if rows > SUBSET_MAX_ROWS:
        raise ValueError(f"C({n},{d}) = {rows} outputs exceeds the limit of {SUBSET_MAX_ROWS}")
    member = np.zeros((rows, n), dtype=bool)
    for i, S in enumerate(combinations(range(n), d)):
        member[i, list(S)] = True
    weights = np.where(member, np.exp(epsilon), 1.0)
    Q = _normalize(weights, epsilon, f"subset:d={d}")
    return Q


def from_spec(spec, n, epsilon):
    """Build a baseline from a CLI spec: ``rr``, ``hadamard``, ``rappor``, ``subset:d=3``, ``subset:auto``."""
    name, _, arg = spec.partition(":")
    name = name.strip().lower()
    if name in ("rr", "randomized_response"):
        return randomized_response(n, epsilon)
    if name == "hadamard":
        return hadamard(n, epsilon)
    if name == "rappor":
        return rappor(n, epsilon)
    if name in ("subset", "subset_selection"):
        arg = arg.strip()
        if arg in ("", "auto"):
            return subset_selection(n, epsilon, "auto")
        key, _, value = arg.partition("=")
        if key != "d" or not value:
            raise ValueError(f"bad subset spec {spec!r}; use subset:d=<int> or subset:auto")
        return subset_selection(n, epsilon, int(value))
    raise ValueError(f"unknown baseline {spec!r}")


BASELINES = ("rr", "hadamard", "rappor", "subset:auto")
