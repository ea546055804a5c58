"""Benchmark workload constructors and lossless domain reduction.

Binary-domain workloads (marginals, parity) index user type ``u`` by its
``k``-bit binary expansion, most significant bit = attribute 0.
"""
from itertools import combinations

import numpy as np

from .model import DataVector, Workload

KINDS = ("histogram", "prefix", "allrange", "range", "marginals", "3way", "parity")

_ALIASES = {
    "identity": "histogram",
    "all_range": "allrange",
    "widthkrange": "range",
    "width_range": "range",
    "allmarginals": "marginals",
    "threewaymarginals": "3way",
    "3-way": "3way",
}


def histogram(n):
    _check_n(n)
    return Workload(np.eye(n), kind=f"histogram:n={n}")


def prefix(n):
    _check_n(n)
    return Workload(np.tril(np.ones((n, n))), kind=f"prefix:n={n}")


def all_range(n):
    _check_n(n)
    rows = []
    for i in range(n):
        for j in range(i, n):
            r = np.zeros(n)
            r[i : j + 1] = 1.0
            rows.append(r)
    return Workload(np.array(rows), kind=f"allrange:n={n}")


def width_range(n, width=20):
    """Row ``i`` counts types ``i`` through ``i + width`` inclusive (``n - width`` rows)."""
    _check_n(n)
    if not 1 <= width < n:
        raise ValueError(f"width must satisfy 1 <= width < n, got width={width}, n={n}")
    W = np.zeros((n - width, n))
    for i in range(n - width):
        W[i, i : i + width + 1] = 1.0
    return Workload(W, kind=f"range:n={n},width={width}")


def _bits(k):
    u = np.arange(2**k)
    return (u[:, None] >> (k - 1 - np.arange(k))[None, :]) & 1  # (2^k, k)


def _marginal_rows(k, subsets):
    bits = _bits(k)
    rows = []
    for S in subsets:
        S = list(S)
        for cell in range(2 ** len(S)):
            want = [(cell >> (len(S) - 1 - j)) & 1 for j in range(len(S))]
            if S:
                rows.append(np.all(bits[:, S] == want, axis=1).astype(float))
            else:
                rows.append(np.ones(2**k))
    return np.array(rows)


def all_marginals(k):
    """Every cell of every marginal, empty attribute set included: 3^k rows."""
    _check_k(k)
    subsets = [S for r in range(k + 1) for S in combinations(range(k), r)]
    return Workload(_marginal_rows(k, subsets), kind=f"marginals:k={k}")


def three_way_marginals(k):
    _check_k(k)
    if k < 3:
        raise ValueError(f"3-way marginals need k >= 3, got k={k}")
    return Workload(_marginal_rows(k, combinations(range(k), 3)), kind=f"3way:k={k}")


def parity(k, include_empty=True):
    """All parity characters ``(-1)^<S, u>``; the constant one unless ``include_empty=False``."""
    _check_k(k)
    S = np.arange(0 if include_empty else 1, 2**k)
    u = np.arange(2**k)
    overlap = S[:, None] & u[None, :]
    pop = np.zeros_like(overlap)
    for b in range(k):
        pop += (overlap >> b) & 1
    return Workload(np.where(pop % 2 == 0, 1.0, -1.0), kind=f"parity:k={k}")


def build_workload(kind, **params):
    """Build a benchmark workload by name.

    ``kind`` is one of :data:`KINDS` (case-insensitive, some aliases accepted).
    Binary-domain kinds take ``k`` or a power-of-two ``n``.
    """
    key = kind.lower().replace(" ", "")
    key = _ALIASES.get(key, key)
    if key in ("marginals", "3way", "parity"):
        k = params.get("k")
        if k is None:
            n = params.get("n")
            if n is None:
                raise ValueError(f"{kind} needs k or n")
            n = int(n)
            if n < 2 or n & (n - 1):
                raise ValueError(f"{kind} needs a power-of-two domain, got n={n}")
            k = n.bit_length() - 1
        k = int(k)
        if key == "marginals":
            return all_marginals(k)
        if key == "3way":
            return three_way_marginals(k)
        return parity(k, include_empty=bool(params.get("include_empty", True)))
    if "n" not in params:
        raise ValueError(f"{kind} needs n")
    n = int(params["n"])
    if key == "histogram":
        return histogram(n)
    if key == "prefix":
        return prefix(n)
    if key == "allrange":
        return all_range(n)
    if key == "range":
        return width_range(n, int(params.get("width", 20)))
    raise ValueError(f"unknown workload kind {kind!r}; expected one of {KINDS}")


def parse_spec(spec):
    """``"range:n=128,width=20"`` -> ``("range", {"n": 128, "width": 20})``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"bad parameter {item!r} in spec {spec!r}")
        params[key.strip()] = int(value) if value.strip().lstrip("-").isdigit() else value.strip()
    return name.strip(), params


def from_spec(spec):
    """Build a workload from a generator spec string such as ``"prefix:n=128"``."""
    name, params = parse_spec(spec)
    return build_workload(name, **params)


def reduce_domain(W):
    """Merge identical columns of ``W``.

    Returns the reduced workload and ``mapping`` with ``mapping[u]`` the
    reduced column representing original type ``u``; ``W'[:, mapping]``
    reproduces ``W``.
    """
    M = W.matrix if isinstance(W, Workload) else np.asarray(W, dtype=np.float64)
    kind = W.kind if isinstance(W, Workload) else "custom"
    keys = np.round(M, 12) + 0.0  # +0.0 folds -0.0 into 0.0
    seen = {}
    mapping = np.empty(M.shape[1], dtype=np.int64)
    reps = []
    for u in range(M.shape[1]):
        key = keys[:, u].tobytes()
        if key not in seen:
            seen[key] = len(reps)
            reps.append(u)
        mapping[u] = seen[key]
    reduced = Workload(M[:, reps], kind=kind if len(reps) == M.shape[1] else f"{kind}|reduced")
    return reduced, mapping


def reduce_data(x, mapping):
    """Sum the counts of merged types."""
    counts = x.counts if isinstance(x, DataVector) else np.asarray(x)
    out = np.zeros(int(np.max(mapping)) + 1, dtype=np.int64)
    np.add.at(out, np.asarray(mapping), counts)
    return DataVector(out)


def _check_n(n):
    if int(n) < 1:
        raise ValueError(f"domain size must be >= 1, got {n}")


def _check_k(k):
    if int(k) < 1:
        raise ValueError(f"number of binary attributes must be >= 1, got {k}")
