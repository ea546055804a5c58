"""Exact error analytics for factorization mechanisms ``W = V Q``.

Everything here is closed form.  The per-type variance vector

    s[u] = sum_i  v_i^T Diag(q_u) v_i - (v_i^T q_u)^2

is the expected total squared error contributed by one user of type ``u``.
The other quantities are built from it and from the Gram matrix
``X = Q^T D^-1 Q`` with ``D = Diag(Q 1)``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .model import DataVector, DimensionError, StrategyMatrix, Workload

COND_LIMIT = 1e12
PINV_CUTOFF = 1e-10
REPRESENT_TOL = 1e-6


class RepresentabilityError(ValueError):
    """The workload is not in the row space of the strategy matrix."""


class IllConditionedError(RepresentabilityError):
    """``Q^T D^-1 Q`` is too close to singular for the direct solve."""


class ZeroRowError(ValueError):
    """A strategy row sums to zero; drop it before evaluating."""


def _arr(a):
    if isinstance(a, (Workload, StrategyMatrix)):
        return a.matrix
    if isinstance(a, DataVector):
        return a.counts.astype(np.float64)
    return np.asarray(a, dtype=np.float64)


def _row_sums(Q):
    d = Q.sum(axis=1)
    if np.any(d <= 0):
        raise ZeroRowError(f"strategy rows {np.flatnonzero(d <= 0).tolist()} sum to zero")
    return d


def gram(Q):
    """``X = Q^T D^-1 Q`` and the row sums ``d``."""
    Q = _arr(Q)
    d = _row_sums(Q)
    return Q.T @ (Q / d[:, None]), d


def _check_shapes(V, Q, W=None):
    if V.shape[1] != Q.shape[0]:
        raise DimensionError(f"V is {V.shape} but Q has {Q.shape[0]} rows")
    if W is not None and (W.shape[0] != V.shape[0] or W.shape[1] != Q.shape[1]):
        raise DimensionError(f"W {W.shape} does not match V {V.shape} and Q {Q.shape}")


def per_type_variance(V, Q):
    """Length-n vector ``s``: total variance contributed by a single user of each type."""
    V, Q = _arr(V), _arr(Q)
    _check_shapes(V, Q)
    quad = (V * V).sum(axis=0) @ Q
    lin = ((V @ Q) ** 2).sum(axis=0)
    return np.maximum(quad - lin, 0.0)


def total_variance(V, Q, x):
    """Expected total squared error of ``V M_Q(x)`` around ``W x``."""
    s = per_type_variance(V, Q)
    x = _arr(x)
    if x.shape != s.shape:
        raise DimensionError(f"data vector has length {x.size}, strategy has {s.size} columns")
    return float(x @ s)


def worst_case_variance(V, Q, N):
    """All N users share the worst type."""
    return float(N * per_type_variance(V, Q).max())


def avg_case_variance(V, Q, N):
    """N/n users of every type."""
    s = per_type_variance(V, Q)
    return float(N / s.size * s.sum())


def objective_L(V, Q):
    """``tr[V D V^T]``."""
    V, Q = _arr(V), _arr(Q)
    _check_shapes(V, Q)
    d = _row_sums(Q)
    return float(((V * V).sum(axis=0) * d).sum())


class _GramSolver:
    """Applies ``X^+`` for ``X = Q^T D^-1 Q``: direct solve when well conditioned,
    truncated eigendecomposition otherwise."""

    def __init__(self, Q):
        self.X, self.d = gram(Q)
        evals, evecs = np.linalg.eigh(self.X)
        top = evals.max()
        if top <= 0:
            raise RepresentabilityError("strategy Gram matrix is zero")
        self.cond = top / evals.min() if evals.min() > 0 else np.inf
        self.full_rank = self.cond <= COND_LIMIT
        if self.full_rank:
            self.basis = None
        else:
            keep = evals > PINV_CUTOFF * top
            self.basis = evecs[:, keep]
            self.inv_vals = 1.0 / evals[keep]

    def check(self, W):
        if self.full_rank:
            return
        P = self.basis @ self.basis.T
        err = np.abs(W - W @ P).max()
        if err > REPRESENT_TOL * (1 + np.abs(W).max()):
            raise RepresentabilityError(
                f"workload is not in the row space of the strategy (residual {err:.3g}, "
                f"cond(Q^T D^-1 Q) = {self.cond:.3g})"
            )

    def apply(self, B):
        """``X^+ B``."""
        if self.full_rank:
            return np.linalg.solve(self.X, B)
        return self.basis @ (self.inv_vals[:, None] * (self.basis.T @ B))


def optimal_V(W, Q):
    """Variance-minimizing reconstruction ``V = W X^+ Q^T D^-1``."""
    W, Q = _arr(W), _arr(Q)
    if W.shape[1] != Q.shape[1]:
        raise DimensionError(f"W has {W.shape[1]} columns, Q has {Q.shape[1]}")
    solver = _GramSolver(Q)
    solver.check(W)
    return solver.apply(W.T).T @ (Q / solver.d[:, None]).T


def objective_LQ(Q, W):
    """``L(Q) = tr[X^+ W^T W]``, the trace objective with the optimal ``V`` substituted."""
    W, Q = _arr(W), _arr(Q)
    if W.shape[1] != Q.shape[1]:
        raise DimensionError(f"W has {W.shape[1]} columns, Q has {Q.shape[1]}")
    solver = _GramSolver(Q)
    solver.check(W)
    return float(np.trace(solver.apply(W.T @ W)))


def normalized_variance(V, Q, N, p):
    """Worst-case variance of one average query on the normalized data ``x / N``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return worst_case_variance(V, Q, N) / (p * N**2)


def sample_complexity(V, Q, alpha, p):
    """Users needed for normalized worst-case variance ``alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return float(per_type_variance(V, Q).max() / (p * alpha))


def data_sample_complexity(V, Q, x, alpha, p):
    """Same as :func:`sample_complexity` with the data-dependent variance of ``x``."""
    x = _arr(x)
    N = x.sum()
    if N <= 0:
        raise ValueError("data vector is empty")
    return total_variance(V, Q, x) / N / (p * alpha)


def _singular_sum(W):
    return float(np.linalg.svd(_arr(W), compute_uv=False).sum())


def svd_lower_bound(W, epsilon):
    """``e^-eps (sum of singular values of W)^2``; no LDP strategy has smaller ``L(Q)``."""
    return float(np.exp(-epsilon) * _singular_sum(W) ** 2)


def worst_case_lower_bound(W, epsilon, N, n=None):
    """Floor on the worst-case variance of any factorization mechanism."""
    W = _arr(W)
    n = W.shape[1] if n is None else n
    return float(N / n * (svd_lower_bound(W, epsilon) - (W * W).sum()))


def sample_complexity_lower_bound(W, epsilon, alpha):
    """Floor on the sample complexity at normalized variance ``alpha``."""
    W = _arr(W)
    return worst_case_lower_bound(W, epsilon, 1.0) / (W.shape[0] * alpha)


def rmse(total_error, p):
    if total_error < 0:
        raise ValueError("total error must be nonnegative")
    return float(np.sqrt(total_error / p))


@dataclass
class VarianceReport:
    total_variance: float
    per_type_variance: list
    L_worst: float
    L_avg: float
    L_objective: float
    L_Q: float
    normalized_variance: float
    rmse: float

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def variance_report(W, Q, x=None, N=None, V=None):
    """Full analytics for ``(W, Q)``.

    With a data vector ``x`` the total variance is data dependent; otherwise
    it is the worst case for ``N`` users.
    """
    Wm, Qm = _arr(W), _arr(Q)
    if V is None:
        V = optimal_V(Wm, Qm)
    V = _arr(V)
    _check_shapes(V, Qm, Wm)
    if x is not None:
        xv = _arr(x)
        N = float(xv.sum()) if N is None else N
    if N is None:
        raise ValueError("need a data vector or a user count N")
    p = Wm.shape[0]
    s = per_type_variance(V, Qm)
    L_worst = float(N * s.max())
    total = total_variance(V, Qm, xv) if x is not None else L_worst
    return VarianceReport(
        total_variance=total,
        per_type_variance=s.tolist(),
        L_worst=L_worst,
        L_avg=float(N / s.size * s.sum()),
        L_objective=objective_L(V, Qm),
        L_Q=objective_LQ(Qm, Wm),
        normalized_variance=L_worst / (p * N**2) if N > 0 else 0.0,
        rmse=rmse(total, p),
    )
