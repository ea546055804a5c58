"""Running a factorization mechanism: sample responses, reconstruct, post-process.

Randomness comes from numpy's ``default_rng`` (PCG64), seeded with an int or
a ``SeedSequence``; the same seed gives the same responses on every platform.
"""
from __future__ import annotations

import csv
import math

import numpy as np

from . import baselines, kernels
from .metrics import optimal_V
from .model import DataVector, DimensionError, ResponseVector, StrategyMatrix, Workload, validate_strategy

SIM_COLUMNS = ("trial", "workload", "strategy", "epsilon", "N", "squared_error", "rmse", "wnnls_flag")


class NotConvergedError(RuntimeError):
    """WNNLS ran out of iterations before meeting the KKT tolerance."""


def _matrix(a):
    if isinstance(a, (Workload, StrategyMatrix)):
        return a.matrix
    return np.asarray(a, dtype=np.float64)


def _counts(x):
    if isinstance(x, DataVector):
        return x.counts
    return DataVector(x).counts


def _checked_strategy(Q):
    if isinstance(Q, StrategyMatrix):
        report = validate_strategy(Q, Q.epsilon)
        if not report.ok:
            raise ValueError(f"invalid strategy: {report}")
        return Q.matrix
    Qm = np.asarray(Q, dtype=np.float64)
    if Qm.ndim != 2 or Qm.min() < 0 or np.abs(Qm.sum(axis=0) - 1).max() > 1e-9:
        raise ValueError("strategy must be a nonnegative column-stochastic matrix")
    return Qm


def run_mechanism(Q, x, seed=None, mode="multinomial") -> ResponseVector:
    """Randomize every user of ``x`` through ``Q`` and histogram the outputs.

    ``mode="multinomial"`` draws one multinomial per user type, which has the
    same distribution as independent per-user draws at O(n m) cost.
    ``mode="per_user"`` draws each user separately (for validation).
    """
    Qm = _checked_strategy(Q)
    counts = _counts(x)
    m, n = Qm.shape
    if counts.size != n:
        raise DimensionError(f"data vector has {counts.size} types, strategy has {n} columns")
    rng = np.random.default_rng(seed)
    if mode == "multinomial":
        y = np.zeros(m, dtype=np.int64)
        for u in np.flatnonzero(counts):
            p = np.clip(Qm[:, u], 0.0, None)
            y += rng.multinomial(int(counts[u]), p / p.sum())
        return ResponseVector(y)
    if mode == "per_user":
        types = np.repeat(np.arange(n), counts)
        cdf = np.cumsum(Qm, axis=0)
        cdf /= cdf[-1]
        return ResponseVector(kernels.sample_per_user(cdf, types, rng.random(types.size)))
    raise ValueError(f"unknown sampling mode {mode!r}")


def estimate(V, y):
    """Unbiased workload answers ``V y``."""
    V = np.asarray(V, dtype=np.float64)
    counts = y.counts if isinstance(y, ResponseVector) else np.asarray(y)
    if V.ndim != 2 or V.shape[1] != counts.size:
        raise DimensionError(f"V is {V.shape} but the response vector has {counts.size} entries")
    return V @ counts


def kkt_residual(W, x, target):
    """Largest violation of the NNLS optimality conditions at ``x``."""
    g = 2.0 * W.T @ (W @ x - target)
    pos = x > 0
    viol = np.where(pos, np.abs(g), np.maximum(-g, 0.0))
    return float(viol.max()) if viol.size else 0.0


def _active_set_polish(W, target, x, tol, max_steps=None):
    """Lawson-Hanson active-set iterations warm started at a feasible ``x``.

    Returns a KKT point, or None if ``max_steps`` runs out.
    """
    n = x.size
    max_steps = 3 * n + 10 if max_steps is None else max_steps
    P = x > 0
    x = np.where(P, x, 0.0)
    for _ in range(max_steps):
        s = np.zeros(n)
        if P.any():
            s[P] = np.linalg.lstsq(W[:, P], target, rcond=None)[0]
        while P.any() and np.any(s[P] <= 0):
            bad = P & (s <= 0)
            step = np.min(x[bad] / (x[bad] - s[bad]))
            x = x + step * (s - x)
            P &= x > 1e-300
            x[~P] = 0.0
            s = np.zeros(n)
            if P.any():
                s[P] = np.linalg.lstsq(W[:, P], target, rcond=None)[0]
        x = s
        if kkt_residual(W, x, target) <= tol:
            return x
        g = 2.0 * W.T @ (W @ x - target)
        g[P] = np.inf
        j = int(np.argmin(g))
        if g[j] >= -tol:
            # remaining violation sits on the support: least-squares roundoff
            return x if kkt_residual(W, x, target) <= 10 * tol else None
        P[j] = True
    return None


def wnnls(W, target, tol=None, max_iter=20000, polish_every=25):
    """Nonnegative ``x`` minimizing ``||W x - target||^2``.

    Accelerated projected gradient (FISTA with backtracking and adaptive
    restart).  Every ``polish_every`` iterations an active-set refinement is
    tried from the current iterate so the KKT conditions can be met to
    ``tol``.  Default ``tol`` is ``1e-8 (1 + ||W^T target||_inf)``.
    """
    W = _matrix(W)
    target = np.asarray(target, dtype=np.float64)
    if W.ndim != 2 or target.shape != (W.shape[0],):
        raise DimensionError(f"W is {W.shape} but target has shape {target.shape}")
    Wt = W.T @ target
    if tol is None:
        tol = 1e-8 * (1.0 + np.abs(Wt).max())
    n = W.shape[1]
    WtW = W.T @ W

    def f(v):
        r = W @ v - target
        return r @ r

    def grad(v):
        return 2.0 * (WtW @ v - Wt)

    x = np.zeros(n)
    if kkt_residual(W, x, target) <= tol:
        return x
    lip = 2.0 * max(np.linalg.norm(W, 2) ** 2, 1e-300)
    y, t, fx = x.copy(), 1.0, f(x)
    for it in range(1, max_iter + 1):
        gy, fy = grad(y), f(y)
        while True:
            x_new = np.maximum(y - gy / lip, 0.0)
            d = x_new - y
            if f(x_new) <= fy + gy @ d + 0.5 * lip * (d @ d) + 1e-12 * abs(fy):
                break
            lip *= 2.0
        f_new = f(x_new)
        if f_new > fx and t > 1.0:
            # restart momentum; a plain step from x is always kept
            y, t = x.copy(), 1.0
            continue
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, t, fx = x_new, t_new, f_new
        if it % polish_every == 0:
            if kkt_residual(W, x, target) <= tol:
                return x
            xp = _active_set_polish(W, target, x, tol)
            if xp is not None:
                return xp
    if kkt_residual(W, x, target) <= tol:
        return x
    raise NotConvergedError(
        f"WNNLS did not reach KKT tolerance {tol:.3g} in {max_iter} iterations "
        f"(residual {kkt_residual(W, x, target):.3g})"
    )


def strategy_from_spec(spec, W, epsilon, seed=0, **opt_kw):
    """A strategy by name: any baseline spec, or ``opt``/``optimized`` to run the optimizer."""
    if isinstance(spec, StrategyMatrix):
        return spec
    n = _matrix(W).shape[1]
    if spec.strip().lower() in ("opt", "optimized"):
        from .optimizer import OptimizerConfig, optimize

        return optimize(W, OptimizerConfig(epsilon=epsilon, seed=seed, **opt_kw)).Q
    return baselines.from_spec(spec, n, epsilon)


def run_end_to_end(W, Q_or_spec, x, seed=None, use_wnnls=False, epsilon=None, V=None):
    """Sample, reconstruct and (optionally) make consistent with WNNLS.

    Returns a dict with ``answers``, ``error`` (total squared error against
    ``W x``) and ``rmse`` (per query).
    """
    Wm = _matrix(W)
    if isinstance(Q_or_spec, str):
        if epsilon is None:
            raise ValueError("a strategy spec needs epsilon")
        Q = strategy_from_spec(Q_or_spec, Wm, epsilon)
    else:
        Q = Q_or_spec
    counts = _counts(x)
    truth = Wm @ counts
    if V is None:
        V = optimal_V(Wm, Q)
    y = run_mechanism(Q, counts, seed)
    answers = estimate(V, y)
    x_hat = None
    if use_wnnls:
        x_hat = wnnls(Wm, answers)
        answers = Wm @ x_hat
    err = float(((answers - truth) ** 2).sum())
    return {
        "answers": answers,
        "error": err,
        "rmse": math.sqrt(err / Wm.shape[0]),
        "x_hat": x_hat,
        "responses": y,
    }


def simulate(W, Q, x, trials, seed=0, use_wnnls=False, workload="custom", strategy="custom"):
    """Independent end-to-end trials; one dict per trial in :data:`SIM_COLUMNS` order.

    Trial ``i`` draws from child ``i`` of ``SeedSequence(seed)``.
    """
    Wm = _matrix(W)
    V = optimal_V(Wm, Q)
    counts = _counts(x)
    eps = Q.epsilon if isinstance(Q, StrategyMatrix) else float("nan")
    rows = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        out = run_end_to_end(Wm, Q, counts, seed=child, use_wnnls=use_wnnls, V=V)
        rows.append(
            {
                "trial": i,
                "workload": workload,
                "strategy": strategy,
                "epsilon": eps,
                "N": int(counts.sum()),
                "squared_error": out["error"],
                "rmse": out["rmse"],
                "wnnls_flag": int(bool(use_wnnls)),
            }
        )
    return rows


def write_simulation_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SIM_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
