"""Strategy optimization by projected gradient descent over ``(Q, z)``.

Each iteration forms ``R = Q - beta grad_Q``, moves the row floors ``z``
against the gradient back-propagated through the projection of ``R``, and
projects every column of ``R`` onto ``{q : 1^T q = 1, z <= q <= e^eps z}``
for the updated ``z``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .kernels import FREE, LOWER, UPPER
from .metrics import COND_LIMIT, IllConditionedError, svd_lower_bound
from .model import StrategyMatrix, Workload

log = logging.getLogger(__name__)

BOX_TOL = 1e-12


class InfeasibleBoxError(ValueError):
    """No probability vector fits between ``z`` and ``e^eps z``."""


class DivergenceError(RuntimeError):
    """The objective blew up; the step size is too large."""


def _check_box(z, epsilon):
    if np.any(z < 0):
        raise InfeasibleBoxError("z must be nonnegative")
    total = z.sum()
    if total > 1 + BOX_TOL or np.exp(epsilon) * total < 1 - BOX_TOL:
        raise InfeasibleBoxError(
            f"need sum(z) <= 1 <= e^eps sum(z); got sum(z) = {total:.6g}, e^eps sum(z) = {np.exp(epsilon) * total:.6g}"
        )


def project_column(r, z, epsilon):
    """Euclidean projection of ``r`` onto the bounded probability simplex."""
    r = np.asarray(r, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if r.shape != z.shape or r.ndim != 1:
        raise ValueError("r and z must be 1-d vectors of equal length")
    _check_box(z, epsilon)
    Q, _, _ = kernels.project_columns(r[:, None], z, float(epsilon))
    return Q[:, 0]


def _project(R, z, epsilon):
    R = np.asarray(R, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if R.ndim != 2 or z.shape != (R.shape[0],):
        raise ValueError(f"R {R.shape} and z {z.shape} are inconsistent")
    _check_box(z, epsilon)
    return kernels.project_columns(R, z, float(epsilon))


def project_strategy(R, z, epsilon):
    """Column-wise projection of ``R``; returns a :class:`StrategyMatrix` carrying ``z``."""
    Q, _, _ = _project(R, z, epsilon)
    return StrategyMatrix(Q, epsilon, z=np.asarray(z, dtype=np.float64), kind="projected")


def _objective_and_grad(Q, G):
    """``L(Q) = tr[X^-1 G]`` and its gradient, ``X = Q^T D^-1 Q``, ``G = W^T W``.

    dL = -tr[M dX] with M = X^-1 G X^-1.  Differentiating X through both Q
    and D = Diag(Q 1) gives  -2 A M + diag(A M A^T) 1^T  with A = D^-1 Q.
    """
    d = Q.sum(axis=1)
    if np.any(d <= 0):
        raise IllConditionedError("strategy has an all-zero row")
    A = Q / d[:, None]
    X = Q.T @ A
    try:
        C = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        raise IllConditionedError("Q^T D^-1 Q is singular") from None
    cdiag = np.diag(C)
    if (cdiag.max() / cdiag.min()) ** 2 > COND_LIMIT:
        raise IllConditionedError("Q^T D^-1 Q is ill-conditioned")
    Xinv = np.linalg.inv(X)
    XiG = Xinv @ G
    L = float(np.trace(XiG))
    M = XiG @ Xinv
    AM = A @ M
    grad = -2.0 * AM + (AM * A).sum(axis=1)[:, None]
    return L, grad


def _as_matrix(a):
    return a.matrix if isinstance(a, (StrategyMatrix, Workload)) else np.asarray(a, dtype=np.float64)


def grad_Q(Q, W):
    """Gradient of ``tr[(Q^T D^-1 Q)^-1 W^T W]`` with respect to ``Q`` (full-rank path)."""
    Q, W = _as_matrix(Q), _as_matrix(W)
    return _objective_and_grad(Q, W.T @ W)[1]


def _grad_z_from_state(state, epsilon, upstream):
    e = np.exp(epsilon)
    c = np.where(state == LOWER, 1.0, np.where(state == UPPER, e, 0.0))
    free = state == FREE
    nfree = free.sum(axis=0)
    free_sum = np.where(free, upstream, 0.0).sum(axis=0)
    share = np.divide(free_sum, nfree, out=np.zeros_like(free_sum), where=nfree > 0)
    return (upstream * c).sum(axis=1) - (c * share[None, :]).sum(axis=1)


def grad_z(R, z, epsilon, upstream, state=None):
    """Vector-Jacobian product of the projection ``Q = Pi_{z,eps}(R)`` with respect to ``z``.

    ``state`` is the clip state of that projection; it is recomputed from the
    pre-projection matrix ``R`` when not supplied.
    """
    if state is None:
        if R is None:
            raise ValueError("grad_z needs the clip state or the pre-projection matrix")
        _, _, state = _project(R, z, epsilon)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != state.shape:
        raise ValueError(f"upstream {upstream.shape} does not match the projection {state.shape}")
    return _grad_z_from_state(state, epsilon, upstream)


def init_z(n, m, epsilon):
    """Uniform floor ``(1 + e^-eps) / (2m)``; equals ``(1 + e^-eps) / (8n)`` at ``m = 4n``."""
    return np.full(m, (1.0 + np.exp(-epsilon)) / (2.0 * m))


def _init(n, m, epsilon, seed, redraws=5):
    if m < n:
        raise ValueError(f"need m >= n, got m={m}, n={n}")
    rng = np.random.default_rng(seed)
    z = init_z(n, m, epsilon)
    for _ in range(redraws):
        R = rng.uniform(0.0, 1.0, size=(m, n))
        Q, _, state = _project(R, z, epsilon)
        if np.linalg.matrix_rank(Q) == n:
            return Q, z, state
    raise RuntimeError(f"random initialization was rank deficient {redraws} times")


def init_strategy(n, m, epsilon, seed):
    """Random ``U[0,1]`` matrix projected onto the box of :func:`init_z`."""
    Q, z, _ = _init(n, m, epsilon, seed)
    return StrategyMatrix(Q, epsilon, z=z, kind="init"), z


@dataclass
class OptimizerConfig:
    """Settings for :func:`optimize`.

    ``beta`` is the step on ``Q``; the step on ``z`` is ``beta / alpha_ratio``
    with ``alpha_ratio`` defaulting to ``n e^eps``.  ``beta=None`` means
    "tune it" with :func:`tune_step_size`.  With ``backtrack`` a step that
    raises the objective is retried at half the step size; the next
    iteration starts again from ``beta``.
    """

    epsilon: float
    m: int | None = None
    T: int = 1500
    beta: float | None = None
    alpha_ratio: float | None = None
    seed: int = 0
    decay: float = 1.0
    stop_tol: float = 1e-9
    patience: int = 50
    backtrack: bool = True
    max_halvings: int = 30
    tune_iters: int = 50

    def __post_init__(self):
        if self.beta is not None and self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.T < 0:
            raise ValueError("T must be >= 0")


@dataclass
class OptimizeResult:
    Q: StrategyMatrix
    z: np.ndarray
    objective_trace: list
    final_objective: float
    lower_bound: float
    iterations_run: int
    beta: float
    initial_objective: float
    stopped: str = "iterations"
    halvings: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def gap_ratio(self):
        return self.final_objective / self.lower_bound if self.lower_bound > 0 else math.inf


def _workload_gram(W):
    W = _as_matrix(W)
    if not np.any(W):
        raise ValueError("workload is identically zero")
    return W, W.T @ W


def _repair_z(z, epsilon):
    # keep the box non-empty: sum(z) in [e^-eps, 1]
    total = z.sum()
    lo = np.exp(-epsilon)
    if total > 1.0:
        return z / total
    if total < lo:
        return z * (lo / total) if total > 0 else np.full_like(z, lo / z.size)
    return z


def optimize(W, config: OptimizerConfig, init=None):
    """Minimize ``L(Q)`` over epsilon-LDP strategies.

    ``init`` may be a ``(Q, z)`` pair to warm start from; by default a random
    strategy with ``m = 4n`` rows is drawn from ``config.seed``.
    """
    W, G = _workload_gram(W)
    n = W.shape[1]
    eps = float(config.epsilon)
    m = config.m or 4 * n
    beta = config.beta
    if beta is None and config.T > 0:
        beta = tune_step_size(W, config, None)

    if init is None:
        Q, z, state = _init(n, m, eps, config.seed)
    else:
        Q0, z = init
        Q0 = _as_matrix(Q0)
        z = np.asarray(z, dtype=np.float64)
        Q, _, state = _project(Q0, z, eps)
        m = Q.shape[0]

    e = np.exp(eps)
    ratio = config.alpha_ratio if config.alpha_ratio is not None else n * e
    L, gQ = _objective_and_grad(Q, G)
    trace = [L]
    L0 = L
    stall = 0
    halvings = 0
    stopped = "iterations"
    t = 0
    for t in range(1, config.T + 1):
        step = beta
        accepted = False
        for attempt in range(config.max_halvings + 1):
            R = Q - step * gQ
            # the z gradient must use the clip pattern of projecting this R;
            # the previous pattern goes stale as soon as Q moves
            _, _, trial_state = _project(R, z, eps)
            gz = _grad_z_from_state(trial_state, eps, gQ)
            # joint (z, Q) step first; if it does not descend, the Q-only step
            # at the same size (a projected gradient step on a fixed box)
            for z_scale in (1.0, 0.0) if config.backtrack else (1.0,):
                z_new = _repair_z(np.clip(z - z_scale * (step / ratio) * gz, 0.0, 1.0), eps)
                Q_new, _, state_new = _project(R, z_new, eps)
                try:
                    L_new, g_new = _objective_and_grad(Q_new, G)
                except IllConditionedError:
                    if not config.backtrack:
                        raise DivergenceError(
                            f"iterate {t} lost rank with beta={beta:.3g}; try a smaller step size"
                        ) from None
                    L_new = math.inf
                if not config.backtrack or L_new <= L:
                    accepted = True
                    break
                halvings += z_scale == 0.0
            if accepted:
                break
            step *= 0.5
        if not accepted:
            stopped = "no_descent"
            break
        improvement = (L - L_new) / max(abs(L), 1e-300)
        Q, z, state, L, gQ = Q_new, z_new, state_new, L_new, g_new
        trace.append(L)
        if not config.backtrack and t >= 10 and L > 10 * trace[-11]:
            raise DivergenceError(
                f"objective grew {L / trace[-11]:.3g}x over 10 iterations at beta={beta:.3g}; "
                "reduce the step size or enable backtracking"
            )
        stall = stall + 1 if improvement < config.stop_tol else 0
        if config.stop_tol > 0 and stall >= config.patience:
            stopped = "converged"
            break
        beta *= config.decay

    result_Q = StrategyMatrix(Q, eps, z=z, kind="optimized", meta={"seed": config.seed, "objective_value": L})
    return OptimizeResult(
        Q=result_Q,
        z=z,
        objective_trace=trace,
        final_objective=L,
        lower_bound=svd_lower_bound(W, eps),
        iterations_run=len(trace) - 1,
        beta=beta,
        initial_objective=L0,
        stopped=stopped,
        halvings=halvings,
    )


def default_step_candidates(W, config: OptimizerConfig, num=9):
    """Log-spaced steps scaled by the initial objective: ``c / L(Q0)`` for ``c`` in ``[1e-3, 10]``.

    ``L`` is homogeneous of degree -1 in ``Q``, so gradient entries scale like
    ``L / n`` while strategy entries are ``O(1/m)``; dividing by ``L`` makes
    the grid roughly workload independent.
    """
    W, G = _workload_gram(W)
    n = W.shape[1]
    Q, _, _ = _init(n, config.m or 4 * n, config.epsilon, config.seed)
    L0, _ = _objective_and_grad(Q, G)
    return list(np.logspace(-3, 1, num) / L0)


def tune_step_size(W, config: OptimizerConfig, candidates=None, iters=None):
    """Short runs for each candidate; return the step with the lowest objective.

    The runs use the backtracking setting of ``config``.  A candidate fails if
    it diverges, loses rank, or makes no progress from its starting objective
    (with backtracking, a hopelessly large step halves itself into a stall).
    """
    if candidates is None:
        candidates = default_step_candidates(W, config)
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no step-size candidates")
    if len(candidates) == 1:
        return float(candidates[0])
    iters = config.tune_iters if iters is None else iters
    best, best_L = None, math.inf
    for beta in candidates:
        trial = replace(config, beta=float(beta), T=iters, stop_tol=0.0)
        try:
            res = optimize(W, trial)
        except (DivergenceError, IllConditionedError, FloatingPointError):
            log.debug("step %.3g diverged", beta)
            continue
        L = res.final_objective
        if not math.isfinite(L) or L >= res.initial_objective:
            continue
        if L < best_L:
            best, best_L = float(beta), L
    if best is None:
        raise DivergenceError(f"all {len(candidates)} step-size candidates diverged")
    return best
