"""Independent reference implementations used only by the tests."""
import functools
import itertools

import numpy as np


def bisection_lambda(r, z, eps, iters=200):
    """Root of sum(clip(r + lam, z, e^eps z)) = 1 by plain bisection."""
    lo_b, hi_b = z, np.exp(eps) * z
    lo, hi = np.min(lo_b - r) - 1.0, np.max(hi_b - r) + 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.clip(r + mid, lo_b, hi_b).sum() < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bisection_project(r, z, eps):
    lam = bisection_lambda(r, z, eps)
    return np.clip(r + lam, z, np.exp(eps) * z), lam


def bruteforce_qp_project(r, lo, hi):
    """Euclidean projection onto {sum q = 1, lo <= q <= hi} by enumerating every
    lower/upper/free assignment and keeping the closest feasible KKT candidate."""
    m = r.size
    best, best_d = None, np.inf
    for states in itertools.product((0, 1, 2), repeat=m):
        q = np.empty(m)
        free = [i for i, s in enumerate(states) if s == 0]
        for i, s in enumerate(states):
            if s == 1:
                q[i] = lo[i]
            elif s == 2:
                q[i] = hi[i]
        fixed = sum(q[i] for i, s in enumerate(states) if s != 0)
        if free:
            lam = (1.0 - fixed - sum(r[i] for i in free)) / len(free)
            for i in free:
                q[i] = r[i] + lam
        elif abs(fixed - 1.0) > 1e-12:
            continue
        if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12) or abs(q.sum() - 1) > 1e-9:
            continue
        d = np.sum((q - r) ** 2)
        if d < best_d:
            best, best_d = q, d
    return best


def random_feasible_z(m, eps, rng):
    """Row floor with a non-empty box: sum(z) in [e^-eps, 1]."""
    z = rng.uniform(0.1, 1.0, m)
    target = rng.uniform(np.exp(-eps), 1.0)
    return z * (target / z.sum())


def random_strategy(n, eps, rng, m=None):
    """A random valid epsilon-LDP strategy (projection of a random matrix)."""
    from ldpfactor.optimizer import project_strategy

    m = m or 4 * n
    for _ in range(100):
        z = random_feasible_z(m, eps, rng)
        R = rng.uniform(0.0, 2.0 / m, (m, n))
        Q = project_strategy(R, z, eps).matrix
        # fully clipped columns can coincide; keep only well-conditioned draws
        if np.linalg.cond(Q) < 1e6:
            return Q
    raise RuntimeError("could not draw a full-rank strategy")


def central_fd(f, X, h=1e-6):
    G = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += h
        Xm[idx] -= h
        G[idx] = (f(Xp) - f(Xm)) / (2 * h)
    return G


def brute_variance(V, Q, x):
    """Total variance by summing per-user covariance matrices."""
    total = 0.0
    for u, xu in enumerate(x):
        q = Q[:, u]
        cov = np.diag(q) - np.outer(q, q)
        total += xu * np.trace(V @ cov @ V.T)
    return total


@functools.lru_cache(maxsize=None)
def optimized(spec, epsilon=1.0, seed=0, m=None, T=1500):
    """Cached optimizer run shared across test modules."""
    from ldpfactor import workloads
    from ldpfactor.optimizer import OptimizerConfig, optimize

    W = workloads.from_spec(spec).matrix
    return optimize(W, OptimizerConfig(epsilon=epsilon, seed=seed, m=m, T=T))


def stable_clip_point(rng, n, eps, h):
    """(R, z) whose clip pattern does not change under +-h moves of any z entry."""
    from ldpfactor.kernels import FREE
    from ldpfactor.optimizer import _project as project

    m = 4 * n
    for _ in range(500):
        z = random_feasible_z(m, eps, rng)
        R = rng.uniform(0, 2.0 / m, (m, n))
        Q, _, state = project(R, z, eps)
        if np.linalg.cond(Q) > 1e6:
            continue
        ok = True
        for j in range(m):
            for s in (h, -h):
                zz = z.copy()
                zz[j] += s
                if np.any(project(R, zz, eps)[2] != state):
                    ok = False
                    break
            if not ok:
                break
        if ok and np.any(state != FREE):
            return R, z, state
    raise RuntimeError("no stable point found")
