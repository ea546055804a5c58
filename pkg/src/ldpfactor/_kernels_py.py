"""Pure-numpy implementations of the hot kernels.

These are the reference versions; ``_kernels.pyx`` mirrors them one column
(or one user) at a time in C.  Both must return identical results up to
floating-point summation order.
"""
import numpy as np

FREE, LOWER, UPPER = 0, 1, 2


def project_columns(R, z, epsilon):
    """Project every column of ``R`` onto ``{q : sum(q) = 1, z <= q <= e^eps z}``.

    Breakpoint scan over the sorted values ``[z - r, e^eps z - r]``; all
    columns are processed at once.

    Returns
    -------
    Q : (m, n) ndarray
    lam : (n,) ndarray
        The shift added to each column before clipping.
    state : (m, n) int8 ndarray
        FREE / LOWER / UPPER clip state of every entry.
    """
    R = np.asarray(R, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    m, n = R.shape
    hi = np.exp(epsilon) * z
    zsum = z.sum()

    breaks = np.concatenate([z[:, None] - R, hi[:, None] - R], axis=0)
    # stable: a lower breakpoint precedes an upper one at equal value
    order = np.argsort(breaks, axis=0, kind="stable")
    u = np.take_along_axis(breaks, order, axis=0)
    a = np.where(order < m, 1.0, -1.0)
    slope = np.cumsum(a, axis=0) - a
    offset = np.cumsum(a * u, axis=0) - a * u
    g = zsum + slope * u - offset

    hit = g > 1.0
    found = hit.any(axis=0)
    rho = np.argmax(hit, axis=0)
    cols = np.arange(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_hit = (1.0 - zsum + offset[rho, cols]) / slope[rho, cols]
    lam = np.where(found, lam_hit, u[-1])

    shifted = R + lam
    state = np.zeros((m, n), dtype=np.int8)
    lower = shifted <= z[:, None]
    upper = ~lower & (shifted >= hi[:, None])
    state[lower] = LOWER
    state[upper] = UPPER
    Q = np.where(lower, z[:, None], np.where(upper, hi[:, None], shifted))
    return Q, lam, state


def sample_per_user(cdf, types, uniforms):
    """Draw one output per user by inverse-CDF lookup and histogram them.

    ``cdf`` holds the column-wise cumulative sums of the strategy matrix;
    user ``i`` of type ``types[i]`` reports the first output ``o`` with
    ``uniforms[i] < cdf[o, types[i]]``.
    """
    cdf = np.asarray(cdf, dtype=np.float64)
    m = cdf.shape[0]
    counts = np.zeros(m, dtype=np.int64)
    types = np.asarray(types, dtype=np.int64)
    uniforms = np.asarray(uniforms, dtype=np.float64)
    for t in np.unique(types):
        sel = uniforms[types == t]
        outs = np.searchsorted(cdf[:, t], sel, side="right")
        np.minimum(outs, m - 1, out=outs)
        counts += np.bincount(outs, minlength=m)
    return counts
