# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""C implementations of the projection and per-user sampling kernels.

Same contracts as ``_kernels_py``; see that module for documentation.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef struct Breakpoint:
    double value
    Py_ssize_t key


cdef inline bint _less(Breakpoint a, Breakpoint b) noexcept nogil:
    # ties: lower-bound breakpoints (key < m) first, then original order
    return a.value < b.value or (a.value == b.value and a.key < b.key)


cdef void _sort(Breakpoint *v, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    """In-place quicksort of v[lo..hi]; keys are unique so the order is total."""
    cdef Py_ssize_t i, j, mid
    cdef Breakpoint t, pivot
    while hi - lo > 16:
        mid = lo + (hi - lo) // 2
        # median of three into v[mid]
        if _less(v[mid], v[lo]):
            t = v[mid]; v[mid] = v[lo]; v[lo] = t
        if _less(v[hi], v[lo]):
            t = v[hi]; v[hi] = v[lo]; v[lo] = t
        if _less(v[hi], v[mid]):
            t = v[hi]; v[hi] = v[mid]; v[mid] = t
        pivot = v[mid]
        i = lo
        j = hi
        while i <= j:
            while _less(v[i], pivot):
                i += 1
            while _less(pivot, v[j]):
                j -= 1
            if i <= j:
                t = v[i]; v[i] = v[j]; v[j] = t
                i += 1
                j -= 1
        # recurse on the smaller side
        if j - lo < hi - i:
            _sort(v, lo, j)
            lo = i
        else:
            _sort(v, i, hi)
            hi = j
    for i in range(lo + 1, hi + 1):
        t = v[i]
        j = i - 1
        while j >= lo and _less(t, v[j]):
            v[j + 1] = v[j]
            j -= 1
        v[j + 1] = t


def project_columns(R, z, double epsilon):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t m = Rv.shape[0]
    cdef Py_ssize_t n = Rv.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] Q = np.empty((m, n), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] lam_out = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.int8_t, ndim=2] state = np.zeros((m, n), dtype=np.int8)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hi = np.exp(epsilon) * zv

    cdef double zsum = 0.0
    cdef Py_ssize_t i, k, u
    for i in range(m):
        zsum += zv[i]

    cdef Breakpoint *bp = <Breakpoint *> malloc(2 * m * sizeof(Breakpoint))
    if bp == NULL:
        raise MemoryError()

    cdef double slope, offset, g, lam, a, val, shifted
    cdef bint found
    try:
        for u in range(n):
            for i in range(m):
                bp[i].value = zv[i] - Rv[i, u]
                bp[i].key = i
                bp[m + i].value = hi[i] - Rv[i, u]
                bp[m + i].key = m + i
            _sort(bp, 0, 2 * m - 1)

            slope = 0.0
            offset = 0.0
            found = False
            lam = bp[2 * m - 1].value
            for k in range(2 * m):
                val = bp[k].value
                g = zsum + slope * val - offset
                if g > 1.0:
                    lam = (1.0 - zsum + offset) / slope
                    found = True
                    break
                a = 1.0 if bp[k].key < m else -1.0
                slope += a
                offset += a * val
            lam_out[u] = lam

            for i in range(m):
                shifted = Rv[i, u] + lam
                if shifted <= zv[i]:
                    Q[i, u] = zv[i]
                    state[i, u] = 1
                elif shifted >= hi[i]:
                    Q[i, u] = hi[i]
                    state[i, u] = 2
                else:
                    Q[i, u] = shifted
    finally:
        free(bp)
    return Q, lam_out, state


def sample_per_user(cdf, types, uniforms):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] C = np.ascontiguousarray(cdf, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] T = np.ascontiguousarray(types, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] U = np.ascontiguousarray(uniforms, dtype=np.float64)
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t N = T.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(m, dtype=np.int64)
    cdef Py_ssize_t i, lo, hi, mid, t
    cdef double x
    for i in range(N):
        t = T[i]
        x = U[i]
        # first o with x < C[o, t]
        lo = 0
        hi = m - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if x < C[mid, t]:
                hi = mid
            else:
                lo = mid + 1
        counts[lo] += 1
    return counts
