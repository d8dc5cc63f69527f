# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batch clearing kernel.

Row-by-row fixed-point iteration p <- min(Lhat, max(0, x + Pi^T p)) with
per-row early exit; a row is frozen once its own sup-norm step drops below
tol, so results are independent of how scenarios are batched or ordered.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

BACKEND_NAME = "compiled"


def clear_scenarios_kernel(wealth, lhat, pi_inner, double tol, int max_iter):
    """Same contract as the numpy fallback: returns (payments, iters, converged)."""
    cdef const double[:, ::1] w = np.ascontiguousarray(wealth, dtype=np.float64)
    cdef const double[::1] lh = np.ascontiguousarray(lhat, dtype=np.float64)
    # pi_cols[i, j] = Pi[j, i]: row i holds the incoming-payment weights of
    # institution i, making the inner dot product contiguous.
    cdef const double[:, ::1] pi_cols = np.ascontiguousarray(
        np.asarray(pi_inner, dtype=np.float64).T
    )
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t d = w.shape[1]
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] p = out
    cdef double[::1] cur = np.empty(d, dtype=np.float64)
    cdef double[::1] nxt = np.empty(d, dtype=np.float64)
    cdef Py_ssize_t r, i, j
    cdef int it, worst_iters = 0
    cdef bint all_converged = True, row_done
    cdef double s, step, diff

    with nogil:
        for r in range(n):
            for i in range(d):
                cur[i] = lh[i]
            row_done = False
            for it in range(max_iter):
                step = 0.0
                for i in range(d):
                    s = w[r, i]
                    for j in range(d):
                        s += pi_cols[i, j] * cur[j]
                    if s < 0.0:
                        s = 0.0
                    if s > lh[i]:
                        s = lh[i]
                    nxt[i] = s
                    diff = fabs(s - cur[i])
                    if diff > step:
                        step = diff
                for i in range(d):
                    cur[i] = nxt[i]
                if step < tol:
                    row_done = True
                    if it + 1 > worst_iters:
                        worst_iters = it + 1
                    break
            if not row_done:
                all_converged = False
                worst_iters = max_iter
            for i in range(d):
                p[r, i] = cur[i]

    return out, worst_iters, bool(all_converged)
