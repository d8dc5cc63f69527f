"""Pure-numpy batch clearing kernel (fallback when the extension is absent).

Same fixed-point map as the compiled kernel: starting from full payment,
iterate p <- min(Lhat, max(0, x + p @ Pi_inner)) for every scenario row until
the largest componentwise step over all rows drops below tol.  The global
stopping rule keeps per-row results independent of row order.
"""

import numpy as np

BACKEND_NAME = "python"


def clear_scenarios_kernel(wealth, lhat, pi_inner, tol, max_iter):
    """Greatest clearing payments for each wealth row.

    wealth: (N, d) nonnegative terminal wealths (rows are scenarios)
    lhat: (d,) total liabilities per institution
    pi_inner: (d, d) relative liabilities between institutions, row=debtor
    Returns (payments (N, d), iterations used, converged flag).
    """
    wealth = np.ascontiguousarray(wealth, dtype=float)
    p = np.broadcast_to(lhat, wealth.shape).copy()
    for it in range(max_iter):
        nxt = np.minimum(lhat, np.maximum(0.0, wealth + p @ pi_inner))
        step = float(np.max(np.abs(nxt - p)))
        p = nxt
        if step < tol:
            return p, it + 1, True
    return p, max_iter, False
