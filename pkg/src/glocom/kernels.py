"""Kernel backend selection.

The compiled extension implements the transport-plan inner loop; a numpy
twin with identical semantics ships alongside it. Set GLOCOM_PURE_PYTHON=1
(before import) to force the numpy path.
"""

import os

import numpy as np
from scipy.special import logsumexp

_FORCE_PURE = os.environ.get("GLOCOM_PURE_PYTHON", "") == "1"

_speedups = None
if not _FORCE_PURE:
    try:
        from . import _speedups  # type: ignore[attr-defined]
    except ImportError:
        _speedups = None

BACKEND = "cython" if _speedups is not None else "numpy"


def sinkhorn_log_numpy(Mr, loga, logb, max_iters, tol):
    """Log-domain alternating marginal scaling, numpy reference version.

    Returns (u, v, iterations_used, converged). Kernel collapse (a row or
    column of the Gibbs kernel with no finite entry) surfaces as non-finite
    potentials for the caller to detect.
    """
    a = np.exp(loga)
    b = np.exp(logb)
    u = np.zeros_like(loga)
    v = np.zeros_like(logb)
    iters_used = 0
    converged = False
    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, max_iters + 1):
            iters_used = it
            u = loga - logsumexp(Mr + v[None, :], axis=1)
            if not np.all(np.isfinite(u)):
                u = np.full_like(u, np.inf)
                break
            v = logb - logsumexp(Mr + u[:, None], axis=0)
            if not np.all(np.isfinite(v)):
                u = np.full_like(u, np.inf)
                break
            P = np.exp(Mr + u[:, None] + v[None, :])
            row_err = np.abs(P.sum(axis=1) - a).sum()
            col_err = np.abs(P.sum(axis=0) - b).sum()
            if row_err < tol and col_err < tol:
                converged = True
                break
    return u, v, iters_used, converged


def sinkhorn_log(Mr, loga, logb, max_iters, tol):
    """Dispatch to the compiled kernel when available."""
    if _speedups is not None:
        Mr = np.ascontiguousarray(Mr, dtype=np.float64)
        return _speedups.sinkhorn_log(
            Mr,
            np.ascontiguousarray(loga, dtype=np.float64),
            np.ascontiguousarray(logb, dtype=np.float64),
            int(max_iters),
            float(tol),
        )
    return sinkhorn_log_numpy(Mr, loga, logb, max_iters, tol)
