"""Hot numeric kernels: correlation-matrix assembly and cross correlations.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
fallback.  The active backend is chosen once at import time from the
``GPSEL_BACKEND`` environment variable (``"numba"``, the default, or
``"numpy"``).  Both paths accumulate per-dimension terms in the same
order, so results agree to floating round-off; ``benchmarks/bench_kernels.py``
compares their speed.

All kernels expect inputs already restricted to the active covariance set
and standardized to [0, 1]; ``theta``/``p`` are aligned with the columns of
the design.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_VAR = "GPSEL_BACKEND"
_requested = os.environ.get(_ENV_VAR, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}")


# ---------------------------------------------------------------------------
# pure-numpy fallbacks
# ---------------------------------------------------------------------------

def _corr_matrix_numpy(X: np.ndarray, theta: np.ndarray, p: np.ndarray,
                       tau: float) -> np.ndarray:
    n, m = X.shape
    s = np.zeros((n, n))
    for l in range(m):
        s += theta[l] * np.abs(X[:, l, None] - X[None, :, l]) ** p[l]
    a = np.exp(-s)
    np.fill_diagonal(a, 1.0 + tau)
    return a


def _cross_corr_numpy(X: np.ndarray, Q: np.ndarray, theta: np.ndarray,
                      p: np.ndarray, tau: float) -> np.ndarray:
    n, m = X.shape
    q = Q.shape[0]
    s = np.zeros((n, q))
    same = np.ones((n, q), dtype=bool)
    for l in range(m):
        diff = X[:, l, None] - Q[None, :, l]
        same &= diff == 0.0
        s += theta[l] * np.abs(diff) ** p[l]
    k = np.exp(-s)
    k[same] += tau
    return k


def _corr_from_profiles_numpy(P: np.ndarray, theta: np.ndarray,
                              tau: float) -> np.ndarray:
    # P[l] holds |x_i - x_j|**p_l for dimension l, zero diagonal.
    n = P.shape[1]
    s = (theta @ P.reshape(P.shape[0], n * n)).reshape(n, n)
    np.negative(s, out=s)
    a = np.exp(s, out=s)
    np.fill_diagonal(a, 1.0 + tau)
    return a


# ---------------------------------------------------------------------------
# numba versions
# ---------------------------------------------------------------------------

_have_numba = False
if _requested == "numba":
    try:
        from numba import njit

        _have_numba = True
    except ImportError:  # fall back silently; backend() reports the truth
        _have_numba = False

if _have_numba:

    @njit(cache=True)
    def _corr_matrix_numba(X, theta, p, tau):  # pragma: no cover - jitted
        n, m = X.shape
        a = np.empty((n, n))
        for i in range(n):
            a[i, i] = 1.0 + tau
            for j in range(i):
                s = 0.0
                for l in range(m):
                    d = abs(X[i, l] - X[j, l])
                    if d > 0.0:
                        s += theta[l] * d ** p[l]
                v = math.exp(-s)
                a[i, j] = v
                a[j, i] = v
        return a

    @njit(cache=True)
    def _cross_corr_numba(X, Q, theta, p, tau):  # pragma: no cover - jitted
        n, m = X.shape
        q = Q.shape[0]
        k = np.empty((n, q))
        for jq in range(q):
            for i in range(n):
                s = 0.0
                same = True
                for l in range(m):
                    d = abs(X[i, l] - Q[jq, l])
                    if d > 0.0:
                        same = False
                        s += theta[l] * d ** p[l]
                v = math.exp(-s)
                if same:
                    v += tau
                k[i, jq] = v
        return k

    @njit(cache=True)
    def _corr_from_profiles_numba(P, theta, tau):  # pragma: no cover - jitted
        # accumulate with the dimension loop outermost: P[l] slabs are read
        # sequentially instead of striding across the whole stack per entry
        m = P.shape[0]
        n = P.shape[1]
        s = np.zeros((n, n))
        for l in range(m):
            tl = theta[l]
            for i in range(n):
                for j in range(i):
                    s[i, j] += tl * P[l, i, j]
        a = np.empty((n, n))
        for i in range(n):
            a[i, i] = 1.0 + tau
            for j in range(i):
                v = math.exp(-s[i, j])
                a[i, j] = v
                a[j, i] = v
        return a

    corr_matrix = _corr_matrix_numba
    cross_corr = _cross_corr_numba
else:
    corr_matrix = _corr_matrix_numpy
    cross_corr = _cross_corr_numpy

# profile accumulation is dominated by the exponential, where numpy's
# vectorized exp beats a scalar-libm loop at every size we care about
# (see benchmarks/bench_kernels.py), so it always uses the numpy path
corr_from_profiles = _corr_from_profiles_numpy


def backend() -> str:
    """Name of the kernel backend actually in use."""
    return "numba" if _have_numba else "numpy"


def abs_diff_profiles(X: np.ndarray) -> np.ndarray:
    """Stack of per-dimension |x_i - x_j| matrices, shape (m, n, n)."""
    return np.abs(X.T[:, :, None] - X.T[:, None, :])
