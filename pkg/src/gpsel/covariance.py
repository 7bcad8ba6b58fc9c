"""Generalized exponential correlation with an additive nugget.

The correlation between two points is ``prod_l exp(-theta_l |x_l - u_l|^p_l)``
over the active dimensions, with ``theta_l >= 0`` and ``0 < p_l <= 2``.
The nugget ratio ``tau`` adds ``tau`` on the matrix diagonal and, for cross
correlations, whenever the query coincides exactly (bitwise, after
standardization) with a training point.  The process variance is factored
out everywhere: matrices here are ``Sigma / sigma^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterDomainError

#: restricted power grid used when the search is limited to these exponents
RESTRICTED_POWERS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class CorrelationParams:
    """Per-dimension inverse ranges ``theta``, powers ``p`` and nugget ratio ``tau``."""

    theta: np.ndarray
    p: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel().copy()
        p = np.asarray(self.p, dtype=float).ravel().copy()
        if theta.shape != p.shape:
            raise ParameterDomainError(
                f"theta has {theta.size} entries, p has {p.size}")
        if not np.all(np.isfinite(theta)) or np.any(theta < 0.0):
            raise ParameterDomainError("theta components must be finite and >= 0")
        if not np.all(np.isfinite(p)) or np.any(p <= 0.0) or np.any(p > 2.0):
            raise ParameterDomainError("p components must lie in (0, 2]")
        if not np.isfinite(self.tau) or self.tau < 0.0:
            raise ParameterDomainError("tau must be finite and >= 0")
        theta.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def size(self) -> int:
        return self.theta.size


def validate_active_set(indices, d: int) -> tuple[int, ...]:
    """Check an ordered active set: distinct indices within 0..d-1."""
    idx = tuple(int(k) for k in indices)
    if len(set(idx)) != len(idx):
        raise ParameterDomainError(f"active set has repeated indices: {idx}")
    if any(k < 0 or k >= d for k in idx):
        raise ParameterDomainError(f"active set {idx} outside 0..{d - 1}")
    return idx


def correlation(x: np.ndarray, u: np.ndarray, params: CorrelationParams) -> float:
    """Correlation of two points restricted to the active dimensions."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if x.shape != u.shape or x.size != params.size:
        raise ParameterDomainError(
            f"point dimension {x.size}/{u.size} does not match params ({params.size})")
    d = np.abs(x - u)
    s = 0.0
    for l in range(d.size):
        if d[l] > 0.0:
            s += params.theta[l] * d[l] ** params.p[l]
    return float(np.exp(-s))


def build_correlation_matrix(X: np.ndarray, params: CorrelationParams) -> np.ndarray:
    """``R + tau I`` over the rows of the active design: symmetric, diag ``1 + tau``."""
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != params.size:
        raise ParameterDomainError(
            f"design has {X.shape[-1]} columns, params have {params.size}")
    return kernels.corr_matrix(X, params.theta, params.p, params.tau)


def cross_correlation_vector(X: np.ndarray, x_star: np.ndarray,
                             params: CorrelationParams) -> np.ndarray:
    """Correlations of one query point with every training row (plus nugget hits)."""
    return cross_correlation_matrix(X, np.atleast_2d(x_star), params)[:, 0]


def cross_correlation_matrix(X: np.ndarray, Q: np.ndarray,
                             params: CorrelationParams) -> np.ndarray:
    """(n, q) cross correlations for a batch of q query points."""
    X = np.ascontiguousarray(X, dtype=float)
    Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=float)
    if X.shape[1] != params.size or Q.shape[1] != params.size:
        raise ParameterDomainError(
            f"dimension mismatch: design {X.shape[1]}, query {Q.shape[1]}, "
            f"params {params.size}")
    return kernels.cross_corr(X, Q, params.theta, params.p, params.tau)
