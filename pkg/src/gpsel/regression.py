"""One-degree polynomial regression basis over the active regression set."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterDomainError


@dataclass(frozen=True)
class RegressionBasis:
    """Intercept plus the first-degree terms of the active regression inputs."""

    active: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(k) for k in self.active)
        if len(set(idx)) != len(idx) or any(k < 0 for k in idx):
            raise ParameterDomainError(f"invalid regression active set {idx}")
        object.__setattr__(self, "active", idx)

    @property
    def size(self) -> int:
        """Number of basis functions, intercept included."""
        return len(self.active) + 1


def basis_row(x: np.ndarray, basis: RegressionBasis) -> np.ndarray:
    """(1, x_i1, ..., x_im) in active-set order."""
    x = np.asarray(x, dtype=float).ravel()
    if basis.active and max(basis.active) >= x.size:
        raise ParameterDomainError(
            f"regression set {basis.active} out of range for d={x.size}")
    out = np.empty(basis.size)
    out[0] = 1.0
    for k, l in enumerate(basis.active, start=1):
        out[k] = x[l]
    return out


def basis_matrix(X: np.ndarray, basis: RegressionBasis) -> np.ndarray:
    """Stack of basis rows for every design row: shape (n, m1 + 1)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if basis.active and max(basis.active) >= X.shape[1]:
        raise ParameterDomainError(
            f"regression set {basis.active} out of range for d={X.shape[1]}")
    out = np.empty((X.shape[0], basis.size))
    out[:, 0] = 1.0
    for k, l in enumerate(basis.active, start=1):
        out[:, k] = X[:, l]
    return out
