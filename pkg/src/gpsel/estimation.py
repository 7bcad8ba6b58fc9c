"""Profile maximum-likelihood machinery for the Gaussian process model.

Given correlation parameters, the regression coefficients and the process
variance have closed forms: ``beta_hat`` is the generalized least squares
estimator under the correlation inner product and ``sigma2_hat`` is the
averaged weighted residual quadratic form.  Substituting both into the
log-likelihood leaves the profile objective

    psi(theta, p, tau) = det(R + tau I)^(1/n) * sigma2_hat,

whose minimizer is the maximum-likelihood estimate of the correlation
parameters.  All solves go through one Cholesky factorization of
``R + tau I``; the determinant is accumulated from the factor diagonal in
log space so it cannot overflow.  Factorization failures escalate through a
deterministic jitter ladder before giving up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr as _qr
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotrf as _dpotrf
from scipy.linalg.lapack import dpotrs as _dpotrs
from scipy.linalg.lapack import dtrtrs as _dtrtrs

from . import kernels
from .errors import (IllConditionedError, ParameterDomainError,
                     RankDeficiencyError, SampleTooSmallError)
from .regression import RegressionBasis, basis_matrix

#: multiples of the mean diagonal added when a factorization attempt fails
JITTER_LADDER = (1e-12, 1e-10, 1e-8, 1e-6)

#: multiplier for the optimizer penalty on factorization failure
PENALTY_FACTOR = 1e6

LOG_2PI = math.log(2.0 * math.pi)


def chol_factor_jittered(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a``, escalating jitter on failure.

    Returns ``(L, jitter_used)`` where the jitter is the multiple of the
    mean diagonal that had to be added (0.0 on a clean factorization).
    """
    try:
        return np.linalg.cholesky(a), 0.0
    except np.linalg.LinAlgError:
        pass
    bump = float(np.mean(np.diag(a)))
    eye = np.eye(a.shape[0])
    for level in JITTER_LADDER:
        try:
            return np.linalg.cholesky(a + (level * bump) * eye), level
        except np.linalg.LinAlgError:
            continue
    raise IllConditionedError(
        f"covariance factorization failed at jitter {JITTER_LADDER[-1]:g} "
        f"x mean diagonal", jitter_attempted=JITTER_LADDER[-1])


def log_likelihood(sigma2_hat: float, log_det: float, n: int) -> float:
    """Gaussian log-likelihood evaluated at the profiled estimators.

    At ``(beta_hat, sigma2_hat)`` the residual quadratic form collapses to
    ``n/2``.  A degenerate fit (``sigma2_hat == 0``) returns ``+inf``.
    """
    if sigma2_hat == 0.0:
        return math.inf
    return -0.5 * n * LOG_2PI - 0.5 * n * math.log(sigma2_hat) \
        - 0.5 * log_det - 0.5 * n


@dataclass
class ProfileFit:
    """Closed-form fit at fixed correlation parameters, with retained solves."""

    beta_hat: np.ndarray
    sigma2_hat: float
    log_det: float
    psi: float
    log_likelihood: float
    degenerate: bool
    chol: np.ndarray
    jitter: float
    # retained for predictor reuse: decorrelated regression matrix and its QR
    ft: np.ndarray = field(repr=False, default=None)
    qr_r: np.ndarray = field(repr=False, default=None)
    qr_piv: np.ndarray = field(repr=False, default=None)


def gls_fit(r_plus: np.ndarray, f_s: np.ndarray, y_s: np.ndarray) -> ProfileFit:
    """GLS regression coefficients and ML variance under ``r_plus``.

    ``r_plus`` is the correlation matrix including the nugget diagonal.
    Raises ``IllConditionedError`` if it cannot be factorized and
    ``RankDeficiencyError`` (naming the offending basis columns) if ``f_s``
    is rank deficient under the correlation inner product.
    """
    r_plus = np.asarray(r_plus, dtype=float)
    f_s = np.atleast_2d(np.asarray(f_s, dtype=float))
    y_s = np.asarray(y_s, dtype=float).ravel()
    n = y_s.size
    if r_plus.shape != (n, n) or f_s.shape[0] != n:
        raise ParameterDomainError(
            f"shape mismatch: R {r_plus.shape}, F {f_s.shape}, y ({n},)")
    k = f_s.shape[1]

    chol, jitter = chol_factor_jittered(r_plus)
    rhs = np.concatenate([f_s, y_s[:, None]], axis=1)
    sol = solve_triangular(chol, rhs, lower=True, check_finite=False)
    ft, yt = sol[:, :k], sol[:, k]

    # cheap unpivoted QR; re-run pivoted only to name columns on deficiency
    q, rq = np.linalg.qr(ft)
    diag = np.abs(np.diag(rq))
    tol = max(n, k) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    if diag.size == 0 or diag.min() <= tol:
        _, rp, piv = _qr(ft, mode="economic", pivoting=True)
        dp = np.abs(np.diag(rp))
        rank = int(np.sum(dp > max(n, k) * np.finfo(float).eps * dp[0]))
        bad = tuple(int(c) for c in piv[rank:])
        raise RankDeficiencyError(
            f"regression matrix rank {rank} < {k}; dependent columns {bad}",
            columns=bad)
    beta = solve_triangular(rq, q.T @ yt, lower=False, check_finite=False)

    rho = yt - ft @ beta
    sigma2 = float(rho @ rho) / n
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    psi = math.exp(log_det / n) * sigma2
    loglik = log_likelihood(sigma2, log_det, n)
    return ProfileFit(beta_hat=beta, sigma2_hat=sigma2, log_det=log_det,
                      psi=psi, log_likelihood=loglik,
                      degenerate=not math.isfinite(loglik),
                      chol=chol, jitter=jitter,
                      ft=ft, qr_r=rq, qr_piv=np.arange(k))


def _chol_lapack(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Jittered Cholesky through raw LAPACK calls (optimizer hot path).

    Same ladder as ``chol_factor_jittered``; the returned factor's upper
    triangle is untouched input and must be ignored.
    """
    c, info = _dpotrf(a, lower=1)
    if info == 0:
        return c, 0.0
    bump = float(np.mean(np.diag(a)))
    eye = np.eye(a.shape[0])
    for level in JITTER_LADDER:
        c, info = _dpotrf(a + (level * bump) * eye, lower=1)
        if info == 0:
            return c, level
    raise IllConditionedError(
        f"covariance factorization failed at jitter {JITTER_LADDER[-1]:g} "
        f"x mean diagonal", jitter_attempted=JITTER_LADDER[-1])


def _fast_profile_fit(a: np.ndarray, f_s: np.ndarray, y_s: np.ndarray,
                      rhs_buf: np.ndarray | None = None) -> ProfileFit:
    """Profile fit via normal equations in decorrelated space.

    Cheaper than ``gls_fit`` (no QR) and used inside the optimizer loop,
    where the basis is small and well scaled.  Falls back to ``gls_fit``
    when the normal equations are not positive definite, so rank errors
    still carry the offending columns.
    """
    n, k = f_s.shape
    chol, jitter = _chol_lapack(a)
    if rhs_buf is None:
        rhs_buf = np.empty((n, k + 1))
    rhs_buf[:, :k] = f_s
    rhs_buf[:, k] = y_s
    sol, info = _dtrtrs(chol, rhs_buf, lower=1)
    if info != 0:
        raise IllConditionedError("triangular solve failed",
                                  jitter_attempted=jitter)
    ft, yt = sol[:, :k], sol[:, k]
    m_small = ft.T @ ft
    b_small = ft.T @ yt
    cf, info = _dpotrf(m_small, lower=1)
    if info != 0:
        return gls_fit(a, f_s, y_s)
    beta, info = _dpotrs(cf, b_small, lower=1)
    if info != 0:
        return gls_fit(a, f_s, y_s)
    rho = yt - ft @ beta
    sigma2 = float(rho @ rho) / n
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    psi = math.exp(log_det / n) * sigma2
    loglik = log_likelihood(sigma2, log_det, n)
    return ProfileFit(beta_hat=beta, sigma2_hat=sigma2, log_det=log_det,
                      psi=psi, log_likelihood=loglik,
                      degenerate=not math.isfinite(loglik),
                      chol=chol, jitter=jitter)


def aicc(log_lik: float, n: int, m1: int, m2: int) -> float:
    """Corrected Akaike criterion for m1 regression and m2 covariance inputs."""
    denom = n - m1 - m2 - 2
    if denom <= 0:
        raise SampleTooSmallError(
            f"AICC undefined: n={n}, m1={m1}, m2={m2} leaves denominator {denom}")
    return -2.0 * log_lik + 2.0 * n * (m1 + m2 + 1) / denom


class PsiObjective:
    """Profile objective over ``(theta, p, tau)`` for a fixed design.

    Per-dimension distance profiles ``|x_i - x_j|^p_l`` are cached and
    recomputed only for the coordinates of ``p`` that changed since the
    previous call, which makes the single-coordinate moves of a pattern
    search cheap.  Calling the instance maps factorization failures to a
    large finite penalty (so a minimizer keeps moving); ``value`` raises
    instead.
    """

    def __init__(self, x_active: np.ndarray, f_s: np.ndarray, y_s: np.ndarray):
        x_active = np.ascontiguousarray(x_active, dtype=float)
        if x_active.ndim != 2 or x_active.shape[1] == 0:
            raise ParameterDomainError("active covariance set must not be empty")
        self._x = x_active
        self._f = np.asarray(f_s, dtype=float)
        self._y = np.asarray(y_s, dtype=float).ravel()
        self._d_profiles = kernels.abs_diff_profiles(x_active)
        self._p_profiles = np.empty_like(self._d_profiles)
        self._p_cached = np.full(x_active.shape[1], np.nan)
        self._rhs_buf = np.empty((self._y.size, self._f.shape[1] + 1))
        self.evals = 0
        self.failures = 0
        self.best = math.inf
        self.last_fit: ProfileFit | None = None

    @property
    def m(self) -> int:
        return self._x.shape[1]

    def _profiles_for(self, p: np.ndarray) -> np.ndarray:
        for l in range(self.m):
            if p[l] != self._p_cached[l]:
                np.power(self._d_profiles[l], p[l], out=self._p_profiles[l])
                self._p_cached[l] = p[l]
        return self._p_profiles

    def value(self, theta: np.ndarray, p: np.ndarray, tau: float) -> float:
        """psi at the given parameters; raises on factorization/rank failure."""
        theta = np.asarray(theta, dtype=float)
        p = np.asarray(p, dtype=float)
        tau = float(tau)
        m = self.m
        # inline domain checks: this runs hundreds of times per search
        if theta.shape != (m,) or p.shape != (m,):
            raise ParameterDomainError(
                f"parameter length mismatch: theta {theta.shape}, p {p.shape}, "
                f"active set size {m}")
        if not (theta.min() >= 0.0 and math.isfinite(float(theta.sum()))):
            raise ParameterDomainError("theta components must be finite and >= 0")
        if not (p.min() > 0.0 and p.max() <= 2.0 and
                math.isfinite(float(p.sum()))):
            raise ParameterDomainError("p components must lie in (0, 2]")
        if not math.isfinite(tau) or tau < 0.0:
            raise ParameterDomainError("tau must be finite and >= 0")
        self.evals += 1
        prof = self._profiles_for(p)
        a = kernels.corr_from_profiles(prof, theta, tau)
        fit = _fast_profile_fit(a, self._f, self._y, self._rhs_buf)
        self.last_fit = fit
        return fit.psi

    def __call__(self, theta: np.ndarray, p: np.ndarray, tau: float) -> float:
        try:
            v = self.value(theta, p, tau)
        except (IllConditionedError, RankDeficiencyError):
            self.failures += 1
            return PENALTY_FACTOR * (self.best if math.isfinite(self.best) else 1.0)
        if v < self.best:
            self.best = v
        return v


def psi_objective(theta, p, tau, x_std: np.ndarray, y: np.ndarray,
                  active_cov, active_reg) -> float:
    """One-shot psi evaluation on the active covariance / regression sets."""
    active_cov = tuple(active_cov)
    if not active_cov:
        raise ParameterDomainError("active covariance set must not be empty")
    x_std = np.atleast_2d(np.asarray(x_std, dtype=float))
    f_s = basis_matrix(x_std, RegressionBasis(tuple(active_reg)))
    obj = PsiObjective(x_std[:, active_cov], f_s, y)
    return obj(np.asarray(theta, float), np.asarray(p, float), float(tau))
