"""Conditional mean and MSE at new points, plus model serialization.

The predictive mean is ``F(x*) beta_hat + k(x*)' Sigma^-1 (y - F beta_hat)``.
The MSE includes, by default, the extra quadratic term that accounts for
``beta`` being estimated rather than known; a flag exposes the plain kriging
variance.  Negative MSE from round-off near training points clamps to zero
and is counted in a module diagnostic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import covariance
from .covariance import CorrelationParams, cross_correlation_matrix
from .data import UniformTransform, apply_transform
from .errors import DataError, ModelFormatError
from .estimation import ProfileFit, gls_fit
from .regression import RegressionBasis, basis_matrix

MODEL_FORMAT = "gpsel-model"
MODEL_VERSION = 1

_negative_mse_clamps = 0


def negative_mse_clamp_count() -> int:
    """How many predictions needed the negative-MSE round-off clamp."""
    return _negative_mse_clamps


def reset_negative_mse_clamp_count() -> None:
    global _negative_mse_clamps
    _negative_mse_clamps = 0


@dataclass(frozen=True)
class PredictionResult:
    """Predictive mean and MSE in output units; optional 95% interval."""

    mean: float
    mse: float
    lo95: float | None = None
    hi95: float | None = None


class GpCore:
    """Fitted conditional-moment engine over a standardized design.

    Holds the factorized covariance state; reused by the full model and by
    cross-validation folds that work directly in standardized space.
    """

    def __init__(self, x_std: np.ndarray, y: np.ndarray,
                 active_cov: tuple[int, ...], active_reg: tuple[int, ...],
                 params: CorrelationParams):
        x_std = np.ascontiguousarray(np.atleast_2d(x_std), dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        d = x_std.shape[1]
        self.active_cov = covariance.validate_active_set(active_cov, d)
        self.active_reg = covariance.validate_active_set(active_reg, d)
        if not self.active_cov:
            raise DataError("covariance active set must not be empty")
        self.params = params
        self.basis = RegressionBasis(self.active_reg)
        self.x_std = x_std
        self.y = y
        self.x_active = np.ascontiguousarray(x_std[:, self.active_cov])
        a = covariance.build_correlation_matrix(self.x_active, params)
        f_s = basis_matrix(x_std, self.basis)
        self.fit: ProfileFit = gls_fit(a, f_s, y)
        resid = y - f_s @ self.fit.beta_hat
        z = solve_triangular(self.fit.chol, resid, lower=True, check_finite=False)
        self.gamma = solve_triangular(self.fit.chol.T, z, lower=False,
                                      check_finite=False)

    def mean(self, q_std: np.ndarray) -> np.ndarray:
        """Predictive mean only, for standardized query rows (q, d)."""
        q_std = np.atleast_2d(np.asarray(q_std, dtype=float))
        c = cross_correlation_matrix(self.x_active,
                                     np.ascontiguousarray(q_std[:, self.active_cov]),
                                     self.params)
        fq = basis_matrix(q_std, self.basis)
        return fq @ self.fit.beta_hat + c.T @ self.gamma

    def moments(self, q_std: np.ndarray,
                corrected: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Predictive mean and MSE for standardized query rows (q, d)."""
        global _negative_mse_clamps
        q_std = np.atleast_2d(np.asarray(q_std, dtype=float))
        fit = self.fit
        c = cross_correlation_matrix(self.x_active,
                                     np.ascontiguousarray(q_std[:, self.active_cov]),
                                     self.params)
        fq = basis_matrix(q_std, self.basis)
        mean = fq @ fit.beta_hat + c.T @ self.gamma
        v = solve_triangular(fit.chol, c, lower=True, check_finite=False)
        quad_k = np.sum(v * v, axis=0)
        factor = (1.0 + self.params.tau) - quad_k
        if corrected:
            u = fq - v.T @ fit.ft
            w = solve_triangular(fit.qr_r.T, u.T, lower=True, check_finite=False)
            factor = factor + np.sum(w * w, axis=0)
        mse = fit.sigma2_hat * factor
        neg = mse < 0.0
        if np.any(neg):
            _negative_mse_clamps += int(np.sum(neg))
            mse = np.where(neg, 0.0, mse)
        return mean, mse


class GpModel:
    """Fitted Gaussian process surrogate operating on raw input units."""

    def __init__(self, transforms: list[UniformTransform],
                 core: GpCore,
                 input_names: tuple[str, ...],
                 output_name: str = "y",
                 corrected_mse: bool = True,
                 seed: int | None = None):
        if len(transforms) != core.x_std.shape[1]:
            raise DataError(f"{len(transforms)} transforms for "
                            f"{core.x_std.shape[1]} input dimensions")
        self.transforms = list(transforms)
        self.core = core
        self.input_names = tuple(input_names)
        self.output_name = output_name
        self.corrected_mse = corrected_mse
        self.seed = seed

    @property
    def d(self) -> int:
        return len(self.transforms)

    @property
    def beta_hat(self) -> np.ndarray:
        return self.core.fit.beta_hat

    @property
    def sigma2_hat(self) -> float:
        return self.core.fit.sigma2_hat

    @property
    def params(self) -> CorrelationParams:
        return self.core.params

    @property
    def active_cov(self) -> tuple[int, ...]:
        return self.core.active_cov

    @property
    def active_reg(self) -> tuple[int, ...]:
        return self.core.active_reg

    def _standardize(self, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x_raw, dtype=float))
        if x.shape[1] != self.d:
            raise DataError(f"query has {x.shape[1]} columns, model expects {self.d}")
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite value in query point")
        return apply_transform(x, self.transforms)

    def predict(self, x_raw: np.ndarray, interval: bool = False,
                corrected: bool | None = None) -> PredictionResult:
        mean, mse = self.core.moments(self._standardize(x_raw),
                                      corrected=self.corrected_mse
                                      if corrected is None else corrected)
        return _result(float(mean[0]), float(mse[0]), interval)

    def predict_batch(self, x_raw: np.ndarray, interval: bool = False,
                      corrected: bool | None = None) -> list[PredictionResult]:
        # row-by-row so results are bitwise identical to individual calls
        x = np.atleast_2d(np.asarray(x_raw, dtype=float))
        if x.size and x.shape[1] != self.d:
            raise DataError(f"query has {x.shape[1]} columns, model expects {self.d}")
        return [self.predict(row, interval=interval, corrected=corrected)
                for row in x]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        core = self.core
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "input_names": list(self.input_names),
            "output_name": self.output_name,
            "seed": self.seed,
            "corrected_mse": self.corrected_mse,
            "transforms": [{"mode": tr.mode,
                            "knots_x": tr.knots_x.tolist(),
                            "knots_u": tr.knots_u.tolist()}
                           for tr in self.transforms],
            "active_cov": list(core.active_cov),
            "active_reg": list(core.active_reg),
            "theta": core.params.theta.tolist(),
            "p": core.params.p.tolist(),
            "tau": core.params.tau,
            "beta_hat": core.fit.beta_hat.tolist(),
            "sigma2_hat": core.fit.sigma2_hat,
            "design_std": core.x_std.tolist(),
            "outputs": core.y.tolist(),
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GpModel":
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} file")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"{path}: model version {doc.get('version')!r} not supported "
                f"(expected {MODEL_VERSION})")
        try:
            transforms = [UniformTransform(np.asarray(t["knots_x"], float),
                                           np.asarray(t["knots_u"], float),
                                           mode=t.get("mode", "empirical"))
                          for t in doc["transforms"]]
            params = CorrelationParams(np.asarray(doc["theta"], float),
                                       np.asarray(doc["p"], float),
                                       float(doc["tau"]))
            core = GpCore(np.asarray(doc["design_std"], float),
                          np.asarray(doc["outputs"], float),
                          tuple(doc["active_cov"]), tuple(doc["active_reg"]),
                          params)
            return cls(transforms, core, tuple(doc["input_names"]),
                       output_name=doc.get("output_name", "y"),
                       corrected_mse=bool(doc.get("corrected_mse", True)),
                       seed=doc.get("seed"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{path}: malformed model file: {exc}") from exc


def _result(mean: float, mse: float, interval: bool) -> PredictionResult:
    if not interval:
        return PredictionResult(mean=mean, mse=mse)
    half = 1.96 * float(np.sqrt(mse))
    return PredictionResult(mean=mean, mse=mse, lo95=mean - half, hi95=mean + half)
