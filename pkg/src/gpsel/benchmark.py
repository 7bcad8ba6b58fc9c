"""Analytic benchmark: the g-function, Latin Hypercube designs, and the
replication study comparing selection with and without the re-ranking steps.

Each factor of the g-function is ``(|4x_k - 2| + a_k) / (1 + a_k)`` on
[0, 1]; smaller coefficients ``a_k`` make an input more influential.  With
the default ``a_k = k`` the low-index inputs dominate, but the V shape of
every factor keeps all linear correlations near zero, which is what makes
the benchmark hard for correlation-based rankings.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import TrainingSet
from .errors import DataError, GpselError
from .pipeline import PipelineConfig, derive_seed, fit_full

VARIANT_WITH = "with-steps-4-5"
VARIANT_WITHOUT = "without-steps-4-5"


@dataclass(frozen=True)
class GSobolSpec:
    """Dimension and per-input weighting coefficients (default a_k = k)."""

    d: int
    a: np.ndarray = None

    def __post_init__(self):
        if self.d < 1:
            raise DataError("g-function needs d >= 1")
        a = (np.arange(1, self.d + 1, dtype=float) if self.a is None
             else np.asarray(self.a, dtype=float).ravel())
        if a.size != self.d or np.any(a < 0):
            raise DataError("coefficients must be d non-negative values")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "a", a)


def g_sobol(x: np.ndarray, spec: GSobolSpec) -> float:
    """Product of the per-dimension factors at one point of [0, 1]^d."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != spec.d:
        raise DataError(f"point has {x.size} coordinates, expected {spec.d}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DataError("g-function input outside [0, 1]^d")
    return float(np.prod((np.abs(4.0 * x - 2.0) + spec.a) / (1.0 + spec.a)))


def g_sobol_batch(x: np.ndarray, spec: GSobolSpec) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != spec.d:
        raise DataError(f"batch has {x.shape[1]} columns, expected {spec.d}")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise DataError("g-function input outside [0, 1]^d")
    return np.prod((np.abs(4.0 * x - 2.0) + spec.a) / (1.0 + spec.a), axis=1)


def lhs(n: int, d: int, seed: int) -> np.ndarray:
    """Latin Hypercube sample: one point per axis stratum, uniform within it.

    Column ``l`` is ``(perm_l + u_l) / n`` with an independent permutation
    and uniform jitter per column; fully determined by the seed.
    """
    if n < 1 or d < 1:
        raise DataError("LHS needs n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, d))
    for l in range(d):
        perm = rng.permutation(n)
        out[:, l] = (perm + rng.random(n)) / n
    return out


@dataclass
class BenchmarkProtocol:
    """Replication protocol for the summary table."""

    d_list: tuple[int, ...] = (4, 8)
    ls_factor: int = 10             # learning-sample size = ls_factor * d
    n_test: int = 1000
    replicates: int = 10
    seed: int = 0
    variants: tuple[str, ...] = (VARIANT_WITH, VARIANT_WITHOUT)
    n_jobs: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise DataError("need at least one replicate")
        for v in self.variants:
            if v not in (VARIANT_WITH, VARIANT_WITHOUT):
                raise DataError(f"unknown variant {v!r}")

    def n_ls(self, d: int) -> int:
        return self.ls_factor * d


@dataclass
class BenchmarkRow:
    d: int
    n_ls: int
    variant: str
    mean_q2: float
    sd_q2: float | None
    replicates_done: int
    replicates_failed: int
    wall_time: float
    q2_values: list = field(default_factory=list)


def _replicate_seeds(seed: int, d: int, rep: int) -> tuple[int, int, int]:
    return (derive_seed(seed, d, rep, 0),     # learning design
            derive_seed(seed, d, rep, 1),     # test design
            derive_seed(seed, d, rep, 2))     # pipeline seed


def run_replicate(protocol: BenchmarkProtocol, base_cfg: PipelineConfig,
                  d: int, rep: int) -> dict:
    """One replicate: fresh designs, one fit per variant, Q2 on the shared test set."""
    spec = GSobolSpec(d)
    ls_seed, ts_seed, fit_seed = _replicate_seeds(protocol.seed, d, rep)
    x_ls = lhs(protocol.n_ls(d), d, ls_seed)
    y_ls = g_sobol_batch(x_ls, spec)
    x_ts = lhs(protocol.n_test, d, ts_seed)
    y_ts = g_sobol_batch(x_ts, spec)
    ts = TrainingSet(x_ls, y_ls)
    out: dict = {"d": d, "rep": rep}
    for variant in protocol.variants:
        cfg_kwargs = asdict_config(base_cfg)
        cfg_kwargs["run_steps_4_5"] = variant == VARIANT_WITH
        cfg_kwargs["seed"] = fit_seed
        cfg = PipelineConfig(**cfg_kwargs)
        try:
            _, trace = fit_full(ts, cfg, test_data=(x_ts, y_ts))
            out[variant] = trace.final_q2
        except GpselError as exc:
            out[variant] = None
            out[f"{variant}-error"] = str(exc)
    return out


def asdict_config(cfg: PipelineConfig) -> dict:
    from dataclasses import asdict

    return asdict(cfg)


def run_table1(protocol: BenchmarkProtocol,
               base_cfg: PipelineConfig | None = None,
               executor=None, progress=None) -> list[BenchmarkRow]:
    """Replicated study: per-dimension mean and spread of the final Q2.

    Replicates are independent, so with an executor they run in parallel;
    aggregation always happens in (d, replicate) order.
    """
    if base_cfg is None:
        base_cfg = PipelineConfig(n_jobs=1)
    rows: list[BenchmarkRow] = []
    for d in protocol.d_list:
        t0 = time.perf_counter()
        if executor is None:
            results = []
            for rep in range(protocol.replicates):
                results.append(run_replicate(protocol, base_cfg, d, rep))
                if progress:
                    progress(d, rep, results[-1])
        else:
            futs = [executor.submit(run_replicate, protocol, base_cfg, d, rep)
                    for rep in range(protocol.replicates)]
            results = []
            for rep, fut in enumerate(futs):
                results.append(fut.result())
                if progress:
                    progress(d, rep, results[-1])
        wall = time.perf_counter() - t0
        for variant in protocol.variants:
            vals = [r[variant] for r in results if r.get(variant) is not None]
            failed = protocol.replicates - len(vals)
            mean = float(np.mean(vals)) if vals else math.nan
            sd = float(np.std(vals, ddof=1)) if len(vals) > 1 else None
            rows.append(BenchmarkRow(d=d, n_ls=protocol.n_ls(d), variant=variant,
                                     mean_q2=mean, sd_q2=sd,
                                     replicates_done=len(vals),
                                     replicates_failed=failed,
                                     wall_time=wall, q2_values=vals))
    return rows


def _fmt_float(x, nd=4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{x:.{nd}f}"


def render_table(rows: list[BenchmarkRow], omit_timing: bool = False) -> str:
    headers = ["d", "N_LS", "variant", "mean_Q2", "sd_Q2", "replicates",
               "failed", "wall_time_s"]
    lines = ["  ".join(headers)]
    for r in rows:
        wall = "omitted" if omit_timing else f"{r.wall_time:.1f}"
        lines.append("  ".join([
            str(r.d), str(r.n_ls), r.variant, _fmt_float(r.mean_q2),
            _fmt_float(r.sd_q2), str(r.replicates_done),
            str(r.replicates_failed), wall]))
    return "\n".join(lines) + "\n"


def write_csv(rows: list[BenchmarkRow], path, omit_timing: bool = False) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["d", "n_ls", "variant", "mean_q2", "sd_q2",
                    "replicates_done", "replicates_failed", "wall_time_s"])
        for r in rows:
            w.writerow([r.d, r.n_ls, r.variant,
                        repr(r.mean_q2),
                        "" if r.sd_q2 is None else repr(r.sd_q2),
                        r.replicates_done, r.replicates_failed,
                        "omitted" if omit_timing else f"{r.wall_time:.3f}"])
