"""Sequential estimation-and-selection pipeline.

The fitting methodology runs in numbered steps:

* step 0  standardize every input onto [0, 1] through its empirical map;
* step 1  rank inputs by decreasing |correlation| with the output;
* step 2  fix bounds and starting points for the correlation parameters;
* step 3  nested sweep: covariance prefixes (outer loop) by the current
  covariance ranking, regression prefixes (inner loop) by the step-1
  ranking; each cell estimates (theta, p, tau) by pattern search warm
  started from the previous covariance prefix, scores the regression
  prefix by AICC, and scores the covariance prefix by a K-fold
  cross-validated Q2 at the AICC-best regression size;
* steps 4-5 (optional)  re-rank the covariance inputs by the jumps of Q2
  observed in step 3 and rerun the sweep with that ranking (regression
  ranking unchanged);
* step 6  keep the covariance prefix with the highest Q2;
* step 7  refit on all building data and report a final Q2 on data the
  selection never saw (external test sample, holdout split, or an outer
  cross validation with per-fold reselection).

The covariance loop is outer because each of its prefixes costs K extra
estimations for the cross-validated Q2, while a regression prefix costs one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial

import numpy as np

from .covariance import RESTRICTED_POWERS, CorrelationParams
from .data import (InputRanking, TrainingSet, apply_transform,
                   build_transforms, rank_by_correlation)
from .errors import (GpselError, IllConditionedError, PipelineError,
                     RankDeficiencyError, FoldFitError)
from .estimation import PsiObjective, ProfileFit, aicc
from .pattern_search import SearchSpec, minimize
from .predictor import GpCore, GpModel
from .regression import RegressionBasis, basis_matrix
from .validation import fold_plan, kfold_q2, q2


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from an integer path."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class PipelineConfig:
    """Knobs for the selection pipeline; defaults follow the methodology."""

    k_build: int = 4                 # folds for the step-3 Q2
    k_valid: int = 6                 # outer folds for step 7 (if no test data)
    holdout_fraction: float | None = None  # alternative step-7 validation
    run_steps_4_5: bool = True
    restrict_p: bool = False         # limit powers to {0.5, 1, 2}
    theta_bounds: tuple[float, float] = (1e-8, 100.0)
    theta_start: float = 0.5
    p_bounds: tuple[float, float] = (1e-8, 2.0)
    p_start: float = 1.0
    tau_bounds: tuple[float, float] = (0.0, 0.1)
    tau_start: float = 1e-6
    tau_fixed: float | None = None
    max_evals_factor: int = 500      # optimizer budget = factor * n_coords
    init_step_frac: float = 0.25
    shrink: float = 0.5
    stop_step_frac: float = 1e-4
    refit_cv: bool = True            # refit hyperparameters inside each fold
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.k_build < 2:
            raise PipelineError("k_build must be >= 2")
        if self.holdout_fraction is not None:
            if not 0.0 < self.holdout_fraction < 1.0:
                raise PipelineError("holdout_fraction must lie in (0, 1)")
        elif self.k_valid < 2:
            raise PipelineError("k_valid must be >= 2 (or use a holdout)")
        if self.theta_bounds[0] <= 0:
            raise PipelineError("theta lower bound must be positive (log scale)")
        if self.p_bounds[0] <= 0 or self.p_bounds[1] > 2.0:
            raise PipelineError("p bounds must lie within (0, 2]")
        if self.tau_fixed is not None and self.tau_fixed < 0:
            raise PipelineError("tau_fixed must be >= 0")


@dataclass
class CellRecord:
    """Outcome of one (covariance prefix i, regression prefix j) estimation."""

    i: int
    j: int
    aicc: float | None = None
    psi: float | None = None
    log_lik: float | None = None
    theta: tuple[float, ...] = ()
    p: tuple[float, ...] = ()
    tau: float | None = None
    start_theta: tuple[float, ...] = ()
    start_p: tuple[float, ...] = ()
    start_tau: float | None = None
    warm_source: str = "fresh"
    rescued: bool = False
    evals: int = 0
    error: str | None = None


@dataclass
class PhaseResult:
    """One full step-3 sweep for a given covariance ranking."""

    ranking_cov: tuple[int, ...]
    ranking_reg: tuple[int, ...]
    cells: list            # cells[i-1][j-1] -> CellRecord
    j_optim: list          # per covariance prefix size i (1-based count or None)
    q2: list               # per i; nan when undefined
    q2_errors: list
    fold_seed: int
    fold_k: int


@dataclass
class SelectionTrace:
    """Everything the pipeline decided, step by step."""

    seed: int
    input_names: tuple[str, ...]
    ranking_initial: InputRanking
    phases: list
    delta_q2: list | None
    ranking_delta_q2: InputRanking | None
    i_optim: int
    j_optim: int
    active_cov: tuple[int, ...]
    active_reg: tuple[int, ...]
    final_params: dict
    final_q2: float
    final_q2_source: str
    effects: dict
    config: dict
    validation_seed: int | None = None

    def to_dict(self) -> dict:
        doc = {
            "seed": self.seed,
            "input_names": list(self.input_names),
            "ranking_initial": {
                "order": list(self.ranking_initial.order),
                "criterion": self.ranking_initial.criterion,
                "values": list(self.ranking_initial.values),
            },
            "phases": [_phase_dict(ph) for ph in self.phases],
            "delta_q2": self.delta_q2,
            "ranking_delta_q2": None if self.ranking_delta_q2 is None else {
                "order": list(self.ranking_delta_q2.order),
                "criterion": self.ranking_delta_q2.criterion,
                "values": list(self.ranking_delta_q2.values),
            },
            "i_optim": self.i_optim,
            "j_optim": self.j_optim,
            "active_cov": list(self.active_cov),
            "active_reg": list(self.active_reg),
            "final_params": self.final_params,
            "final_q2": self.final_q2,
            "final_q2_source": self.final_q2_source,
            "effects": self.effects,
            "config": self.config,
            "validation_seed": self.validation_seed,
        }
        return doc

    def render_report(self) -> str:
        return render_report(self)


def _phase_dict(ph: PhaseResult) -> dict:
    return {
        "ranking_cov": list(ph.ranking_cov),
        "ranking_reg": list(ph.ranking_reg),
        "fold_seed": ph.fold_seed,
        "fold_k": ph.fold_k,
        "j_optim": ph.j_optim,
        "q2": ph.q2,
        "q2_errors": ph.q2_errors,
        "cells": [[None if c is None else {
            "aicc": c.aicc, "psi": c.psi, "log_lik": c.log_lik,
            "theta": list(c.theta), "p": list(c.p), "tau": c.tau,
            "start_theta": list(c.start_theta), "start_p": list(c.start_p),
            "start_tau": c.start_tau, "warm_source": c.warm_source,
            "rescued": c.rescued, "evals": c.evals, "error": c.error,
        } for c in row] for row in ph.cells],
    }


# ---------------------------------------------------------------------------
# parameter vector packing for the optimizer
# ---------------------------------------------------------------------------

def _unpack(vec: np.ndarray, m: int, tau_fixed: float | None):
    theta = vec[:m]
    p = vec[m:2 * m]
    tau = float(vec[2 * m]) if tau_fixed is None else float(tau_fixed)
    return theta, p, tau


class _VecObjective:
    """Adapter: optimizer vector -> penalized psi objective call."""

    def __init__(self, obj: PsiObjective, tau_fixed: float | None):
        self.obj = obj
        self.tau_fixed = tau_fixed

    def __call__(self, vec: np.ndarray) -> float:
        theta, p, tau = _unpack(vec, self.obj.m, self.tau_fixed)
        return self.obj(theta, p, tau)


def _search_spec(theta0, p0, tau0, cfg: PipelineConfig) -> SearchSpec:
    m = len(theta0)
    lowers = [cfg.theta_bounds[0]] * m + [cfg.p_bounds[0]] * m
    uppers = [cfg.theta_bounds[1]] * m + [cfg.p_bounds[1]] * m
    start = list(theta0) + list(p0)
    logs = [True] * m + [False] * m
    if cfg.tau_fixed is None:
        lowers.append(cfg.tau_bounds[0])
        uppers.append(cfg.tau_bounds[1])
        start.append(tau0)
        logs.append(False)
    n_coords = len(start)
    return SearchSpec(start=np.array(start), lower=np.array(lowers),
                      upper=np.array(uppers), log_scale=np.array(logs),
                      max_evals=cfg.max_evals_factor * n_coords,
                      init_step_frac=cfg.init_step_frac, shrink=cfg.shrink,
                      stop_step_frac=cfg.stop_step_frac)


@dataclass
class _Estimate:
    params: CorrelationParams
    fit: ProfileFit
    evals: int
    converged: bool
    rescued: bool = False


def _snap_power(value: float) -> float:
    best = RESTRICTED_POWERS[0]
    for c in RESTRICTED_POWERS[1:]:
        if abs(value - c) < abs(value - best):
            best = c
    return best


def _estimate(x_std: np.ndarray, y: np.ndarray, cov_prefix: tuple[int, ...],
              reg_prefix: tuple[int, ...], start, cfg: PipelineConfig,
              rescue: bool = False, extra_starts=None) -> _Estimate:
    """Pattern-search ML estimation of (theta, p, tau) at fixed active sets.

    With ``rescue``, additional searches run from the fresh default start
    and any ``extra_starts``, and the lowest minimum wins.  Two failure
    modes motivate this.  Small input prefixes often have a spurious
    optimum where every range parameter saturates and the model degenerates
    to white noise; a chain warm started there cannot leave it by
    single-coordinate moves, while the default start still descends into
    the smooth basin once enough inputs are active.  And along the
    regression loop, seeding with the previous regression cell's optimum
    restores the nested-model property that a larger basis never fits
    worse, which the information criterion comparison relies on.
    """
    theta0, p0, tau0 = start
    f_s = basis_matrix(x_std, RegressionBasis(reg_prefix))
    obj = PsiObjective(np.ascontiguousarray(x_std[:, cov_prefix]), f_s, y)
    res = minimize(_VecObjective(obj, cfg.tau_fixed),
                   _search_spec(theta0, p0, tau0, cfg))
    rescued = False
    if rescue:
        m = obj.m
        candidates = [(np.full(m, cfg.theta_start), np.full(m, cfg.p_start),
                       cfg.tau_start if cfg.tau_fixed is None else cfg.tau_fixed)]
        candidates.extend(extra_starts or ())
        seen = [(np.asarray(theta0, float), np.asarray(p0, float), tau0)]
        for cand in candidates:
            ct = (np.asarray(cand[0], float), np.asarray(cand[1], float),
                  float(cand[2]))
            if any(np.array_equal(ct[0], s[0]) and np.array_equal(ct[1], s[1])
                   and ct[2] == s[2] for s in seen):
                continue
            seen.append(ct)
            res2 = minimize(_VecObjective(obj, cfg.tau_fixed),
                            _search_spec(*ct, cfg))
            if res2.value < res.value:
                res = res2
                rescued = True
    theta, p, tau = _unpack(res.x, obj.m, cfg.tau_fixed)
    converged = res.converged
    if cfg.restrict_p:
        p = np.array([_snap_power(v) for v in p])
        lowers = [cfg.theta_bounds[0]] * obj.m
        uppers = [cfg.theta_bounds[1]] * obj.m
        start2 = list(theta)
        logs = [True] * obj.m
        if cfg.tau_fixed is None:
            lowers.append(cfg.tau_bounds[0])
            uppers.append(cfg.tau_bounds[1])
            start2.append(tau)
            logs.append(False)

        def pinned(vec):
            t2 = float(vec[obj.m]) if cfg.tau_fixed is None else cfg.tau_fixed
            return obj(vec[:obj.m], p, t2)

        res2 = minimize(pinned, SearchSpec(
            start=np.array(start2), lower=np.array(lowers),
            upper=np.array(uppers), log_scale=np.array(logs),
            max_evals=cfg.max_evals_factor * len(start2),
            init_step_frac=cfg.init_step_frac, shrink=cfg.shrink,
            stop_step_frac=cfg.stop_step_frac))
        theta = res2.x[:obj.m]
        tau = float(res2.x[obj.m]) if cfg.tau_fixed is None else cfg.tau_fixed
        converged = converged and res2.converged
    obj.value(theta, p, tau)  # raises if the optimum itself cannot be fit
    return _Estimate(params=CorrelationParams(theta, p, tau),
                     fit=obj.last_fit, evals=obj.evals, converged=converged,
                     rescued=rescued)


def _fold_predict(x_std, y, cov_prefix, reg_prefix, theta, p, tau, cfg,
                  train_idx, test_idx):
    """Fit one fold (optionally refitting hyperparameters) and predict its test rows."""
    xt, yt = x_std[train_idx], y[train_idx]
    if cfg.refit_cv:
        est = _estimate(xt, yt, cov_prefix, reg_prefix,
                        (np.asarray(theta), np.asarray(p), tau), cfg)
        params = est.params
    else:
        params = CorrelationParams(np.asarray(theta), np.asarray(p), tau)
    core = GpCore(xt, yt, cov_prefix, reg_prefix, params)
    return core.mean(x_std[test_idx])


# ---------------------------------------------------------------------------
# step 3: the nested sweep
# ---------------------------------------------------------------------------

def run_step3(ts: TrainingSet, ranking_cov, ranking_reg, cfg: PipelineConfig,
              fold_seed: int | None = None, executor=None) -> PhaseResult:
    """Nested covariance/regression sweep on a standardized training set.

    Warm starts chain along the covariance loop: cell (i, j) starts from the
    optimum of (i-1, j) extended by the fresh-coordinate start, falling back
    to (i-1, j_optim(i-1)) when that cell failed; the source used is
    recorded per cell.
    """
    ranking_cov = tuple(ranking_cov)
    ranking_reg = tuple(ranking_reg)
    x_std, y = ts.inputs, ts.outputs
    n, d = x_std.shape
    if sorted(ranking_cov) != list(range(d)) or sorted(ranking_reg) != list(range(d)):
        raise PipelineError("rankings must be permutations of the inputs", step=3)
    if fold_seed is None:
        fold_seed = derive_seed(cfg.seed, 3)
    plan = fold_plan(n, min(cfg.k_build, n), fold_seed)

    warm: dict[tuple[int, int], tuple] = {}
    cells: list[list[CellRecord | None]] = [[None] * d for _ in range(d)]
    j_optim: list[int | None] = [None] * d
    q2s: list[float] = [math.nan] * d
    q2_errors: list[str | None] = [None] * d

    for i in range(1, d + 1):
        cov_prefix = ranking_cov[:i]
        attempted = 0
        estimated = 0
        for j in range(1, d + 1):
            rec = CellRecord(i=i, j=j)
            cells[i - 1][j - 1] = rec
            if n - j - i - 2 <= 0:
                rec.error = "sample-too-small"
                continue
            attempted += 1
            start, source = _warm_start(warm, i, j, j_optim, cfg)
            rec.start_theta = tuple(float(v) for v in start[0])
            rec.start_p = tuple(float(v) for v in start[1])
            rec.start_tau = float(start[2])
            rec.warm_source = source
            reg_prefix = ranking_reg[:j]
            try:
                est = _estimate(x_std, y, cov_prefix, reg_prefix, start, cfg,
                                rescue=True)
            except (IllConditionedError, RankDeficiencyError) as exc:
                rec.error = str(exc)
                continue
            estimated += 1
            rec.rescued = est.rescued
            rec.psi = est.fit.psi
            rec.log_lik = est.fit.log_likelihood
            rec.theta = tuple(float(v) for v in est.params.theta)
            rec.p = tuple(float(v) for v in est.params.p)
            rec.tau = est.params.tau
            rec.evals = est.evals
            rec.aicc = aicc(est.fit.log_likelihood, n, m1=j, m2=i)
            warm[(i, j)] = (est.params.theta.copy(), est.params.p.copy(),
                            est.params.tau)
        if attempted and not estimated:
            raise PipelineError(
                f"every regression model failed at covariance prefix {i}", step=3)
        if not attempted:
            continue  # AICC undefined for every j at this size: row skipped
        j_opt = None
        best = math.inf
        for j in range(1, d + 1):
            rec = cells[i - 1][j - 1]
            if rec.aicc is not None and rec.aicc < best:
                best, j_opt = rec.aicc, j
        j_optim[i - 1] = j_opt
        cell = cells[i - 1][j_opt - 1]
        fold_fn = partial(_fold_predict, x_std, y, cov_prefix,
                          ranking_reg[:j_opt], np.array(cell.theta),
                          np.array(cell.p), cell.tau, cfg)
        try:
            q2s[i - 1] = kfold_q2(y, plan, fold_fn, executor=executor)
        except FoldFitError as exc:
            q2_errors[i - 1] = str(exc)

    return PhaseResult(ranking_cov=ranking_cov, ranking_reg=ranking_reg,
                       cells=cells, j_optim=j_optim, q2=q2s,
                       q2_errors=q2_errors, fold_seed=fold_seed, fold_k=plan.k)


def _warm_start(warm, i, j, j_optim, cfg: PipelineConfig):
    fresh = (np.array([cfg.theta_start]), np.array([cfg.p_start]),
             cfg.tau_start if cfg.tau_fixed is None else cfg.tau_fixed)
    if i == 1:
        return fresh, "fresh"
    prev = warm.get((i - 1, j))
    source = f"({i - 1},{j})"
    if prev is None and j_optim[i - 2] is not None:
        prev = warm.get((i - 1, j_optim[i - 2]))
        source = f"({i - 1},j_optim)"
    if prev is None:
        theta0 = np.full(i, cfg.theta_start)
        p0 = np.full(i, cfg.p_start)
        return (theta0, p0, fresh[2]), "fresh"
    theta0 = np.append(prev[0], cfg.theta_start)
    p0 = np.append(prev[1], cfg.p_start)
    tau0 = prev[2] if cfg.tau_fixed is None else cfg.tau_fixed
    return (theta0, p0, tau0), source


# ---------------------------------------------------------------------------
# steps 4-6
# ---------------------------------------------------------------------------

def rerank_by_delta_q2(phase: PhaseResult) -> tuple[list, InputRanking]:
    """Jumps of Q2 along the covariance prefixes and the ranking they induce.

    The first jump is Q2(1) itself; ties (and undefined jumps) keep the
    incoming covariance order.
    """
    d = len(phase.q2)
    delta = [math.nan] * d
    for k in range(d):
        if k == 0:
            delta[k] = phase.q2[0]
        else:
            delta[k] = phase.q2[k] - phase.q2[k - 1]
    keyed = [(-(delta[k]) if math.isfinite(delta[k]) else math.inf, k)
             for k in range(d)]
    order_positions = [k for _, k in sorted(keyed, key=lambda t: (t[0], t[1]))]
    order = tuple(phase.ranking_cov[k] for k in order_positions)
    values = tuple(delta[k] for k in order_positions)
    return delta, InputRanking(order, "delta-q2", values)


def select_optimal(phase: PhaseResult) -> tuple[int, int]:
    """Covariance prefix with the highest Q2 (ties to the smaller prefix)."""
    best_i = None
    best_q2 = -math.inf
    for i in range(1, len(phase.q2) + 1):
        v = phase.q2[i - 1]
        if phase.j_optim[i - 1] is None or not math.isfinite(v):
            continue
        if v > best_q2:
            best_q2, best_i = v, i
    if best_i is None:
        raise PipelineError("no covariance prefix produced a defined Q2", step=6)
    return best_i, phase.j_optim[best_i - 1]


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _select_and_refit(ts: TrainingSet, cfg: PipelineConfig, fold_seed: int,
                      executor=None):
    """Steps 0-6 plus the final refit; returns the model and trace pieces."""
    transforms = build_transforms(ts)
    x_std = apply_transform(ts.inputs, transforms)
    ts_std = TrainingSet(x_std, ts.outputs, ts.input_names)
    ranking1 = rank_by_correlation(ts_std)

    phase1 = run_step3(ts_std, ranking1.order, ranking1.order, cfg,
                       fold_seed=fold_seed, executor=executor)
    phases = [phase1]
    delta = None
    ranking2 = None
    if cfg.run_steps_4_5:
        delta, ranking2 = rerank_by_delta_q2(phase1)
        phase2 = run_step3(ts_std, ranking2.order, ranking1.order, cfg,
                           fold_seed=fold_seed, executor=executor)
        phases.append(phase2)
    sel_phase = phases[-1]
    i_opt, j_opt = select_optimal(sel_phase)
    active_cov = sel_phase.ranking_cov[:i_opt]
    active_reg = sel_phase.ranking_reg[:j_opt]

    cell = sel_phase.cells[i_opt - 1][j_opt - 1]
    try:
        est = _estimate(x_std, ts.outputs, active_cov, active_reg,
                        (np.array(cell.theta), np.array(cell.p), cell.tau),
                        cfg, rescue=True)
        core = GpCore(x_std, ts.outputs, active_cov, active_reg, est.params)
    except GpselError as exc:
        raise PipelineError(f"final refit failed: {exc}", step=7) from exc
    model = GpModel(transforms, core, ts.input_names, seed=cfg.seed)

    effects = _classify_effects(ts.input_names, active_cov, active_reg)
    final_params = {
        "theta": [float(v) for v in est.params.theta],
        "p": [float(v) for v in est.params.p],
        "tau": est.params.tau,
        # taken from the model's own fit so report and model file agree
        "beta_hat": [float(v) for v in core.fit.beta_hat],
        "sigma2_hat": core.fit.sigma2_hat,
        "psi": core.fit.psi,
        "log_likelihood": core.fit.log_likelihood,
    }
    pieces = {
        "ranking_initial": ranking1,
        "phases": phases,
        "delta_q2": delta,
        "ranking_delta_q2": ranking2,
        "i_optim": i_opt,
        "j_optim": j_opt,
        "active_cov": active_cov,
        "active_reg": active_reg,
        "final_params": final_params,
        "effects": effects,
    }
    return model, pieces


def _classify_effects(names, active_cov, active_reg) -> dict:
    cov, reg = set(active_cov), set(active_reg)
    out = {"linear-only": [], "nonlinear-only": [], "both": [], "inactive": []}
    for l, name in enumerate(names):
        if l in reg and l in cov:
            out["both"].append(name)
        elif l in reg:
            out["linear-only"].append(name)
        elif l in cov:
            out["nonlinear-only"].append(name)
        else:
            out["inactive"].append(name)
    return out


def _outer_fold_model_predict(ts_inputs, ts_outputs, names, cfg, fold_seed,
                              train_idx, test_idx):
    ts_train = TrainingSet(ts_inputs[train_idx], ts_outputs[train_idx], names)
    model, _ = _select_and_refit(ts_train, cfg, fold_seed)
    q_std = apply_transform(ts_inputs[test_idx], model.transforms)
    return model.core.mean(q_std)


def cross_validate(ts: TrainingSet, cfg: PipelineConfig, k: int | None = None,
                   executor=None) -> dict:
    """K-fold estimate of the whole pipeline's predictivity.

    Every fold re-runs selection from scratch on its training part, so the
    pooled Q2 measures the full procedure, not one chosen model.
    """
    k = cfg.k_valid if k is None else k
    valid_seed = derive_seed(cfg.seed, 7)
    build_fold_seed = derive_seed(cfg.seed, 3)
    plan = fold_plan(ts.n, min(k, ts.n), valid_seed)
    pooled = np.empty(ts.n)
    tasks = []
    for f in range(plan.k):
        train_idx, test_idx = plan.fold_indices(f)
        tasks.append((f, train_idx, test_idx))
    if executor is None:
        results = [(_outer_fold_model_predict(
            ts.inputs, ts.outputs, ts.input_names, cfg,
            derive_seed(build_fold_seed, f), tr, te), te)
            for f, tr, te in tasks]
    else:
        futs = [(executor.submit(_outer_fold_model_predict,
                                 ts.inputs, ts.outputs, ts.input_names, cfg,
                                 derive_seed(build_fold_seed, f), tr, te), te)
                for f, tr, te in tasks]
        results = [(fut.result(), te) for fut, te in futs]
    for pred, te in results:
        pooled[te] = pred
    return {"q2": q2(ts.outputs, pooled), "k": plan.k, "seed": cfg.seed,
            "fold_seed": valid_seed}


def fit_full(ts: TrainingSet, cfg: PipelineConfig,
             test_data: tuple[np.ndarray, np.ndarray] | None = None
             ) -> tuple[GpModel, SelectionTrace]:
    """Run steps 0-7 and return the fitted model with its selection trace.

    Step-7 validation data never overlaps the data used for selection:

    * ``test_data`` given: selection uses all of ``ts``; the final Q2 is
      computed on the supplied sample.
    * ``cfg.holdout_fraction`` set: a seeded split reserves the holdout; the
      model is built and selected on the rest and scored on the holdout.
    * otherwise: an outer ``cfg.k_valid``-fold cross validation re-runs the
      whole selection inside each outer fold and pools the out-of-fold
      predictions; the delivered model comes from a selection run on all
      the data.
    """
    build_fold_seed = derive_seed(cfg.seed, 3)
    valid_seed = derive_seed(cfg.seed, 7)
    pool = None
    if cfg.n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        pool = ProcessPoolExecutor(max_workers=cfg.n_jobs)
    try:
        if test_data is not None:
            x_test = np.atleast_2d(np.asarray(test_data[0], dtype=float))
            y_test = np.asarray(test_data[1], dtype=float).ravel()
            model, pieces = _select_and_refit(ts, cfg, build_fold_seed, pool)
            mean = model.core.mean(apply_transform(x_test, model.transforms))
            final_q2 = q2(y_test, mean)
            source = "test-sample"
            vseed = None
        elif cfg.holdout_fraction is not None:
            rng = np.random.default_rng(valid_seed)
            n_hold = max(1, int(round(cfg.holdout_fraction * ts.n)))
            if ts.n - n_hold < max(cfg.k_build, 3):
                raise PipelineError("holdout leaves too few building observations")
            perm = rng.permutation(ts.n)
            hold_idx = np.sort(perm[:n_hold])
            build_idx = np.sort(perm[n_hold:])
            assert not set(hold_idx) & set(build_idx)
            model, pieces = _select_and_refit(ts.subset(build_idx), cfg,
                                              build_fold_seed, pool)
            mean = model.core.mean(apply_transform(ts.inputs[hold_idx],
                                                   model.transforms))
            final_q2 = q2(ts.outputs[hold_idx], mean)
            source = f"holdout({n_hold})"
            vseed = valid_seed
        else:
            # outer CV with per-fold reselection, so the pooled predictions
            # come from pipelines that never saw their test fold
            plan = fold_plan(ts.n, min(cfg.k_valid, ts.n), valid_seed)
            pooled = np.empty(ts.n)
            splits = [plan.fold_indices(f) for f in range(plan.k)]
            for train_idx, test_idx in splits:
                assert not set(train_idx) & set(test_idx)
            if pool is None:
                preds = [_outer_fold_model_predict(
                    ts.inputs, ts.outputs, ts.input_names, cfg,
                    derive_seed(build_fold_seed, f), tr, te)
                    for f, (tr, te) in enumerate(splits)]
            else:
                futs = [pool.submit(_outer_fold_model_predict,
                                    ts.inputs, ts.outputs, ts.input_names, cfg,
                                    derive_seed(build_fold_seed, f), tr, te)
                        for f, (tr, te) in enumerate(splits)]
                preds = [fut.result() for fut in futs]
            for (_, te), pred in zip(splits, preds):
                pooled[te] = pred
            final_q2 = q2(ts.outputs, pooled)
            model, pieces = _select_and_refit(ts, cfg, build_fold_seed, pool)
            source = f"outer-cv({plan.k})"
            vseed = valid_seed
    finally:
        if pool is not None:
            pool.shutdown()

    trace = SelectionTrace(
        seed=cfg.seed,
        input_names=ts.input_names,
        ranking_initial=pieces["ranking_initial"],
        phases=pieces["phases"],
        delta_q2=pieces["delta_q2"],
        ranking_delta_q2=pieces["ranking_delta_q2"],
        i_optim=pieces["i_optim"],
        j_optim=pieces["j_optim"],
        active_cov=pieces["active_cov"],
        active_reg=pieces["active_reg"],
        final_params=pieces["final_params"],
        final_q2=final_q2,
        final_q2_source=source,
        effects=pieces["effects"],
        config=asdict(cfg),
        validation_seed=vseed,
    )
    return model, trace


# ---------------------------------------------------------------------------
# report rendering
# ---------------------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _table(headers: list[str], rows: list[list[str]]) -> list[str]:
    widths = [max(len(h), *(len(r[c]) for r in rows)) if rows else len(h)
              for c, h in enumerate(headers)]
    out = ["  ".join(h.ljust(widths[c]) for c, h in enumerate(headers))]
    for r in rows:
        out.append("  ".join(r[c].ljust(widths[c]) for c in range(len(headers))))
    return out


def render_report(trace: SelectionTrace) -> str:
    """Deterministic, human-readable selection report."""
    names = trace.input_names
    lines: list[str] = []
    lines.append("gpsel selection report")
    lines.append(f"seed: {trace.seed}")
    lines.append(f"inputs ({len(names)}): {' '.join(names)}")
    lines.append("")
    lines.append("step 0: inputs standardized to [0,1] by empirical "
                 "piecewise-linear maps")
    r1 = trace.ranking_initial
    lines.append("step 1: ranking by |correlation| with the output:")
    lines.append("  " + "  ".join(f"{names[l]}={_fmt(v)}"
                                  for l, v in zip(r1.order, r1.values)))
    cfgd = trace.config
    lines.append(f"step 2: theta in [{_fmt(cfgd['theta_bounds'][0])}, "
                 f"{_fmt(cfgd['theta_bounds'][1])}] start {_fmt(cfgd['theta_start'])}; "
                 f"p in [{_fmt(cfgd['p_bounds'][0])}, {_fmt(cfgd['p_bounds'][1])}] "
                 f"start {_fmt(cfgd['p_start'])}; tau "
                 + (f"fixed at {_fmt(cfgd['tau_fixed'])}"
                    if cfgd['tau_fixed'] is not None else
                    f"in [{_fmt(cfgd['tau_bounds'][0])}, "
                    f"{_fmt(cfgd['tau_bounds'][1])}] start {_fmt(cfgd['tau_start'])}"))
    for ph_idx, ph in enumerate(trace.phases):
        step_label = "step 3" if ph_idx == 0 else "step 5 (rerun of step 3)"
        lines.append("")
        lines.append(f"{step_label}: covariance order "
                     f"[{' '.join(names[l] for l in ph.ranking_cov)}], "
                     f"regression order "
                     f"[{' '.join(names[l] for l in ph.ranking_reg)}], "
                     f"Q2 by {ph.fold_k}-fold CV (fold seed {ph.fold_seed})")
        d = len(ph.ranking_cov)
        headers = ["AICC i\\j"] + [str(j) for j in range(1, d + 1)]
        rows = []
        for i in range(1, d + 1):
            row = [str(i)]
            for j in range(1, d + 1):
                c = ph.cells[i - 1][j - 1]
                row.append("-" if c is None or c.aicc is None else _fmt(c.aicc))
            rows.append(row)
        lines.extend("  " + s for s in _table(headers, rows))
        rows = []
        for i in range(1, d + 1):
            rows.append([str(i), _fmt(ph.j_optim[i - 1]), _fmt(ph.q2[i - 1]),
                         ph.q2_errors[i - 1] or ""])
        lines.extend("  " + s for s in _table(["i", "j_optim", "Q2", "note"], rows))
    if trace.delta_q2 is not None:
        lines.append("")
        lines.append("step 4: Q2 jumps along the phase-1 covariance order:")
        ph1 = trace.phases[0]
        lines.append("  " + "  ".join(
            f"{names[ph1.ranking_cov[k]]}={_fmt(trace.delta_q2[k])}"
            for k in range(len(trace.delta_q2))))
        lines.append("  re-ranked covariance order: "
                     f"[{' '.join(names[l] for l in trace.ranking_delta_q2.order)}]")
    lines.append("")
    lines.append(f"step 6: i_optim={trace.i_optim} j_optim={trace.j_optim}")
    lines.append(f"  covariance inputs: "
                 f"[{' '.join(names[l] for l in trace.active_cov)}]")
    lines.append(f"  regression inputs: "
                 f"[{' '.join(names[l] for l in trace.active_reg)}]")
    fp = trace.final_params
    lines.append("  theta: [" + " ".join(_fmt(v) for v in fp["theta"]) + "]")
    lines.append("  p:     [" + " ".join(_fmt(v) for v in fp["p"]) + "]")
    lines.append(f"  tau: {_fmt(fp['tau'])}  sigma2_hat: {_fmt(fp['sigma2_hat'])}")
    lines.append("  beta_hat: [" + " ".join(_fmt(v) for v in fp["beta_hat"]) + "]")
    lines.append("")
    lines.append(f"step 7: final Q2 = {_fmt(trace.final_q2)} "
                 f"on {trace.final_q2_source}")
    lines.append("")
    lines.append("effect classification:")
    for key in ("linear-only", "nonlinear-only", "both", "inactive"):
        lines.append(f"  {key}: [{' '.join(trace.effects[key])}]")
    return "\n".join(lines) + "\n"
