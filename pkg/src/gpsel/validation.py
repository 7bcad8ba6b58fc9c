"""Predictivity coefficient Q2 and the K-fold cross-validation engine."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, FoldFitError


@dataclass(frozen=True)
class FoldPlan:
    """Deterministic assignment of observations to K folds."""

    seed: int
    k: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment, dtype=int)
        if sorted(np.unique(a)) != list(range(self.k)):
            raise DataError("fold assignment must cover 0..K-1")
        counts = np.bincount(a, minlength=self.k)
        if counts.max() - counts.min() > 1:
            raise DataError("fold sizes must differ by at most one")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def n(self) -> int:
        return self.assignment.size

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_idx, test_idx) for one fold."""
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test


def fold_plan(n: int, k: int, seed: int) -> FoldPlan:
    """Random balanced folds, a pure function of (seed, n, K)."""
    if not 2 <= k <= n:
        raise DataError(f"need 2 <= K <= n, got K={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=int)
    assignment[perm] = np.arange(n) % k
    return FoldPlan(seed=seed, k=k, assignment=assignment)


def q2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - SS(prediction residuals) / SS(deviation from the test mean)."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise DataError(f"length mismatch: {y_true.size} vs {y_pred.size}")
    if y_true.size < 2:
        raise DataError("Q2 needs at least two observations")
    denom = float(np.sum((y_true - y_true.mean()) ** 2))
    if denom == 0.0:
        raise DataError("Q2 undefined: constant observations")
    return 1.0 - float(np.sum((y_true - y_pred) ** 2)) / denom


def kfold_q2(y: np.ndarray, plan: FoldPlan, fold_fn, executor=None) -> float:
    """Pooled Q2 over all out-of-fold predictions.

    ``fold_fn(train_idx, test_idx)`` fits on the training rows and returns
    predictions for the test rows.  Any fold failure aborts the whole
    estimate (no silent partial pooling).  With an executor, folds run in
    parallel and are pooled in fold order, so results do not depend on
    scheduling.
    """
    y = np.asarray(y, dtype=float).ravel()
    if plan.n != y.size:
        raise DataError(f"fold plan covers {plan.n} rows, data has {y.size}")
    pooled = np.empty_like(y)
    splits = [plan.fold_indices(f) for f in range(plan.k)]
    if executor is None:
        results = []
        for f, (tr, te) in enumerate(splits):
            try:
                results.append(fold_fn(tr, te))
            except Exception as exc:
                raise FoldFitError(f, exc) from exc
    else:
        futures = [executor.submit(fold_fn, tr, te) for tr, te in splits]
        results = []
        for f, fut in enumerate(futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                raise FoldFitError(f, exc) from exc
    for (_, te), pred in zip(splits, results):
        pred = np.asarray(pred, dtype=float).ravel()
        if pred.size != te.size:
            raise DataError(f"fold returned {pred.size} predictions for "
                            f"{te.size} test rows")
        pooled[te] = pred
    return q2(y, pooled)
