"""Bounded derivative-free minimizer in the Hooke & Jeeves style.

Coordinates flagged log-scaled are searched in log10 space, so a step means
the same relative change anywhere in a range spanning many decades.  The
search alternates exploratory single-coordinate moves with pattern moves
along the accumulated direction, halving the step after a failed pass and
stopping once every step falls below its stop fraction of the (scaled)
range or the evaluation budget runs out.  Everything is deterministic:
identical specs and objectives produce identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SearchSpec:
    """Box, starting point and termination settings for ``minimize``."""

    start: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    log_scale: np.ndarray = None
    max_evals: int = 0          # 0 means the 500 * m default
    init_step_frac: float = 0.25
    shrink: float = 0.5
    stop_step_frac: float = 1e-4

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        m = self.start.size
        if self.lower.shape != (m,) or self.upper.shape != (m,):
            raise ValueError("start, lower and upper must have the same length")
        if self.log_scale is None:
            self.log_scale = np.zeros(m, dtype=bool)
        else:
            self.log_scale = np.asarray(self.log_scale, dtype=bool).ravel()
            if self.log_scale.shape != (m,):
                raise ValueError("log_scale length must match start")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        if np.any(self.start < self.lower) or np.any(self.start > self.upper):
            raise ValueError("start outside bounds")
        if np.any(self.log_scale & (self.lower <= 0.0)):
            raise ValueError("log-scaled coordinates need strictly positive bounds")
        if self.max_evals <= 0:
            self.max_evals = 500 * m
        if not (0.0 < self.shrink < 1.0):
            raise ValueError("shrink factor must be in (0, 1)")
        if self.init_step_frac <= 0.0 or self.stop_step_frac <= 0.0:
            raise ValueError("step fractions must be positive")


@dataclass
class SearchResult:
    x: np.ndarray
    value: float
    evals: int
    converged: bool = True
    trace_best: list = field(default_factory=list, repr=False)


class _Budget(Exception):
    pass


def minimize(f, spec: SearchSpec) -> SearchResult:
    """Minimize ``f`` over the box in ``spec``; ``f`` takes the raw vector.

    The objective must be deterministic and finite-valued on the box (use
    a penalty convention for failure regions).  The result never exceeds
    ``f(start)`` and always lies within the bounds.
    """
    m = spec.start.size
    log = spec.log_scale

    def to_z(x):
        z = x.copy()
        z[log] = np.log10(x[log])
        return z

    def from_z(z):
        x = z.copy()
        x[log] = 10.0 ** z[log]
        return np.clip(x, spec.lower, spec.upper)

    zl, zu = to_z(spec.lower), to_z(spec.upper)
    z_range = zu - zl
    active = z_range > 0.0          # pinned coordinates take no moves
    step = spec.init_step_frac * z_range

    state = {"evals": 0}
    best_trace: list[float] = []

    def F(z):
        if state["evals"] >= spec.max_evals:
            raise _Budget
        state["evals"] += 1
        return float(f(from_z(z)))

    def explore(z0, f0):
        """One coordinate at a time: try both signs, keep the best improvement."""
        z = z0.copy()
        fcur = f0
        for i in range(m):
            if not active[i] or step[i] == 0.0:
                continue
            best_zi = None
            best_f = fcur
            for sign in (1.0, -1.0):
                zi = min(max(z[i] + sign * step[i], zl[i]), zu[i])
                if zi == z[i]:
                    continue
                z_try = z.copy()
                z_try[i] = zi
                f_try = F(z_try)
                if f_try < best_f:
                    best_zi, best_f = zi, f_try
            if best_zi is not None:
                z = z.copy()
                z[i] = best_zi
                fcur = best_f
        return z, fcur

    base = np.clip(to_z(spec.start), zl, zu)
    converged = True
    try:
        f_base = F(base)
        best_trace.append(f_base)
        while True:
            trial, f_trial = explore(base, f_base)
            if f_trial < f_base:
                # pursue the improving direction with pattern moves
                while True:
                    direction = trial - base
                    base, f_base = trial, f_trial
                    best_trace.append(f_base)
                    pattern = np.clip(base + direction, zl, zu)
                    f_pattern = F(pattern) if np.any(pattern != base) else f_base
                    trial, f_trial = explore(pattern, f_pattern)
                    if f_trial >= f_base:
                        break
            else:
                step *= spec.shrink
                if np.all(step[active] < spec.stop_step_frac * z_range[active]):
                    break
            if not np.any(active):
                break
    except _Budget:
        converged = False

    return SearchResult(x=from_z(base), value=f_base, evals=state["evals"],
                        converged=converged, trace_best=best_trace)
