"""Limited-memory BFGS with a strong-Wolfe line search.

Minimizes a scalar objective over a flat vector.  The objective callable
returns (value, gradient) or (value, gradient, terms-dict); the optional
dict is carried into the iteration trace so callers can log per-term
losses.  The two-loop recursion uses the last `memory` curvature pairs,
skipping pairs with s.y <= 1e-10 |s||y|, and scales the seed inverse
Hessian by s.y / y.y of the most recent pair.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class NonFiniteObjectiveError(RuntimeError):
    """Objective or gradient became non-finite during the search."""


class LineSearchError(RuntimeError):
    """No strong-Wolfe step within the evaluation budget."""


@dataclass
class LbfgsConfig:
    memory: int = 10
    max_iter: int = 100
    grad_tol: float = 1e-7
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_line_search_steps: int = 25

    def __post_init__(self):
        if not (0.0 < self.wolfe_c1 < self.wolfe_c2 < 1.0):
            raise ValueError(f"require 0 < c1 < c2 < 1, got c1={self.wolfe_c1} c2={self.wolfe_c2}")
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    grad_norm: float
    step: float
    terms: dict = field(default_factory=dict)


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    reason: str = ""
    n_evals: int = 0

    @property
    def objectives(self) -> list:
        return [r.objective for r in self.records]


class _Evaluator:
    """Wraps the objective: counts evaluations, tracks the best point,
    rejects non-finite values."""

    def __init__(self, objective):
        self.objective = objective
        self.n_evals = 0
        self.best_f = np.inf
        self.best_x = None
        self.iteration = 0  # for diagnostics

    def __call__(self, x):
        self.n_evals += 1
        out = self.objective(x)
        f, g = out[0], np.asarray(out[1], dtype=np.float64)
        terms = out[2] if len(out) > 2 else {}
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise NonFiniteObjectiveError(
                f"non-finite objective/gradient at iteration {self.iteration} "
                f"(evaluation {self.n_evals})"
            )
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        return f, g, terms


def _wolfe_search(ev, x, d, f0, g0, config):
    """Strong-Wolfe line search (bracket then zoom), initial trial step 1.

    Returns (alpha, f, g, terms, x_new).  Raises LineSearchError when the
    evaluation budget is exhausted without an acceptable step.
    """
    c1, c2 = config.wolfe_c1, config.wolfe_c2
    d0 = float(g0 @ d)
    if d0 >= 0:
        raise LineSearchError("direction is not a descent direction")
    budget = config.max_line_search_steps

    def phi(alpha):
        xn = x + alpha * d
        f, g, terms = ev(xn)
        return f, float(g @ d), (g, terms, xn)

    alpha_prev, f_prev, d_prev = 0.0, f0, d0
    alpha = 1.0
    bracket = None
    for i in range(budget):
        f_a, d_a, payload = phi(alpha)
        budget -= 1
        if f_a > f0 + c1 * alpha * d0 or (i > 0 and f_a >= f_prev):
            bracket = (alpha_prev, f_prev, d_prev, alpha, f_a)
            break
        if abs(d_a) <= -c2 * d0:
            g, terms, xn = payload
            return alpha, f_a, g, terms, xn
        if d_a >= 0:
            bracket = (alpha, f_a, d_a, alpha_prev, f_prev)
            break
        alpha_prev, f_prev, d_prev = alpha, f_a, d_a
        alpha *= 2.0
    if bracket is None:
        raise LineSearchError("bracketing exhausted the evaluation budget")

    alo, flo, dlo, ahi, fhi = bracket
    for _ in range(budget):
        # quadratic interpolation from (alo, flo, dlo) and (ahi, fhi),
        # clamped into the safeguard interval so each trial makes at least
        # 10% progress; plain bisection can never reach the tiny steps a
        # steeply weighted objective needs within the evaluation budget
        span = ahi - alo
        denom = 2.0 * (fhi - flo - dlo * span)
        if denom != 0.0:
            a = alo - dlo * span * span / denom
        else:
            a = alo + 0.5 * span
        lo, hi = (alo, ahi) if alo < ahi else (ahi, alo)
        margin = 0.1 * (hi - lo)
        a = min(max(a, lo + margin), hi - margin)
        f_a, d_a, payload = phi(a)
        if f_a > f0 + c1 * a * d0 or f_a >= flo:
            ahi, fhi = a, f_a
        else:
            if abs(d_a) <= -c2 * d0:
                g, terms, xn = payload
                return a, f_a, g, terms, xn
            if d_a * (ahi - alo) >= 0:
                ahi, fhi = alo, flo
            alo, flo, dlo = a, f_a, d_a
    raise LineSearchError("zoom exhausted the evaluation budget")


def line_search(objective, x, direction, f0, g0, config: LbfgsConfig) -> float:
    """Step length satisfying the strong Wolfe conditions."""
    ev = _Evaluator(objective)
    alpha, *_ = _wolfe_search(ev, np.asarray(x, dtype=np.float64),
                              np.asarray(direction, dtype=np.float64),
                              float(f0), np.asarray(g0, dtype=np.float64), config)
    return alpha


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * float(s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    gamma = float(s @ y) / float(y @ y)
    r = gamma * q
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * float(y @ r)
        r += (a - b) * s
    return -r


def minimize(objective, x0, config: LbfgsConfig, callback=None):
    """Run L-BFGS from x0; returns (best point, OptTrace).

    Termination reasons: "grad_tol", "max_iter", "line_search_failure".
    On line-search failure the memory is dropped and one steepest-descent
    restart is attempted before giving up.  `callback(k, x)` fires after
    every accepted iteration.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    ev = _Evaluator(objective)
    f, g, terms = ev(x)
    trace = OptTrace()
    trace.records.append(TraceRecord(0, f, float(np.max(np.abs(g))), 0.0, terms))

    pairs: deque = deque(maxlen=config.memory)
    reason = "max_iter"
    for k in range(1, config.max_iter + 1):
        ev.iteration = k
        if float(np.max(np.abs(g))) <= config.grad_tol:
            reason = "grad_tol"
            break
        if pairs:
            d = _two_loop(g, pairs)
            if float(g @ d) >= 0.0:
                pairs.clear()
                d = -g
        else:
            d = -g
        try:
            alpha, f_new, g_new, terms_new, x_new = _wolfe_search(ev, x, d, f, g, config)
        except LineSearchError:
            if pairs:
                pairs.clear()
                try:
                    alpha, f_new, g_new, terms_new, x_new = _wolfe_search(ev, x, -g, f, g, config)
                except LineSearchError:
                    reason = "line_search_failure"
                    break
            else:
                reason = "line_search_failure"
                break
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        trace.records.append(TraceRecord(k, f, float(np.max(np.abs(g))), alpha, terms_new))
        if callback is not None:
            callback(k, x)
    else:
        reason = "max_iter"

    trace.reason = reason
    trace.n_evals = ev.n_evals
    best = ev.best_x if ev.best_f <= f else x
    return best, trace
