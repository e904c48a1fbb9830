"""Box-constrained minimization with finite-difference gradients.

The method is a projected limited-memory BFGS: coordinates sitting on a
bound with the gradient pointing outward are frozen for the iteration and
follow projected steepest descent, the free coordinates get the two-loop
quasi-Newton direction, and an Armijo backtracking search runs along the
projected arc ``P(x + a d)``.

Objectives are plain callables ``f(x) -> float``. An objective may also carry
a ``batch`` attribute mapping a ``(k, d)`` array of points to ``k`` values;
:func:`fd_gradient` then evaluates all ``2 d`` probes in one call. If it has a
non-None ``gradient`` attribute, that callable replaces finite differences.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cost import BoxSet

__all__ = [
    "EvaluationError",
    "BatchObjective",
    "SolverOptions",
    "SolveResult",
    "fd_gradient",
    "project_box",
    "minimize_box",
    "warm_start_shift",
]


class EvaluationError(ArithmeticError):
    def __init__(self, message: str, coordinate: int | None = None):
        self.coordinate = coordinate
        super().__init__(message)


class BatchObjective:
    """Wrap a vectorized objective ``batch(X: (k, d)) -> (k,)`` as a scalar callable."""

    def __init__(self, batch: Callable[[np.ndarray], np.ndarray]):
        self.batch = batch

    def __call__(self, x) -> float:
        return float(self.batch(np.asarray(x, dtype=float)[None])[0])


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    grad_tolerance: float = 1e-6
    fd_step: float = 1e-6
    lbfgs_memory: int = 10
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    max_backtracks: int = 40
    # relative objective decrease below which the run counts as stalled; 0 disables
    stall_tolerance: float = 0.0

    def __post_init__(self):
        if self.max_iterations < 1 or self.lbfgs_memory < 1 or self.max_backtracks < 1:
            raise ValueError("iteration counts and memory must be >= 1")
        if not (self.grad_tolerance > 0 and self.fd_step > 0):
            raise ValueError("grad_tolerance and fd_step must be positive")
        if not (0 < self.armijo_c < 1 and 0 < self.backtrack_factor < 1):
            raise ValueError("armijo_c and backtrack_factor must lie in (0, 1)")
        if self.stall_tolerance < 0:
            raise ValueError("stall_tolerance must be >= 0")


@dataclass
class SolveResult:
    v_star: np.ndarray
    cost: float
    iterations: int
    converged: bool
    projected_grad_norm: float
    evaluations: int


def project_box(x, bounds: BoxSet) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(x, dtype=float), bounds.lower), bounds.upper)


def fd_gradient(objective, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient ``(f(x + s e_i) - f(x - s e_i)) / 2s``."""
    x = np.asarray(x, dtype=float)
    d = x.size
    probes = np.repeat(x[None], 2 * d, axis=0)
    idx = np.arange(d)
    probes[2 * idx, idx] += step
    probes[2 * idx + 1, idx] -= step
    batch = getattr(objective, "batch", None)
    if batch is not None:
        values = np.asarray(batch(probes), dtype=float)
    else:
        values = np.array([objective(p) for p in probes], dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0] // 2)
        raise EvaluationError(f"objective is not finite when probing coordinate {i}", coordinate=i)
    return (values[0::2] - values[1::2]) / (2.0 * step)


def _gradient(objective, x, opts: SolverOptions) -> tuple[np.ndarray, int]:
    grad = getattr(objective, "gradient", None)
    if grad is not None:
        g = np.asarray(grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise EvaluationError("analytic gradient is not finite")
        return g, 1
    return fd_gradient(objective, x, opts.fd_step), 2 * x.size


def _projected_grad(x, g, bounds: BoxSet) -> np.ndarray:
    return x - project_box(x - g, bounds)


def _two_loop(q: np.ndarray, S, Y) -> np.ndarray:
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q = q - a * y
        alphas.append((rho, a))
    s, y = S[-1], Y[-1]
    r = (s @ y) / (y @ y) * q
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ r)
        r = r + (a - b) * s
    return r


def minimize_box(objective, x0, bounds: BoxSet, opts: SolverOptions | None = None, callback=None) -> SolveResult:
    """Minimize ``objective`` over ``bounds`` starting from the projection of ``x0``.

    ``callback(x, f)`` is called with the initial point and every accepted
    iterate. A failed line search ends the run with ``converged=False``; the
    returned point is always the best (last accepted) iterate.
    """
    opts = opts or SolverOptions()
    x = project_box(x0, bounds)
    if bounds.dim not in (1, x.size):
        raise ValueError(f"bounds of dimension {bounds.dim} for a {x.size}-vector")
    evals = 0

    f = float(objective(x))
    evals += 1
    if not np.isfinite(f):
        raise EvaluationError("objective is not finite at the initial point")
    g, cost = _gradient(objective, x, opts)
    evals += cost

    if callback is not None:
        callback(x.copy(), f)

    S: deque = deque(maxlen=opts.lbfgs_memory)
    Y: deque = deque(maxlen=opts.lbfgs_memory)
    pg_norm = float(np.linalg.norm(_projected_grad(x, g, bounds)))
    it = 0
    converged = pg_norm <= opts.grad_tolerance

    while not converged and it < opts.max_iterations:
        it += 1
        active = ((x <= bounds.lower) & (g > 0)) | ((x >= bounds.upper) & (g < 0))
        free = ~active

        d = -g.copy()
        if S and free.any():
            Sf = [s * free for s in S]
            Yf = [y * free for y in Y]
            if all(s @ y > 0 for s, y in zip(Sf, Yf)):
                d[free] = -_two_loop(g * free, Sf, Yf)[free]
        if g[free] @ d[free] >= 0:
            d = -g.copy()
            S.clear()
            Y.clear()

        alpha = 1.0 if S else min(1.0, 1.0 / max(np.abs(g).max(), 1e-12))
        accepted = False
        for _ in range(opts.max_backtracks):
            x_new = project_box(x + alpha * d, bounds)
            step = x_new - x
            if not np.any(step):
                break
            f_new = float(objective(x_new))
            evals += 1
            if np.isfinite(f_new) and f_new < f and f_new <= f + opts.armijo_c * (g @ step):
                accepted = True
                break
            alpha *= opts.backtrack_factor

        if not accepted:
            if S:
                # stale curvature pairs; retry from steepest descent
                S.clear()
                Y.clear()
                continue
            break

        g_new, cost = _gradient(objective, x_new, opts)
        evals += cost
        s_vec, y_vec = x_new - x, g_new - g
        if s_vec @ y_vec > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if callback is not None:
            callback(x.copy(), f)
        pg_norm = float(np.linalg.norm(_projected_grad(x, g, bounds)))
        converged = pg_norm <= opts.grad_tolerance
        if opts.stall_tolerance and decrease <= opts.stall_tolerance * max(abs(f), 1.0):
            break

    return SolveResult(
        v_star=x,
        cost=f,
        iterations=it,
        converged=bool(converged),
        projected_grad_norm=pg_norm,
        evaluations=evals,
    )


def warm_start_shift(previous: Sequence) -> list:
    """Drop the first element and repeat the last, keeping the horizon length."""
    previous = list(previous)
    if not previous:
        raise ValueError("cannot shift an empty sequence")
    return [np.array(p, copy=True) for p in previous[1:]] + [np.array(previous[-1], copy=True)]
