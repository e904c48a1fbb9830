"""Quadrature, MPC objectives and box-constraint bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lifting import HoldSpec, LiftedStateGrid

__all__ = [
    "QuadraticWeights",
    "BoxSet",
    "NORMALIZATIONS",
    "simpson_integrate",
    "quad_form",
    "lifted_period_cost",
    "lifted_total_cost",
    "lifted_cost_array",
    "conventional_total_cost",
    "box_violation",
    "state_penalty",
]

NORMALIZATIONS = ("integral", "per-sample")


def _as_matrix(a, size: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = np.diag(a)
    if size is not None and a.shape != (size, size):
        raise ValueError(f"weight has shape {a.shape}, expected ({size}, {size})")
    return a


@dataclass(frozen=True)
class QuadraticWeights:
    """Stage cost ``x'Qx + u'Ru`` and terminal cost ``x'Q_f x``.

    Vectors are accepted as diagonals, scalars as 1x1 matrices.
    """

    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray

    def __post_init__(self):
        Q = _as_matrix(self.Q)
        R = _as_matrix(self.R)
        Qf = _as_matrix(self.Qf, Q.shape[0])
        for name, mat in (("Q", Q), ("R", R), ("Qf", Qf)):
            if mat.shape[0] != mat.shape[1]:
                raise ValueError(f"{name} must be square, got {mat.shape}")
            if not np.allclose(mat, mat.T, rtol=0, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
        for name, mat in (("Q", Q), ("Qf", Qf)):
            if np.linalg.eigvalsh(mat).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Qf", Qf)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("box bounds must not be NaN")
        if np.any(lo > hi):
            raise ValueError(f"box lower bound exceeds upper bound: {lo} > {hi}")
        object.__setattr__(self, "lower", lo.copy())
        object.__setattr__(self, "upper", hi.copy())

    @classmethod
    def unbounded(cls, dim: int) -> "BoxSet":
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def is_unbounded(self) -> bool:
        return bool(np.all(np.isneginf(self.lower)) and np.all(np.isposinf(self.upper)))

    def tile(self, reps: int) -> "BoxSet":
        return BoxSet(np.tile(self.lower, reps), np.tile(self.upper, reps))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def simpson_integrate(samples, h: float, axis: int = -1):
    """Composite Simpson rule on an odd number of equally spaced samples."""
    s = np.asarray(samples, dtype=float)
    s = np.moveaxis(s, axis, -1)
    count = s.shape[-1]
    if count < 3 or count % 2 == 0:
        raise ValueError(f"Simpson's rule needs an odd sample count >= 3, got {count}")
    if not h > 0:
        raise ValueError(f"spacing must be positive, got {h}")
    total = s[..., 0] + s[..., -1] + 4.0 * s[..., 1:-1:2].sum(axis=-1) + 2.0 * s[..., 2:-1:2].sum(axis=-1)
    out = h / 3.0 * total
    return float(out) if np.ndim(out) == 0 else out


def quad_form(x: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``x' W x`` over the last axis."""
    return np.einsum("...i,ij,...j->...", x, W, x)


def lifted_cost_array(states, segs, w: QuadraticWeights, T: float, normalization: str = "integral"):
    """Lifted objective for stacked grids.

    ``states`` is ``(..., N, nprime+1, n)`` as produced by
    :func:`~lifted_nmpc.lifting.chain_states` and ``segs`` the matching hold
    values ``(..., N, M, m)``. Returns the objective over the leading axes.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}, got {normalization!r}")
    nprime = states.shape[-2] - 1
    M = segs.shape[-2]
    if nprime % 2 or nprime % M:
        raise ValueError(f"grid with nprime={nprime} must be even and a multiple of M={M}")
    state_int = simpson_integrate(quad_form(states, w.Q), T / nprime)
    effort = quad_form(segs, w.R).sum(axis=-1)
    if normalization == "integral":
        stage = state_int + (T / M) * effort
    else:
        stage = state_int / T + effort / M
    x_end = states[..., -1, -1, :]
    return stage.sum(axis=-1) + quad_form(x_end, w.Qf)


def lifted_period_cost(
    grid: LiftedStateGrid, spec: HoldSpec, v, w: QuadraticWeights, normalization: str = "integral"
) -> float:
    if grid.states.shape[-1] != w.n:
        raise ValueError(f"grid state dimension {grid.states.shape[-1]} does not match Q ({w.n})")
    if spec.m != w.m:
        raise ValueError(f"hold input dimension {spec.m} does not match R ({w.m})")
    if abs(grid.T - spec.T) > 1e-12 * spec.T:
        raise ValueError(f"grid period {grid.T} differs from hold period {spec.T}")
    states = grid.states[None]
    segs = spec.segments(v)[None]
    zero = QuadraticWeights(w.Q, w.R, np.zeros_like(w.Qf))
    return float(lifted_cost_array(states, segs, zero, spec.T, normalization))


def lifted_total_cost(
    grids: Sequence[LiftedStateGrid], spec: HoldSpec, v_seq, w: QuadraticWeights, normalization: str = "integral"
) -> float:
    v_seq = np.asarray(v_seq, dtype=float)
    if len(grids) != v_seq.shape[0]:
        raise ValueError(f"{len(grids)} grids but {v_seq.shape[0]} decision vectors")
    if not grids:
        raise ValueError("need at least one period")
    total = sum(lifted_period_cost(g, spec, v, w, normalization) for g, v in zip(grids, v_seq))
    x_end = grids[-1].states[-1]
    return float(total + quad_form(x_end, w.Qf))


def conventional_total_cost(x_seq, u_seq, w: QuadraticWeights) -> float:
    x_seq = np.asarray(x_seq, dtype=float)
    u_seq = np.asarray(u_seq, dtype=float)
    if u_seq.ndim == 1:
        u_seq = u_seq[:, None]
    if x_seq.shape[0] != u_seq.shape[0] + 1:
        raise ValueError(f"need N+1 states for N inputs, got {x_seq.shape[0]} and {u_seq.shape[0]}")
    stage = quad_form(x_seq[:-1], w.Q).sum() + quad_form(u_seq, w.R).sum()
    return float(stage + quad_form(x_seq[-1], w.Qf))


def _violations(points, box: BoxSet) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None] if box.dim == 1 else p[None]
    return np.maximum(np.maximum(box.lower - p, p - box.upper), 0.0)


def box_violation(points, box: BoxSet) -> tuple[float, int]:
    """Largest coordinate-wise excursion outside ``box`` and the point index where it occurs."""
    viol = _violations(points, box)
    if viol.size == 0:
        return 0.0, 0
    per_point = viol.reshape(viol.shape[0], -1).max(axis=1)
    idx = int(np.argmax(per_point))
    return float(per_point[idx]), idx


def state_penalty(grids, box: BoxSet, rho: float):
    """``rho`` times the summed squared violation over every grid point.

    ``grids`` may be a list of :class:`LiftedStateGrid` or a states array
    ``(..., N, nprime+1, n)``; the array form reduces over the last three axes.
    """
    if rho < 0:
        raise ValueError(f"penalty weight must be nonnegative, got {rho}")
    if isinstance(grids, (list, tuple)):
        states = np.stack([g.states for g in grids])
    else:
        states = np.asarray(grids, dtype=float)
    if rho == 0 or box.is_unbounded:
        return 0.0 if states.ndim <= 3 else np.zeros(states.shape[:-3])
    viol = np.maximum(np.maximum(box.lower - states, states - box.upper), 0.0)
    out = rho * (viol**2).sum(axis=(-3, -2, -1))
    return float(out) if np.ndim(out) == 0 else out
