"""Fixed-step integration and exact discretization of linear plants.

All routines accept states with arbitrary leading batch dimensions, i.e. a
state array of shape ``(..., n)`` and an input array of shape ``(..., m)``.
The batched form is what the finite-difference gradient in the solver relies
on, so the dynamics callables must broadcast over leading axes as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Dynamics = Callable[[np.ndarray, np.ndarray], np.ndarray]

__all__ = [
    "IntegrationError",
    "LinearPlant",
    "rk4_step",
    "integrate_grid",
    "expm",
    "discretize_linear",
    "linear_lift_reference",
]


class IntegrationError(ArithmeticError):
    """Raised when the vector field produces a non-finite value."""

    def __init__(self, stage: int, message: str = ""):
        self.stage = stage
        super().__init__(message or f"non-finite derivative at RK4 stage {stage}")


def _check_finite(k: np.ndarray, stage: int) -> np.ndarray:
    if not np.all(np.isfinite(k)):
        raise IntegrationError(stage)
    return k


def rk4_step(f: Dynamics, x, u, h: float) -> np.ndarray:
    """One classical Runge-Kutta step with ``u`` held over ``[0, h]``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k1 = _check_finite(f(x, u), 1)
    k2 = _check_finite(f(x + 0.5 * h * k1, u), 2)
    k3 = _check_finite(f(x + 0.5 * h * k2, u), 3)
    k4 = _check_finite(f(x + h * k3, u), 4)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_grid(
    f: Dynamics,
    x0,
    u_of_t: Callable[[float], np.ndarray],
    t_grid: Sequence[float],
    substeps: int = 1,
) -> list[np.ndarray]:
    """States at every point of ``t_grid`` using ``substeps`` RK4 steps per cell.

    The input is sampled at the left end of each refined step, so ``u_of_t``
    must be piecewise constant with breakpoints on the refined grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    if substeps < 1:
        raise ValueError("substeps must be >= 1")

    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for t0, t1 in zip(t_grid[:-1], t_grid[1:]):
        h = (t1 - t0) / substeps
        for s in range(substeps):
            x = rk4_step(f, x, u_of_t(t0 + s * h), h)
        out.append(x.copy())
    return out


@dataclass(frozen=True)
class LinearPlant:
    """Continuous-time LTI plant ``x' = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        C = np.eye(A.shape[0]) if self.C is None else np.atleast_2d(np.asarray(self.C, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise ValueError(f"B has {B.shape[0]} rows, expected {A.shape[0]}")
        if C.shape[1] != A.shape[0]:
            raise ValueError(f"C has {C.shape[1]} columns, expected {A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def f(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return x @ self.A.T + u @ self.B.T


_TAYLOR_DEGREE = 13


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring around a degree-13 Taylor core.

    The matrix is scaled by ``2**-s`` until its 1-norm is at most 0.5; the
    truncation error of the core is then below ``0.5**14 / 14!``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got {a.shape}")
    norm = np.abs(a).sum(axis=0).max() if a.size else 0.0
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    scaled = a / (2.0**s)

    n = a.shape[0]
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, _TAYLOR_DEGREE + 1):
        term = term @ scaled / k
        result = result + term
    for _ in range(s):
        result = result @ result
    return result


def discretize_linear(plant: LinearPlant, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization ``(e^{AT}, int_0^T e^{As} B ds)``.

    Uses the augmented block matrix ``[[A, B], [0, 0]] * T``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    n, m = plant.n, plant.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = plant.A
    aug[:n, n:] = plant.B
    E = expm(aug * T)
    return E[:n, :n], E[:n, n:]


def linear_lift_reference(
    plant: LinearPlant, x_k, v, T: float, grid_count: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact lifted state/output samples at ``theta_j = j*T/grid_count``.

    The input ``v`` is held constant over the period. Each sample is computed
    directly from the discretization with step ``theta_j`` rather than by
    chaining, so errors do not accumulate along the grid.
    """
    if grid_count < 1:
        raise ValueError("grid_count must be >= 1")
    x_k = np.asarray(x_k, dtype=float)
    v = np.asarray(v, dtype=float).reshape(plant.m)
    if x_k.shape != (plant.n,):
        raise ValueError(f"x_k has shape {x_k.shape}, expected ({plant.n},)")
    out = [(x_k.copy(), plant.C @ x_k)]
    for j in range(1, grid_count + 1):
        Ad, Bd = discretize_linear(plant, j * T / grid_count)
        x = Ad @ x_k + Bd @ v
        out.append((x, plant.C @ x))
    return out
