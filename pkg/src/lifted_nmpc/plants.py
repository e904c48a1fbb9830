"""Plant models used by the controllers.

Every vector field here broadcasts over leading axes: ``x`` has shape
``(..., n)`` and ``u`` has shape ``(..., m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _kernels
from .ode import LinearPlant

__all__ = [
    "PlantModel",
    "vdp_dynamics",
    "cartpole_dynamics",
    "van_der_pol",
    "cartpole",
    "linear_plant_model",
    "zero_plant",
    "integrator_plant",
    "make_plant",
    "PLANTS",
    "CARTPOLE_PARAMS",
]

CARTPOLE_PARAMS = {"g": 9.8, "l": 1.0, "m_c": 1.0, "m_p": 0.2}


@dataclass(frozen=True)
class PlantModel:
    name: str
    n: int
    m: int
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray] | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    # optional compiled twin of ``f`` with signature (x, u, params_array) on 1-D arrays
    kernel: Callable | None = field(default=None, compare=False, repr=False)
    kernel_params: tuple = ()
    # compiled Jacobians (A, B) = (df/dx, df/du), same signature as ``kernel``
    jacobian: Callable | None = field(default=None, compare=False, repr=False)

    @property
    def p(self) -> int:
        if self.h is None:
            return self.n
        return int(np.asarray(self.h(np.zeros(self.n))).shape[-1])

    def output(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x.copy() if self.h is None else self.h(x)


def vdp_dynamics(x, u, mu: float = 1.0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([x2, -mu * (x1 * x1 - 1.0) * x2 - x1 + u[..., 0]], axis=-1)


def cartpole_dynamics(x, u, g=9.8, l=1.0, m_c=1.0, m_p=0.2) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)[..., 0]
    th, v, w = x[..., 1], x[..., 2], x[..., 3]
    s, c = np.sin(th), np.cos(th)
    den = m_c + m_p * s * s
    acc = (-m_p * l * w * w * s + m_p * g * s * c + u) / den
    alpha = (-m_p * l * w * w * s * c + (m_c + m_p) * g * s + u * c) / (l * den)
    return np.stack([v, w, acc, alpha], axis=-1)


def van_der_pol(mu: float = 1.0) -> PlantModel:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return PlantModel(
        "vdp", 2, 1, lambda x, u: vdp_dynamics(x, u, mu), params={"mu": mu},
        kernel=_kernels.vdp_kernel, kernel_params=(mu,), jacobian=_kernels.vdp_jacobian,
    )


def cartpole(g=9.8, l=1.0, m_c=1.0, m_p=0.2) -> PlantModel:
    params = {"g": g, "l": l, "m_c": m_c, "m_p": m_p}
    if min(l, m_c) <= 0 or m_p < 0:
        raise ValueError(f"cart-pole needs positive length and masses, got {params}")
    return PlantModel(
        "cartpole", 4, 1, lambda x, u: cartpole_dynamics(x, u, **params), params=params,
        kernel=_kernels.cartpole_kernel, kernel_params=(g, l, m_c, m_p),
        jacobian=_kernels.cartpole_jacobian,
    )


def linear_plant_model(lin: LinearPlant, name: str = "linear") -> PlantModel:
    return PlantModel(name, lin.n, lin.m, lin.f, h=lambda x: x @ lin.C.T)


def zero_plant(n: int = 1, m: int = 1) -> PlantModel:
    """``x' = 0``; handy for checking that controllers do nothing."""
    return PlantModel("zero", n, m, lambda x, u: np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (n,)))


def integrator_plant() -> PlantModel:
    """Scalar ``x' = u``."""
    return PlantModel("integrator", 1, 1, lambda x, u: np.broadcast_to(u, np.broadcast_shapes(x.shape, u.shape)).copy())


PLANTS: dict[str, Callable[..., PlantModel]] = {
    "vdp": van_der_pol,
    "cartpole": cartpole,
    "zero": zero_plant,
    "integrator": integrator_plant,
}


def make_plant(name: str, **params) -> PlantModel:
    try:
        factory = PLANTS[name]
    except KeyError:
        raise ValueError(f"unknown plant {name!r}; available: {', '.join(sorted(PLANTS))}") from None
    return factory(**params)
