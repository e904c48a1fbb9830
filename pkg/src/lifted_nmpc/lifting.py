"""Hold devices, the lifting operator and the fast-sample fast-hold (FSFH)
approximation of the lifted state trajectory.

Within one period ``[0, T]`` the FSFH grid has ``nprime + 1`` points
``theta_j = j*T/nprime``, both endpoints included; the ``theta = T`` point of
period ``k`` is the ``theta = 0`` point of period ``k + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ode import rk4_step
from .plants import PlantModel

__all__ = [
    "ConfigurationError",
    "HoldSpec",
    "LiftedSignal",
    "LiftedStateGrid",
    "hold_eval",
    "lift_signal",
    "fsfh_lift",
    "chain_lift",
    "chain_states",
]


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class HoldSpec:
    """Piecewise-constant hold with ``M`` equal segments per period ``T``."""

    M: int
    m: int
    T: float

    def __post_init__(self):
        if self.M < 1 or self.m < 1:
            raise ConfigurationError(f"M and m must be >= 1, got M={self.M}, m={self.m}")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")

    @property
    def size(self) -> int:
        return self.m * self.M

    def segments(self, v) -> np.ndarray:
        """Reshape a stacked decision vector ``(..., m*M)`` into ``(..., M, m)``."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.size:
            raise ValueError(f"decision vector has length {v.shape[-1]}, expected m*M={self.size}")
        return v.reshape(v.shape[:-1] + (self.M, self.m))

    def boundaries(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.T / self.M


def hold_eval(spec: HoldSpec, v, theta: float) -> np.ndarray:
    if not 0.0 <= theta < spec.T:
        raise ValueError(f"theta={theta} outside [0, {spec.T})")
    i = min(int(np.floor(theta * spec.M / spec.T)), spec.M - 1)
    return spec.segments(v)[..., i, :].copy()


@dataclass(frozen=True)
class LiftedSignal:
    blocks: np.ndarray  # (periods, samples_per_period, ...)
    T: float

    def flatten(self) -> np.ndarray:
        return self.blocks.reshape((-1,) + self.blocks.shape[2:])

    def __len__(self):
        return self.blocks.shape[0]

    def __getitem__(self, k):
        return self.blocks[k]


def lift_signal(samples, T: float, samples_per_period: int) -> LiftedSignal:
    """Cut a uniformly sampled signal into per-period blocks ``psi[k][j] = psi[k*spp + j]``."""
    samples = np.asarray(samples)
    if samples_per_period < 1:
        raise ValueError("samples_per_period must be >= 1")
    if samples.shape[0] % samples_per_period:
        raise ValueError(
            f"{samples.shape[0]} samples is not a multiple of samples_per_period={samples_per_period}"
        )
    blocks = samples.reshape((-1, samples_per_period) + samples.shape[1:])
    return LiftedSignal(blocks=blocks.copy(), T=T)


@dataclass(frozen=True)
class LiftedStateGrid:
    T: float
    nprime: int
    states: np.ndarray  # (nprime + 1, n)

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.nprime + 1) * self.T / self.nprime

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


def _check_grid(spec: HoldSpec, nprime: int, substeps: int):
    if nprime < 1:
        raise ConfigurationError(f"nprime must be >= 1, got {nprime}")
    if nprime % spec.M:
        raise ConfigurationError(f"nprime={nprime} must be a multiple of upsampling M={spec.M}")
    if substeps < 1:
        raise ConfigurationError(f"substeps must be >= 1, got {substeps}")


def _period_states(plant: PlantModel, x, segs, T, nprime, substeps):
    # segs: (..., M, m). Step size and segment index use the refined grid only,
    # so (nprime, substeps) and (nprime*substeps, 1) give identical arithmetic.
    M = segs.shape[-2]
    steps = nprime * substeps
    h = T / steps
    per_segment = steps // M
    out = [x]
    for j in range(nprime):
        for s in range(substeps):
            i = (j * substeps + s) // per_segment
            x = rk4_step(plant.f, x, segs[..., i, :], h)
        out.append(x)
    return np.stack(out, axis=-2)


def chain_states(plant: PlantModel, x0, spec: HoldSpec, v_seq, nprime: int, substeps: int = 1) -> np.ndarray:
    """Array form of :func:`chain_lift` supporting leading batch axes.

    ``v_seq`` has shape ``(..., N, m*M)`` and ``x0`` shape ``(..., n)`` (or
    ``(n,)``, broadcast). Returns ``(..., N, nprime + 1, n)``.
    """
    _check_grid(spec, nprime, substeps)
    segs = spec.segments(v_seq)
    if segs.ndim < 3 or segs.shape[-3] < 1:
        raise ValueError("v_seq must hold at least one period")
    x = np.asarray(x0, dtype=float)
    x = np.broadcast_to(x, segs.shape[:-3] + (plant.n,))
    grids = []
    for k in range(segs.shape[-3]):
        g = _period_states(plant, x, segs[..., k, :, :], spec.T, nprime, substeps)
        grids.append(g)
        x = g[..., -1, :]
    return np.stack(grids, axis=-3)


def fsfh_lift(plant: PlantModel, x_init, spec: HoldSpec, v, nprime: int, substeps: int = 1) -> LiftedStateGrid:
    """FSFH approximation of one period of the lifted state trajectory."""
    _check_grid(spec, nprime, substeps)
    x = np.asarray(x_init, dtype=float)
    states = _period_states(plant, x, spec.segments(v), spec.T, nprime, substeps)
    return LiftedStateGrid(spec.T, nprime, states)


def chain_lift(
    plant: PlantModel, x0, spec: HoldSpec, v_seq: Sequence, nprime: int, substeps: int = 1
) -> list[LiftedStateGrid]:
    """Lifted grids over ``N`` periods, each starting where the previous ended."""
    v_seq = np.asarray(v_seq, dtype=float)
    if v_seq.ndim != 2 or v_seq.shape[0] < 1:
        raise ValueError("v_seq must be a non-empty sequence of decision vectors")
    states = chain_states(plant, x0, spec, v_seq, nprime, substeps)
    return [LiftedStateGrid(spec.T, nprime, s) for s in states]
