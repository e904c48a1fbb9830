"""Receding-horizon controllers and the closed-loop simulator.

Two controllers share one simulator:

* conventional NMPC: decisions are one input per period; the prediction model
  is ``x[k+1] = F(x[k], u[k])`` with ``F`` = ``nprime`` RK4 steps over ``T``
  and the cost only sees period-start states;
* lifted NMPC: decisions are ``M`` hold segments per period and the cost
  integrates the stage cost over the FSFH grid with Simpson's rule.

The "truth" plant between samples is an RK4 integration with
``fine_substeps`` steps per period, independent of the controller's grid.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .cost import (
    NORMALIZATIONS,
    BoxSet,
    QuadraticWeights,
    box_violation,
    conventional_total_cost,
    lifted_cost_array,
    state_penalty,
)
from .lifting import ConfigurationError, HoldSpec, chain_states, fsfh_lift
from .ode import IntegrationError
from .plants import PlantModel
from .solver import EvaluationError, SolverOptions, minimize_box, warm_start_shift

log = logging.getLogger(__name__)

__all__ = [
    "MpcConfig",
    "StepRecord",
    "ScenarioResult",
    "Metrics",
    "ClosedLoopError",
    "ShootingObjective",
    "truth_step",
    "run_conventional_mpc",
    "run_lifted_mpc",
    "run_controller",
    "compute_metrics",
    "CONTROLLERS",
]

CONTROLLERS = ("conventional", "lifted")
GRADIENTS = ("fd", "adjoint")


class ClosedLoopError(RuntimeError):
    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"closed loop aborted at step {step}: {cause}")


@dataclass(frozen=True)
class MpcConfig:
    T: float
    N: int
    weights: QuadraticWeights
    input_box: BoxSet
    nprime: int = 10
    M: int = 1
    state_box: Optional[BoxSet] = None
    terminal_box: Optional[BoxSet] = None
    normalization: str = "integral"
    solver: SolverOptions = field(default_factory=SolverOptions)
    state_penalty: float = 0.0
    fine_substeps: int = 100
    gradient: str = "fd"

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive, got {self.T}")
        if self.N < 1:
            raise ConfigurationError(f"N must be >= 1, got {self.N}")
        if self.M < 1:
            raise ConfigurationError(f"upsampling M must be >= 1, got {self.M}")
        if self.nprime < 2 or self.nprime % 2:
            raise ConfigurationError(f"nprime must be even and >= 2, got {self.nprime}")
        if self.nprime % self.M:
            raise ConfigurationError(f"nprime must be a multiple of upsampling (nprime={self.nprime}, M={self.M})")
        if self.fine_substeps < 1 or self.fine_substeps % self.M:
            raise ConfigurationError(
                f"fine_substeps must be a positive multiple of upsampling (got {self.fine_substeps}, M={self.M})"
            )
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(f"normalization must be one of {NORMALIZATIONS}")
        if self.gradient not in GRADIENTS:
            raise ConfigurationError(f"gradient must be one of {GRADIENTS}, got {self.gradient!r}")
        if self.state_penalty < 0:
            raise ConfigurationError("state_penalty must be >= 0")
        if self.input_box.dim != self.weights.m:
            raise ConfigurationError(f"input box has dimension {self.input_box.dim}, R is {self.weights.m}x{self.weights.m}")
        for name, box in (("state_box", self.state_box), ("terminal_box", self.terminal_box)):
            if box is not None and box.dim != self.weights.n:
                raise ConfigurationError(f"{name} has dimension {box.dim}, expected {self.weights.n}")

    @property
    def m(self) -> int:
        return self.weights.m

    @property
    def n(self) -> int:
        return self.weights.n

    def hold(self, controller: str = "lifted") -> HoldSpec:
        return HoldSpec(M=self.M if controller == "lifted" else 1, m=self.m, T=self.T)

    def echo(self) -> dict:
        """Flat, fully resolved view of the configuration."""
        w = self.weights
        out = {
            "T": self.T,
            "N": self.N,
            "nprime": self.nprime,
            "upsampling": self.M,
            "Q": w.Q.tolist(),
            "R": w.R.tolist(),
            "Qf": w.Qf.tolist(),
            "u_lower": self.input_box.lower.tolist(),
            "u_upper": self.input_box.upper.tolist(),
            "normalization": self.normalization,
            "state_penalty": self.state_penalty,
            "fine_substeps": self.fine_substeps,
            "gradient": self.gradient,
        }
        for key, box in (("x", self.state_box), ("xf", self.terminal_box)):
            if box is not None:
                out[f"{key}_lower"] = box.lower.tolist()
                out[f"{key}_upper"] = box.upper.tolist()
        out.update({f"solver.{k}": v for k, v in asdict(self.solver).items()})
        return out


class ShootingObjective:
    """Single-shooting objective from a measured state.

    Decision vectors are the flattened ``(N, m*M)`` hold values. ``batch``
    evaluates many decision vectors at once, which is what the finite
    difference gradient uses. Plants with a compiled kernel go through the
    numba path unless ``use_kernel=False``.
    """

    def __init__(self, plant: PlantModel, config: MpcConfig, x0, controller: str = "lifted", use_kernel: bool = True):
        if controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
        self.plant = plant
        self.config = config
        self.controller = controller
        self.spec = config.hold(controller)
        self.x0 = np.asarray(x0, dtype=float)
        self.use_kernel = use_kernel and plant.kernel is not None
        n = plant.n
        unb = BoxSet.unbounded(n)
        self._xbox = config.state_box or unb
        self._fbox = config.terminal_box or unb
        bounded = not (self._xbox.is_unbounded and self._fbox.is_unbounded)
        self._rho = config.state_penalty if bounded else 0.0
        self.gradient = None
        if config.gradient == "adjoint":
            if not self.use_kernel or plant.jacobian is None:
                raise ConfigurationError(f"adjoint gradients need compiled dynamics and Jacobians; plant {plant.name!r} has none")
            self.gradient = self._adjoint_gradient
        if controller == "conventional":
            self._mode = _kernels.MODE_SAMPLED
        elif config.normalization == "integral":
            self._mode = _kernels.MODE_INTEGRAL
        else:
            self._mode = _kernels.MODE_PER_SAMPLE

    @property
    def size(self) -> int:
        return self.config.N * self.spec.size

    def bounds(self) -> BoxSet:
        return self.config.input_box.tile(self.config.N * self.spec.M)

    def _segments(self, V) -> np.ndarray:
        V = np.asarray(V, dtype=float)
        return self.spec.segments(V.reshape(V.shape[0], self.config.N, self.spec.size))

    def batch(self, V) -> np.ndarray:
        segs = self._segments(V)
        if self.use_kernel:
            return self._batch_kernel(segs)
        return self._batch_numpy(segs)

    def __call__(self, v) -> float:
        return float(self.batch(np.asarray(v, dtype=float)[None])[0])

    def _batch_kernel(self, segs):
        return _kernels.objective_batch(
            self.plant.kernel,
            np.asarray(self.plant.kernel_params, dtype=float),
            self.x0,
            np.ascontiguousarray(segs),
            *self._kernel_args(),
        )

    def _kernel_args(self):
        c = self.config
        w = c.weights
        return (
            float(c.T), int(c.nprime), 1, w.Q, w.R, w.Qf, self._mode,
            self._xbox.lower, self._xbox.upper, self._fbox.lower, self._fbox.upper, float(self._rho),
        )

    def value_and_grad(self, v) -> tuple[float, np.ndarray]:
        """Objective and its exact gradient via the discrete adjoint of the RK4 rollout."""
        segs = np.ascontiguousarray(self._segments(np.asarray(v, dtype=float)[None])[0])
        value, G = _kernels.objective_grad(
            self.plant.kernel,
            self.plant.jacobian,
            np.asarray(self.plant.kernel_params, dtype=float),
            self.x0,
            segs,
            *self._kernel_args(),
        )
        return float(value), G.reshape(-1)

    def _adjoint_gradient(self, v) -> np.ndarray:
        return self.value_and_grad(v)[1]

    def _batch_numpy(self, segs):
        c = self.config
        w = c.weights
        flat = segs.reshape(segs.shape[:2] + (-1,))
        try:
            states = chain_states(self.plant, self.x0, self.spec, flat, c.nprime)
        except IntegrationError:
            return np.array([self._safe_single(s) for s in segs])
        x_end = states[:, -1, -1, :]
        if self._mode == _kernels.MODE_SAMPLED:
            samples = states[:, :, 0, :]
            value = np.array(
                [conventional_total_cost(np.vstack([s, e]), u[:, 0, :], w) for s, e, u in zip(samples, x_end, segs)]
            )
            pen_states = samples[:, :, None, :]
        else:
            value = lifted_cost_array(states, segs, w, c.T, c.normalization)
            pen_states = states
        if self._rho > 0:
            value = value + state_penalty(pen_states, self._xbox, self._rho)
            term = np.maximum(np.maximum(self._fbox.lower - x_end, x_end - self._fbox.upper), 0.0)
            value = value + self._rho * (term**2).sum(axis=-1)
        return np.where(np.isfinite(value), value, np.nan)

    def _safe_single(self, segs):
        try:
            return float(self._batch_numpy(segs[None])[0])
        except IntegrationError:
            return np.nan

    def predicted_states(self, v) -> np.ndarray:
        """Model prediction ``(N, nprime+1, n)`` for one decision vector."""
        segs = self._segments(np.asarray(v, dtype=float)[None])[0]
        return chain_states(self.plant, self.x0, self.spec, segs.reshape(segs.shape[0], -1), self.config.nprime)


def truth_step(plant: PlantModel, x, spec: HoldSpec, v, fine_substeps: int = 100):
    """Advance the plant one period under the hold ``H(v)``.

    Returns the endpoint and the ``(fine_substeps + 1, n)`` intersample trace.
    """
    if fine_substeps < 1 or fine_substeps % spec.M:
        raise ConfigurationError(f"fine_substeps={fine_substeps} must be a positive multiple of M={spec.M}")
    grid = fsfh_lift(plant, x, spec, v, fine_substeps, 1)
    return grid.states[-1], grid.states


@dataclass
class StepRecord:
    cost: float
    iterations: int
    converged: bool
    projected_grad_norm: float
    evaluations: int
    wall_time: float


@dataclass
class ScenarioResult:
    controller: str
    plant: str
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    period_index: np.ndarray
    records: list[StepRecord]
    config: dict
    metadata: dict = field(default_factory=dict)

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class Metrics:
    settling_time: Optional[float]
    peak_input: float
    max_state_norm: float
    final_norm: float
    input_violation: float
    state_violation: float
    settle_threshold: float

    def as_dict(self) -> dict:
        return asdict(self)


def _closed_loop(plant: PlantModel, config: MpcConfig, x0, duration: float, controller: str) -> ScenarioResult:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (plant.n,):
        raise ValueError(f"x0 has shape {x0.shape}, plant {plant.name} has n={plant.n}")
    if config.n != plant.n or config.m != plant.m:
        raise ConfigurationError(f"weights sized for n={config.n}, m={config.m}; plant has n={plant.n}, m={plant.m}")
    periods = int(math.floor(duration / config.T + 1e-9))
    if periods < 1:
        raise ValueError(f"duration {duration} is shorter than one period T={config.T}")

    spec = config.hold(controller)
    fine = config.fine_substeps
    bounds = config.input_box.tile(config.N * spec.M)
    guess = [np.clip(np.zeros(spec.size), bounds.lower[: spec.size], bounds.upper[: spec.size])] * config.N

    x = x0.copy()
    states, inputs, period_index, records = [x0[None]], [], [], []
    seg_of_step = (np.arange(fine) * spec.M) // fine
    for n in range(periods):
        obj = ShootingObjective(plant, config, x, controller)
        t0 = time.perf_counter()
        try:
            res = minimize_box(obj, np.concatenate(guess), bounds, config.solver)
        except (EvaluationError, IntegrationError) as exc:
            raise ClosedLoopError(n, exc) from exc
        wall = time.perf_counter() - t0
        V = res.v_star.reshape(config.N, spec.size)
        records.append(StepRecord(res.cost, res.iterations, res.converged, res.projected_grad_norm, res.evaluations, wall))
        try:
            x_next, trace = truth_step(plant, x, spec, V[0], fine)
        except IntegrationError as exc:
            raise ClosedLoopError(n, exc) from exc
        segs = spec.segments(V[0])
        inputs.append(segs[seg_of_step])
        states.append(trace[1:])
        period_index.append(np.full(fine, n))
        x = x_next
        guess = warm_start_shift(list(V))
        if log.isEnabledFor(logging.DEBUG):
            log.debug("%s step %d: |x|=%.4g cost=%.6g iters=%d", controller, n, np.linalg.norm(x), res.cost, res.iterations)

    inputs.append(inputs[-1][-1:])
    period_index.append(np.array([periods - 1]))
    times = np.arange(periods * fine + 1) * (config.T / fine)
    return ScenarioResult(
        controller=controller,
        plant=plant.name,
        times=times,
        states=np.concatenate(states),
        inputs=np.concatenate(inputs),
        period_index=np.concatenate(period_index),
        records=records,
        config=config.echo(),
        metadata={
            "x0": x0.tolist(),
            "duration": periods * config.T,
            "prediction_model": "rk4" if controller == "lifted" else f"rk4 x {config.nprime} substeps per period",
            "upsampling": spec.M,
        },
    )


def run_conventional_mpc(plant: PlantModel, config: MpcConfig, x0, duration: float) -> ScenarioResult:
    """Sample-point NMPC with one zero-order-held input per period."""
    return _closed_loop(plant, config, x0, duration, "conventional")


def run_lifted_mpc(plant: PlantModel, config: MpcConfig, x0, duration: float) -> ScenarioResult:
    """NMPC on the FSFH-lifted trajectory with an ``M``-segment hold."""
    return _closed_loop(plant, config, x0, duration, "lifted")


def run_controller(controller: str, plant: PlantModel, config: MpcConfig, x0, duration: float) -> ScenarioResult:
    if controller not in CONTROLLERS:
        raise ValueError(f"controller must be one of {CONTROLLERS}, got {controller!r}")
    return _closed_loop(plant, config, x0, duration, controller)


def settling_time(times, norms, eps: float) -> Optional[float]:
    below = np.asarray(norms) < eps
    if below.size == 0 or not below[-1]:
        return None
    above = np.flatnonzero(~below)
    idx = 0 if above.size == 0 else int(above[-1]) + 1
    return float(times[idx])


def compute_metrics(
    result: ScenarioResult,
    eps: float = 0.1,
    input_box: Optional[BoxSet] = None,
    state_box: Optional[BoxSet] = None,
) -> Metrics:
    if result.times.size == 0:
        raise ValueError("empty result")
    if input_box is None and "u_lower" in result.config:
        input_box = BoxSet(result.config["u_lower"], result.config["u_upper"])
    if state_box is None and "x_lower" in result.config:
        state_box = BoxSet(result.config["x_lower"], result.config["x_upper"])
    norms = result.norms
    u_viol = box_violation(result.inputs, input_box)[0] if input_box is not None else 0.0
    x_viol = box_violation(result.states, state_box)[0] if state_box is not None else 0.0
    return Metrics(
        settling_time=settling_time(result.times, norms, eps),
        peak_input=float(np.abs(result.inputs).max()) if result.inputs.size else 0.0,
        max_state_norm=float(norms.max()),
        final_norm=float(norms[-1]),
        input_violation=u_viol,
        state_violation=x_viol,
        settle_threshold=eps,
    )
