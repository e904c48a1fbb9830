"""Scenario presets and the key=value scenario file format.

A scenario file is INI-style with four optional sections::

    [scenario]
    preset = vdp            ; start from a preset, then override
    controller = lifted
    x0 = 2, 0
    duration = 10
    settle_eps = 0.05

    [plant]
    name = vdp
    mu = 1.0

    [mpc]
    T = 0.05
    N = 5
    nprime = 10
    upsampling = 1
    Q = 4, 1                ; a comma list is a diagonal
    R = 1
    Qf = 8, 0; 0, 2         ; semicolons separate matrix rows
    u_lower = -0.75
    u_upper = 1

    [solver]
    max_iterations = 200

Numbers accept ``pi`` and ``-pi``. Unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .cost import BoxSet, QuadraticWeights
from .lifting import ConfigurationError
from .mpc import CONTROLLERS, MpcConfig
from .plants import PLANTS, PlantModel, make_plant
from .solver import SolverOptions

__all__ = [
    "Scenario",
    "ScenarioError",
    "PRESETS",
    "preset",
    "load_scenario",
    "parse_scenario",
]


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    plant_name: str
    config: MpcConfig
    x0: tuple
    duration: float
    controller: str = "lifted"
    plant_params: dict = field(default_factory=dict)
    settle_eps: float = 0.1

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ScenarioError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if not self.duration > 0:
            raise ScenarioError(f"duration must be positive, got {self.duration}")
        if not self.settle_eps > 0:
            raise ScenarioError(f"settle_eps must be positive, got {self.settle_eps}")
        if len(self.x0) != self.config.n:
            raise ScenarioError(f"x0 has {len(self.x0)} entries, the weights expect n={self.config.n}")

    def plant(self) -> PlantModel:
        return make_plant(self.plant_name, **self.plant_params)

    def with_controller(self, controller: str) -> "Scenario":
        return replace(self, controller=controller)

    def echo(self) -> dict:
        out = {
            "scenario": self.name,
            "plant": self.plant_name,
            **{f"plant.{k}": v for k, v in self.plant_params.items()},
            "controller": self.controller,
            "x0": list(self.x0),
            "duration": self.duration,
            "settle_eps": self.settle_eps,
        }
        out.update(self.config.echo())
        return out


def _vdp() -> Scenario:
    Q = np.diag([4.0, 1.0])
    cfg = MpcConfig(
        T=0.05, N=5, weights=QuadraticWeights(Q, 1.0, 2 * Q), input_box=BoxSet([-0.75], [1.0]), nprime=10,
    )
    return Scenario("vdp", "vdp", cfg, (2.0, 0.0), 10.0, plant_params={"mu": 1.0}, settle_eps=0.05)


_CP_WEIGHTS = dict(Q=[2.5, 10.0, 0.01, 0.01], R=0.1, Qf=[3.0, 10.0, 0.02, 0.02])


def _cartpole(name: str, T: float, M: int, duration: float) -> Scenario:
    cfg = MpcConfig(
        T=T, N=20, weights=QuadraticWeights(**_CP_WEIGHTS), input_box=BoxSet([-15.0], [15.0]), nprime=10, M=M,
    )
    params = {"g": 9.8, "l": 1.0, "m_c": 1.0, "m_p": 0.2}
    return Scenario(name, "cartpole", cfg, (0.0, math.pi, 0.0, 0.0), duration, plant_params=params, settle_eps=0.1)


PRESETS: dict[str, Callable[[], Scenario]] = {
    "vdp": _vdp,
    "cartpole-single": lambda: _cartpole("cartpole-single", 0.02, 1, 10.0),
    "cartpole-multirate": lambda: _cartpole("cartpole-multirate", 0.5, 10, 20.0),
}


def preset(name: str) -> Scenario:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ScenarioError(f"unknown preset {name!r}; available presets: {', '.join(PRESETS)}") from None


def _number(token: str) -> float:
    t = token.strip().lower()
    sign = -1.0 if t.startswith("-") else 1.0
    if t.lstrip("+-") == "pi":
        return sign * math.pi
    if t.lstrip("+-") in ("inf", "infinity"):
        return sign * math.inf
    return float(t)


def _vector(text: str) -> list[float]:
    return [_number(tok) for tok in text.split(",") if tok.strip()]


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    if len(rows) == 1:
        vals = _vector(rows[0])
        return np.array(vals[0]) if len(vals) == 1 else np.diag(vals)
    return np.array([_vector(r) for r in rows])


_SCENARIO_KEYS = {"preset", "name", "controller", "x0", "duration", "settle_eps"}
_MPC_KEYS = {
    "t", "n", "nprime", "upsampling", "q", "r", "qf", "u_lower", "u_upper", "x_lower", "x_upper",
    "xf_lower", "xf_upper", "normalization", "state_penalty", "fine_substeps", "gradient",
}
_SOLVER_FIELDS = {f.name: f.type for f in dataclasses.fields(SolverOptions)}
_PLANT_PARAMS = {"vdp": {"mu"}, "cartpole": {"g", "l", "m_c", "m_p"}, "zero": {"n", "m"}, "integrator": set()}


def _fail(section: str, key: str, exc: Exception):
    raise ScenarioError(f"[{section}] {key}: {exc}") from exc


def _box(lower, upper, dim, default: BoxSet | None) -> BoxSet | None:
    if lower is None and upper is None:
        return default
    lo = lower if lower is not None else [-math.inf] * dim
    hi = upper if upper is not None else [math.inf] * dim
    return BoxSet(lo, hi)


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ScenarioError(f"{source}: {exc}") from exc

    allowed = {"scenario": _SCENARIO_KEYS, "plant": None, "mpc": _MPC_KEYS, "solver": set(_SOLVER_FIELDS)}
    for section in parser.sections():
        if section not in allowed:
            raise ScenarioError(f"{source}: unknown section [{section}]; expected one of {sorted(allowed)}")
        keys = allowed[section]
        if keys is None:
            continue
        for key in parser[section]:
            if key not in keys:
                raise ScenarioError(f"{source}: unknown key {key!r} in [{section}]; allowed: {', '.join(sorted(keys))}")

    sc = parser["scenario"] if parser.has_section("scenario") else {}
    base = preset(sc["preset"].strip()) if "preset" in sc else None

    # plant
    pl = dict(parser["plant"]) if parser.has_section("plant") else {}
    plant_name = pl.pop("name", base.plant_name if base else None)
    if plant_name is None:
        raise ScenarioError(f"{source}: [plant] name is required when no preset is given")
    plant_name = plant_name.strip()
    if plant_name not in PLANTS:
        raise ScenarioError(f"{source}: [plant] name: unknown plant {plant_name!r}; available: {', '.join(sorted(PLANTS))}")
    params = dict(base.plant_params) if base and base.plant_name == plant_name else {}
    for key, val in pl.items():
        if key not in _PLANT_PARAMS[plant_name]:
            raise ScenarioError(
                f"{source}: unknown key {key!r} in [plant] for {plant_name}; allowed: name, {', '.join(sorted(_PLANT_PARAMS[plant_name]))}"
            )
        try:
            params[key] = int(val) if key in ("n", "m") else _number(val)
        except ValueError as exc:
            _fail("plant", key, exc)
    try:
        plant = make_plant(plant_name, **params)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}: [plant]: {exc}") from exc

    # solver
    solver = base.config.solver if base else SolverOptions()
    if parser.has_section("solver"):
        updates: dict[str, Any] = {}
        for key, val in parser["solver"].items():
            kind = _SOLVER_FIELDS[key]
            try:
                updates[key] = int(val) if kind in (int, "int") else _number(val)
            except ValueError as exc:
                _fail("solver", key, exc)
        try:
            solver = replace(solver, **updates)
        except ValueError as exc:
            raise ScenarioError(f"{source}: [solver]: {exc}") from exc

    # mpc
    mp = parser["mpc"] if parser.has_section("mpc") else {}
    cfg0 = base.config if base else None

    def get(key, conv, default):
        if key in mp:
            try:
                return conv(mp[key])
            except ValueError as exc:
                _fail("mpc", key, exc)
        if default is None and cfg0 is None:
            raise ScenarioError(f"{source}: [mpc] {key} is required when no preset is given")
        return default

    n, m = plant.n, plant.m
    W0 = cfg0.weights if cfg0 else None
    try:
        weights = QuadraticWeights(
            get("q", _matrix, W0.Q if W0 else None),
            get("r", _matrix, W0.R if W0 else None),
            get("qf", _matrix, W0.Qf if W0 else None),
        )
    except ValueError as exc:
        raise ScenarioError(f"{source}: [mpc] weights: {exc}") from exc

    def opt_box(prefix, dim, default):
        if f"{prefix}_lower" not in mp and f"{prefix}_upper" not in mp:
            return default
        lo = _vector(mp[f"{prefix}_lower"]) if f"{prefix}_lower" in mp else None
        hi = _vector(mp[f"{prefix}_upper"]) if f"{prefix}_upper" in mp else None
        lo = lo * dim if lo is not None and len(lo) == 1 else lo
        hi = hi * dim if hi is not None and len(hi) == 1 else hi
        try:
            return _box(lo, hi, dim, None)
        except ValueError as exc:
            raise ScenarioError(f"{source}: [mpc] {prefix}_lower/{prefix}_upper: {exc}") from exc

    if "u_lower" in mp or "u_upper" in mp or cfg0 is None:
        lo = _vector(mp["u_lower"]) if "u_lower" in mp else [-math.inf] * m
        hi = _vector(mp["u_upper"]) if "u_upper" in mp else [math.inf] * m
        try:
            input_box = BoxSet(lo * m if len(lo) == 1 else lo, hi * m if len(hi) == 1 else hi)
        except ValueError as exc:
            raise ScenarioError(f"{source}: [mpc] u_lower/u_upper: {exc}") from exc
    else:
        input_box = cfg0.input_box

    kwargs = dict(
        T=get("t", _number, cfg0.T if cfg0 else None),
        N=get("n", int, cfg0.N if cfg0 else None),
        weights=weights,
        input_box=input_box,
        nprime=get("nprime", int, cfg0.nprime if cfg0 else 10),
        M=get("upsampling", int, cfg0.M if cfg0 else 1),
        state_box=opt_box("x", n, cfg0.state_box if cfg0 else None),
        terminal_box=opt_box("xf", n, cfg0.terminal_box if cfg0 else None),
        normalization=get("normalization", str.strip, cfg0.normalization if cfg0 else "integral"),
        solver=solver,
        state_penalty=get("state_penalty", _number, cfg0.state_penalty if cfg0 else 0.0),
        fine_substeps=get("fine_substeps", int, cfg0.fine_substeps if cfg0 else 100),
        gradient=get("gradient", str.strip, cfg0.gradient if cfg0 else "fd"),
    )
    try:
        config = MpcConfig(**kwargs)
    except ConfigurationError as exc:
        raise ScenarioError(f"{source}: [mpc] {exc}") from exc

    def sget(key, conv, default):
        if key in sc:
            try:
                return conv(sc[key])
            except ValueError as exc:
                _fail("scenario", key, exc)
        if default is None:
            raise ScenarioError(f"{source}: [scenario] {key} is required when no preset is given")
        return default

    try:
        return Scenario(
            name=sget("name", str.strip, base.name if base else Path(source).stem),
            plant_name=plant_name,
            config=config,
            x0=tuple(sget("x0", _vector, list(base.x0) if base else None)),
            duration=sget("duration", _number, base.duration if base else None),
            controller=sget("controller", str.strip, base.controller if base else "lifted"),
            plant_params=params,
            settle_eps=sget("settle_eps", _number, base.settle_eps if base else 0.1),
        )
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text, str(path))
