"""CSV and key=value writers.

Every file starts with ``#`` lines echoing the resolved configuration.
Floats are written with 17 significant digits so that reading a file back
reproduces the in-memory arrays bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .mpc import Metrics, ScenarioResult

__all__ = [
    "header_lines",
    "trajectory_columns",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_table_csv",
    "write_metrics",
    "read_metrics",
    "fmt",
]


def fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def header_lines(echo: Mapping) -> list[str]:
    return [f"# {k} = {json.dumps(v)}" for k, v in echo.items()]


def trajectory_columns(result: ScenarioResult) -> tuple[list[str], np.ndarray]:
    n = result.states.shape[1]
    m = result.inputs.shape[1]
    names = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
    names += ["period_index", "solve_cost", "solve_iters", "solve_converged"]
    idx = result.period_index
    cost = np.array([r.cost for r in result.records])[idx]
    iters = np.array([r.iterations for r in result.records])[idx]
    conv = np.array([r.converged for r in result.records], dtype=float)[idx]
    data = np.column_stack([result.times, result.states, result.inputs, idx, cost, iters, conv])
    return names, data


def _write_rows(fh, names: Sequence[str], rows: Iterable[Sequence]):
    fh.write(",".join(names) + "\n")
    for row in rows:
        fh.write(",".join(fmt(v) for v in row) + "\n")


def write_trajectory_csv(path, result: ScenarioResult, echo: Mapping) -> Path:
    path = Path(path)
    names, data = trajectory_columns(result)
    int_cols = {names.index(c) for c in ("period_index", "solve_iters", "solve_converged")}
    with path.open("w") as fh:
        fh.write("\n".join(header_lines(echo)) + "\n")
        rows = ([int(v) if j in int_cols else float(v) for j, v in enumerate(row)] for row in data)
        _write_rows(fh, names, rows)
    return path


def _read_header_and_table(path):
    header, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                header[key.strip()] = json.loads(val.strip())
            elif line.strip():
                lines.append(line.rstrip("\n"))
    return header, lines


def read_trajectory_csv(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Return the header echo and a column-name to array mapping."""
    header, lines = _read_header_and_table(path)
    names = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return header, {name: data[:, j] for j, name in enumerate(names)}


def write_table_csv(path, names: Sequence[str], rows: Iterable[Sequence], echo: Mapping | None = None) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        if echo:
            fh.write("\n".join(header_lines(echo)) + "\n")
        _write_rows(fh, names, rows)
    return path


def write_metrics(path, metrics: Metrics, echo: Mapping, extra: Mapping | None = None) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("\n".join(header_lines(echo)) + "\n")
        for k, v in metrics.as_dict().items():
            fh.write(f"{k}={fmt(v)}\n")
        for k, v in (extra or {}).items():
            fh.write(f"{k}={fmt(v)}\n")
    return path


def read_metrics(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, _, v = line.partition("=")
            out[k] = v
    return out
