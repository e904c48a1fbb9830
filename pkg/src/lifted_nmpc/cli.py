"""Command-line front end: ``lifted-nmpc run|compare|sweep``."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .lifting import ConfigurationError
from .mpc import CONTROLLERS, ClosedLoopError, Metrics, ScenarioResult, compute_metrics, run_controller
from .output import fmt, write_metrics, write_table_csv, write_trajectory_csv
from .scenario import PRESETS, Scenario, ScenarioError, load_scenario, preset
from .svg import Series, line_plot, stacked_plots

log = logging.getLogger("lifted_nmpc")

THREADS_ENV = "LIFTED_NMPC_THREADS"
SWEEP_LABELS = ("conventional", "lifted-single", "lifted-multi")


@dataclass
class RunOutcome:
    scenario: Scenario
    result: ScenarioResult
    metrics: Metrics
    wall_time: float


def execute(scenario: Scenario) -> RunOutcome:
    t0 = time.perf_counter()
    result = run_controller(scenario.controller, scenario.plant(), scenario.config, scenario.x0, scenario.duration)
    result.metadata["scenario"] = scenario.name
    metrics = compute_metrics(result, scenario.settle_eps)
    return RunOutcome(scenario, result, metrics, time.perf_counter() - t0)


def _stem(scenario: Scenario) -> str:
    return f"{scenario.name}_{scenario.controller}"


def _echo(outcome: RunOutcome) -> dict:
    echo = outcome.scenario.echo()
    echo["prediction_model"] = outcome.result.metadata.get("prediction_model")
    return echo


def _state_panels(outcomes: Sequence[RunOutcome], labels: Sequence[str]):
    n = outcomes[0].result.states.shape[1]
    m = outcomes[0].result.inputs.shape[1]
    panels = []
    for i in range(n):
        series = [Series(f"{lab} x{i + 1}", o.result.times, o.result.states[:, i], dashed=(k == 0 and len(outcomes) > 1))
                  for k, (o, lab) in enumerate(zip(outcomes, labels))]
        panels.append((series, f"state x{i + 1}", "t [s]", f"x{i + 1}"))
    series = [Series(lab, o.result.times, o.result.norms, dashed=(k == 0 and len(outcomes) > 1))
              for k, (o, lab) in enumerate(zip(outcomes, labels))]
    panels.append((series, "state norm", "t [s]", "|x(t)|"))
    for j in range(m):
        series = [Series(f"{lab} u{j + 1}", o.result.times, o.result.inputs[:, j], dashed=(k == 0 and len(outcomes) > 1))
                  for k, (o, lab) in enumerate(zip(outcomes, labels))]
        panels.append((series, f"input u{j + 1}", "t [s]", f"u{j + 1}"))
    return panels


def cmd_run(scenario: Scenario, out: Path, svg: bool = False) -> RunOutcome:
    out.mkdir(parents=True, exist_ok=True)
    outcome = execute(scenario)
    stem = _stem(scenario)
    echo = _echo(outcome)
    write_trajectory_csv(out / f"{stem}.csv", outcome.result, echo)
    write_metrics(out / f"{stem}_metrics.txt", outcome.metrics, echo)
    if svg:
        stacked_plots(out / f"{stem}.svg", _state_panels([outcome], [scenario.controller]))
    return outcome


def _check_comparable(a: Scenario, b: Scenario):
    problems = []
    if a.plant_name != b.plant_name or a.plant_params != b.plant_params:
        problems.append(f"plant {a.plant_name}{a.plant_params} vs {b.plant_name}{b.plant_params}")
    if tuple(a.x0) != tuple(b.x0):
        problems.append(f"x0 {list(a.x0)} vs {list(b.x0)}")
    if a.duration != b.duration:
        problems.append(f"duration {a.duration} vs {b.duration}")
    if problems:
        raise ScenarioError("scenarios are not comparable: " + "; ".join(problems))


METRIC_KEYS = ("settling_time", "peak_input", "max_state_norm", "final_norm", "input_violation", "state_violation")


def _delta(a, b):
    if a is None or b is None:
        return None
    return b - a


def comparison_rows(ma: Metrics, mb: Metrics) -> list[tuple]:
    da, db = ma.as_dict(), mb.as_dict()
    return [(k, da[k], db[k], _delta(da[k], db[k])) for k in METRIC_KEYS]


def faster_label(ma: Metrics, mb: Metrics, la: str, lb: str) -> str:
    ta, tb = ma.settling_time, mb.settling_time
    if ta is None and tb is None:
        return "neither settled"
    if tb is None or (ta is not None and ta < tb):
        return la
    if ta is None or tb < ta:
        return lb
    return "tie"


def cmd_compare(a: Scenario, b: Scenario, out: Path, svg: bool = False) -> tuple[RunOutcome, RunOutcome, str]:
    _check_comparable(a, b)
    out.mkdir(parents=True, exist_ok=True)
    oa, ob = execute(a), execute(b)
    la, lb = f"{a.name}:{a.controller}", f"{b.name}:{b.controller}"
    if la == lb:
        la, lb = la + ":A", lb + ":B"
    rows = comparison_rows(oa.metrics, ob.metrics)
    winner = faster_label(oa.metrics, ob.metrics, la, lb)
    echo = {"A": la, "B": lb, "settle_eps_A": a.settle_eps, "settle_eps_B": b.settle_eps, "smaller_settling_time": winner}
    echo.update({f"A.{k}": v for k, v in a.echo().items()})
    echo.update({f"B.{k}": v for k, v in b.echo().items()})
    write_table_csv(out / "compare_deltas.csv", ["metric", "A", "B", "delta"], rows, echo)
    write_trajectory_csv(out / f"compare_A_{_stem(a)}.csv", oa.result, _echo(oa))
    write_trajectory_csv(out / f"compare_B_{_stem(b)}.csv", ob.result, _echo(ob))
    if svg:
        stacked_plots(out / "compare.svg", _state_panels([oa, ob], [la, lb]))
    return oa, ob, winner


def format_comparison(oa: RunOutcome, ob: RunOutcome, winner: str) -> str:
    la, lb = f"{oa.scenario.name}:{oa.scenario.controller}", f"{ob.scenario.name}:{ob.scenario.controller}"
    width = max(len(la), len(lb), 12)
    lines = [f"{'metric':<16} {'A=' + la:>{width + 2}} {'B=' + lb:>{width + 2}} {'B-A':>12}"]
    for k, va, vb, d in comparison_rows(oa.metrics, ob.metrics):
        lines.append(f"{k:<16} {_short(va):>{width + 2}} {_short(vb):>{width + 2}} {_short(d):>12}")
    lines.append(f"smaller settling time: {winner}")
    return "\n".join(lines)


def _short(v) -> str:
    return "none" if v is None else f"{v:.6g}"


def sweep_scenarios(base: Scenario, periods: Sequence[float], control_period: float) -> list[tuple[float, str, Scenario]]:
    """Conventional, single-rate lifted and multi-rate lifted scenarios for each period."""
    if not control_period > 0:
        raise ScenarioError(f"control period must be positive, got {control_period}")
    out = []
    for T in periods:
        ratio = T / control_period
        M = int(round(ratio))
        if M < 1 or abs(ratio - M) > 1e-9 * max(1.0, ratio):
            raise ScenarioError(f"sampling period {T} is not an integer multiple of the control period {control_period}")
        nprime = base.config.nprime
        while nprime % 2 or nprime % M:
            nprime += 1
        fine = base.config.fine_substeps
        if fine % M:
            fine = M * math.ceil(fine / M)
        tag = f"{base.name}_T{T:g}"
        for label, controller, m in (("conventional", "conventional", 1), ("lifted-single", "lifted", 1), ("lifted-multi", "lifted", M)):
            try:
                cfg = replace(base.config, T=float(T), M=m, nprime=nprime, fine_substeps=fine)
            except ConfigurationError as exc:
                raise ScenarioError(f"T={T}: {exc}") from exc
            out.append((float(T), label, replace(base, name=f"{tag}_{label}", config=cfg, controller=controller)))
    return out


def sweep_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ScenarioError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _execute_or_error(scenario: Scenario):
    try:
        return execute(scenario)
    except ClosedLoopError as exc:
        return exc


def cmd_sweep(base: Scenario, periods: Sequence[float], control_period: float, out: Path, svg: bool = False,
              threads: Optional[int] = None):
    """Run the sweep; returns ``{T: {label: RunOutcome | ClosedLoopError}}``."""
    jobs = sweep_scenarios(base, periods, control_period)
    out.mkdir(parents=True, exist_ok=True)
    threads = sweep_threads() if threads is None else threads
    scenarios = [s for _, _, s in jobs]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_execute_or_error, scenarios))
    else:
        results = []
        for s in scenarios:
            log.info("sweep: running %s", s.name)
            results.append(_execute_or_error(s))

    table: dict[float, dict] = {}
    for (T, label, _), res in zip(jobs, results):
        table.setdefault(T, {})[label] = res

    summary_rows = []
    for T, runs in table.items():
        ok = {k: v for k, v in runs.items() if isinstance(v, RunOutcome)}
        if ok:
            times = next(iter(ok.values())).result.times
            names = ["t"] + [f"norm_{k.replace('-', '_')}" for k in ok]
            cols = [times] + [v.result.norms for v in ok.values()]
            echo = {"sweep_period": T, "control_period": control_period, "labels": list(ok)}
            echo.update({f"{k}.upsampling": v.scenario.config.M for k, v in ok.items()})
            echo.update({f"base.{k}": v for k, v in base.echo().items()})
            write_table_csv(out / f"sweep_T{T:g}.csv", names, np.column_stack(cols), echo)
            for v in ok.values():
                write_trajectory_csv(out / f"{v.scenario.name}.csv", v.result, _echo(v))
            if svg:
                line_plot(
                    out / f"sweep_T{T:g}.svg",
                    [Series(k, v.result.times, v.result.norms, dashed=(k == "conventional")) for k, v in ok.items()],
                    title=f"state norm, T={T:g}",
                    ylabel="|x(t)|",
                )
        for label in SWEEP_LABELS:
            res = runs.get(label)
            if isinstance(res, RunOutcome):
                m = res.metrics
                summary_rows.append((T, label, res.scenario.config.M, "settled" if m.settling_time is not None else "not settled",
                                     m.settling_time, m.final_norm, m.peak_input))
            elif res is not None:
                summary_rows.append((T, label, None, f"error at step {res.step}", None, None, None))
    write_table_csv(
        out / "sweep_summary.csv",
        ["T", "controller", "upsampling", "status", "settling_time", "final_norm", "peak_input"],
        summary_rows,
        {"settle_eps": base.settle_eps, "control_period": control_period, "periods": list(periods)},
    )
    return table


def format_sweep(table) -> str:
    lines = [f"{'T':>6}  " + "  ".join(f"{lab:>26}" for lab in SWEEP_LABELS)]
    for T, runs in table.items():
        cells = []
        for lab in SWEEP_LABELS:
            res = runs.get(lab)
            if isinstance(res, RunOutcome):
                st = res.metrics.settling_time
                status = f"settled {st:.2f}s" if st is not None else "not settled"
                cells.append(f"{status} (|x|end={res.metrics.final_norm:.3g})")
            elif res is not None:
                cells.append(f"error at step {res.step}")
            else:
                cells.append("-")
        lines.append(f"{T:>6g}  " + "  ".join(f"{c:>26}" for c in cells))
    return "\n".join(lines)


def _apply_overrides(s: Scenario, args) -> Scenario:
    cfg = s.config
    if getattr(args, "fine_substeps", None) is not None:
        try:
            cfg = replace(cfg, fine_substeps=args.fine_substeps)
        except ConfigurationError as exc:
            raise ScenarioError(str(exc)) from exc
    s = replace(s, config=cfg)
    if getattr(args, "duration", None) is not None:
        s = replace(s, duration=args.duration)
    if getattr(args, "settle_eps", None) is not None:
        s = replace(s, settle_eps=args.settle_eps)
    return s


def _select(args, allow_many: bool = False) -> list[Scenario]:
    if args.preset and args.scenario:
        raise ScenarioError("give either --preset or --scenario, not both")
    if args.preset:
        scenarios = [preset(args.preset)]
    elif args.scenario:
        if len(args.scenario) > (2 if allow_many else 1):
            raise ScenarioError("too many --scenario files")
        scenarios = [load_scenario(p) for p in args.scenario]
    else:
        raise ScenarioError(f"one of --preset or --scenario is required; presets: {', '.join(PRESETS)}")
    return [_apply_overrides(s, args) for s in scenarios]


def _periods(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of periods, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("periods must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lifted-nmpc", description="Sampled-data NMPC with lifted intersample costs.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, many=False):
        p.add_argument("--preset", help=f"one of: {', '.join(PRESETS)}")
        p.add_argument("--scenario", action="append", metavar="FILE",
                       help="scenario file" + (" (give twice to compare two files)" if many else ""))
        p.add_argument("--controller", choices=CONTROLLERS)
        p.add_argument("--out", type=Path, default=Path("out"), metavar="DIR")
        p.add_argument("--svg", action="store_true", help="also write SVG plots")
        p.add_argument("--fine-substeps", type=int, metavar="K", help="truth-simulator RK4 steps per period")
        p.add_argument("--duration", type=float, help="override the run length in seconds")
        p.add_argument("--settle-eps", type=float, help="override the settling threshold")

    common(sub.add_parser("run", help="run one closed loop"))
    common(sub.add_parser("compare", help="conventional vs lifted, or two scenario files"), many=True)
    sw = sub.add_parser("sweep", help="sampling-period sweep with multi-rate hold")
    common(sw)
    sw.add_argument("--periods", type=_periods, default=[0.1, 0.25, 0.5], metavar="T1,T2,...")
    sw.add_argument("--control-period", type=float, default=0.05)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            (s,) = _select(args)
            if args.controller:
                s = s.with_controller(args.controller)
            o = cmd_run(s, args.out, args.svg)
            print(f"{s.name} [{s.controller}] finished in {o.wall_time:.1f}s; outputs in {args.out}")
            for k, v in o.metrics.as_dict().items():
                print(f"{k}={fmt(v)}")
        elif args.command == "compare":
            scenarios = _select(args, allow_many=True)
            if len(scenarios) == 1:
                base = scenarios[0]
                a, b = base.with_controller("conventional"), base.with_controller("lifted")
            else:
                a, b = scenarios
                if args.controller:
                    a, b = a.with_controller(args.controller), b.with_controller(args.controller)
            oa, ob, winner = cmd_compare(a, b, args.out, args.svg)
            print(format_comparison(oa, ob, winner))
        else:
            (base,) = _select(args)
            table = cmd_sweep(base, args.periods, args.control_period, args.out, args.svg)
            print(format_sweep(table))
            errors = [r for runs in table.values() for r in runs.values() if isinstance(r, ClosedLoopError)]
            if errors:
                for e in errors:
                    print(f"error: {e}", file=sys.stderr)
                return 1
    except (ScenarioError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ClosedLoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
