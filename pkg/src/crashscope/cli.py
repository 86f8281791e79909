"""Command-line entry point and the end-to-end pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence, Union

from .analyzer import classify_contextual_features
from .appmodel import AppModel, CrashSignature, ModelError, load_app_model
from .explorer import DEFAULT_BUDGET, ExplorationStrategy, all_strategies, explore
from .replay import generate_script, parse_script, replay
from .reporter import generate_report, prune_stack_trace, report_file_name
from .simdevice import DeviceInterface, SimDevice
from .trace import ExecutionTrace
from .tracestore import (
    TraceArchive,
    TraceCollisionError,
    append_trace,
    load_screens,
    load_trace,
    store_screens,
    trace_file_name,
)

log = logging.getLogger("crashscope")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    app_path: Path
    strategies: Union[str, tuple[str, ...]] = "all"
    seed: int = 1
    budget: int = DEFAULT_BUDGET
    parallel: int = 1
    out_dir: Path = Path("out")

    def expand(self) -> list[ExplorationStrategy]:
        if self.parallel < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.strategies == "all":
            return all_strategies(self.seed, self.budget)
        labels = list(dict.fromkeys(self.strategies))
        if not labels:
            raise ConfigError("no strategies selected")
        try:
            return [ExplorationStrategy.from_label(label, self.seed, self.budget) for label in labels]
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class RunSummary:
    strategies_run: list[str] = field(default_factory=list)
    traces: int = 0
    crashed_traces: int = 0
    distinct_crashes: int = 0
    trace_paths: list[str] = field(default_factory=list)
    report_paths: list[str] = field(default_factory=list)
    script_paths: list[str] = field(default_factory=list)
    failures: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(vars(self))


def crash_key(trace: ExecutionTrace) -> tuple[str, str, tuple[str, ...]]:
    sig = prune_stack_trace(trace.crash_signature, trace.meta.package)
    return sig.exception_class, sig.message, sig.stack


def dedupe_crashes(traces: Iterable[ExecutionTrace]) -> dict[tuple[str, str, tuple[str, ...]], list[ExecutionTrace]]:
    """Group crashed traces by exception class, message and pruned stack."""
    groups: dict[tuple[str, str, tuple[str, ...]], list[ExecutionTrace]] = {}
    for trace in traces:
        if trace.crashed:
            groups.setdefault(crash_key(trace), []).append(trace)
    return groups


DeviceFactory = Callable[[AppModel, ExplorationStrategy], DeviceInterface]


def _sim_factory(model: AppModel, strategy: ExplorationStrategy) -> DeviceInterface:
    return SimDevice(model)


def run_pipeline(config: RunConfig, device_factory: Optional[DeviceFactory] = None) -> RunSummary:
    """Analyze, explore every selected strategy, persist traces, emit reports and scripts.

    A strategy whose harness fails is recorded in ``failures``; the others
    still run to completion.
    """
    strategies = config.expand()
    model = load_app_model(config.app_path)
    features = classify_contextual_features(model)
    factory = device_factory or _sim_factory
    out = Path(config.out_dir)
    archive = TraceArchive(out / "traces")

    def work(strategy: ExplorationStrategy):
        screens: dict[str, str] = {}
        traces = explore(model, features, factory(model, strategy), strategy, screens)
        return traces, screens

    summary = RunSummary()
    with ThreadPoolExecutor(max_workers=config.parallel) as pool:
        futures = [(s, pool.submit(work, s)) for s in strategies]
        results = []
        for strategy, fut in futures:
            try:
                results.append((strategy, *fut.result()))
            except Exception as exc:  # isolate harness faults per strategy
                log.error("strategy %s failed: %s", strategy.label, exc)
                summary.failures[strategy.label] = f"{type(exc).__name__}: {exc}"

    # Fail before writing anything if a run id is already archived.
    for _, traces, _ in results:
        for trace in traces:
            if (archive.root / trace_file_name(trace.meta)).exists():
                raise TraceCollisionError(f"run already archived: {trace_file_name(trace.meta)}")

    crashed: list[ExecutionTrace] = []
    all_screens: dict[str, str] = {}
    for strategy, traces, screens in results:
        summary.strategies_run.append(strategy.label)
        all_screens.update(screens)
        for trace in traces:
            summary.trace_paths.append(str(append_trace(archive, trace)))
            summary.traces += 1
            if trace.crashed:
                crashed.append(trace)
    store_screens(archive, all_screens)

    reports, scripts = out / "reports", out / "scripts"
    for trace in crashed:
        reports.mkdir(parents=True, exist_ok=True)
        scripts.mkdir(parents=True, exist_ok=True)
        report_path = reports / report_file_name(trace)
        report_path.write_text(generate_report(trace, all_screens), encoding="utf-8")
        script_path = scripts / script_file_name(trace)
        script_path.write_text(generate_script(trace).serialize(), encoding="utf-8")
        summary.report_paths.append(str(report_path))
        summary.script_paths.append(str(script_path))

    summary.crashed_traces = len(crashed)
    summary.distinct_crashes = len(dedupe_crashes(crashed))
    (out / "summary.json").write_text(json.dumps(summary.to_dict(), indent=2) + "\n", encoding="utf-8")
    return summary


def script_file_name(trace: ExecutionTrace) -> str:
    return trace_file_name(trace.meta)[: -len(".trace")] + ".script"


# -- argument handling ----------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashscope", description="Crash discovery over simulated app models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="explore an app model with one or more strategies")
    run.add_argument("--app", required=True, type=Path)
    run.add_argument("--strategies", default="all", help='"all" or a comma-separated list of strategy labels')
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--out", type=Path, default=Path("out"))

    analyze = sub.add_parser("analyze", help="print activity- and app-level contextual features")
    analyze.add_argument("--app", required=True, type=Path)

    report = sub.add_parser("report", help="write an HTML crash report for a trace")
    report.add_argument("--trace", required=True, type=Path)
    report.add_argument("--out", type=Path, default=Path("."))

    script = sub.add_parser("script", help="write a replay script for a crashed trace")
    script.add_argument("--trace", required=True, type=Path)
    script.add_argument("--out", type=Path, default=Path("."))

    rep = sub.add_parser("replay", help="replay a script against a fresh simulated device")
    rep.add_argument("--script", required=True, type=Path)
    rep.add_argument("--app", required=True, type=Path)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (ModelError, ConfigError, TraceCollisionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        strategies = "all" if args.strategies == "all" else tuple(s.strip() for s in args.strategies.split(",") if s.strip())
        config = RunConfig(args.app, strategies, args.seed, args.budget, args.parallel, args.out)
        summary = run_pipeline(config)
        print(json.dumps(summary.to_dict(), indent=2))
        return 0 if not summary.failures else 1

    if args.command == "analyze":
        fmap = classify_contextual_features(load_app_model(args.app))
        print(json.dumps(fmap.to_dict(), indent=2))
        return 0

    if args.command in ("report", "script"):
        trace = load_trace(args.trace)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "report":
            archive = TraceArchive(args.trace.parent)
            screens = load_screens(archive, (s.screenshot for s in trace.steps))
            path = args.out / report_file_name(trace)
            path.write_text(generate_report(trace, screens), encoding="utf-8")
        else:
            path = args.out / script_file_name(trace)
            path.write_text(generate_script(trace).serialize(), encoding="utf-8")
        print(path)
        return 0

    model = load_app_model(args.app)
    outcome = replay(parse_script(args.script.read_text(encoding="utf-8")), SimDevice(model))
    result = {
        "reproduced": outcome.reproduced,
        "signature": None if outcome.signature is None else outcome.signature.to_dict(),
        "crash_line": outcome.crash_line,
        "noop_lines": list(outcome.noop_lines),
    }
    print(json.dumps(result, indent=2))
    return 0 if outcome.reproduced else 1
