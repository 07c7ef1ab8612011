"""Command-line entry point: ``oodforecast <verb> --config run.toml [...]``.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import harness, report
from .dataio import SynthConfig, synth_generate, write_synth_csvs

VERBS = ("validate", "run", "sweep", "hpo", "replicate", "report", "synth")


@dataclass(frozen=True)
class Command:
    verb: str
    config: Path | None = None
    out: Path | None = None
    overrides: tuple[str, ...] = ()
    workers: int = 1
    format: str = "csv"
    inputs: tuple[Path, ...] = field(default_factory=tuple)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oodforecast", description="Streaming energy-forecast experiments.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    for verb in VERBS:
        s = sub.add_parser(verb)
        if verb == "report":
            s.add_argument("--input", dest="inputs", type=Path, action="append", required=True, help="results CSV (repeatable)")
        else:
            s.add_argument("--config", type=Path, required=True)
            s.add_argument("--override", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        if verb in ("sweep", "replicate", "hpo"):
            s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", type=Path, required=verb == "synth")
        if verb in ("run", "sweep", "replicate", "report"):
            s.add_argument("--format", choices=("csv", "markdown"), default="csv")
    return p


def parse_args(argv: Sequence[str]) -> Command:
    ns = build_parser().parse_args(list(argv))
    overrides = tuple(getattr(ns, "overrides", ()) or ())
    for item in overrides:
        if "=" not in item:
            build_parser().error(f"--override expects KEY=VALUE, got {item!r}")
    workers = getattr(ns, "workers", 1)
    if workers < 1:
        build_parser().error("--workers must be >= 1")
    return Command(
        verb=ns.verb,
        config=getattr(ns, "config", None),
        out=ns.out,
        overrides=overrides,
        workers=workers,
        format=getattr(ns, "format", "csv"),
        inputs=tuple(getattr(ns, "inputs", ()) or ()),
    )


# ----------------------------------------------------------------- actions


def _progress(config: harness.RunConfig):
    tag = f"{config.dataset} {config.method} {config.features} seed={config.seed}"

    def report_progress(done: int, total: int) -> None:
        print(f"[{tag}] streamed {done}/{total} h", file=sys.stderr, flush=True)

    return report_progress


def _write_rows(rows: list[report.ResultRow], out: Path | None, fmt: str) -> None:
    """Append CSV rows to ``out`` (header only for a new file), or print the rendering."""
    text = report.emit(rows, fmt)
    if out is None:
        sys.stdout.write(text)
        return
    if fmt == "csv" and out.exists() and out.stat().st_size > 0:
        text = text.split("\n", 1)[1]
        mode = "a"
    else:
        mode = "a" if fmt == "csv" else "w"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, mode, encoding="utf-8", newline="") as fh:
        fh.write(text)


def _run_seeds(config: harness.RunConfig, frame, workers: int) -> list[harness.RunResult]:
    configs = [replace(config, seed=config.seed + i) for i in range(config.replicate_n)]
    if workers > 1:
        return harness.run_many(configs, frame, workers)
    return [harness.run(c, frame, progress=_progress(c)) for c in configs]


def _summary_line(rep: harness.ReplicateResult, config: harness.RunConfig) -> str:
    cells = ", ".join(f"{p.name} {p.mae_mean:.4f}±{p.mae_std:.4f}" for p in rep.periods)
    return f"{config.dataset} {config.method} {config.features} (n={len(rep.runs)}): {cells}"


def _validate(cmd: Command, config: harness.RunConfig) -> int:
    frame = harness.load_frame(config.data)
    sp = harness.split(frame)
    sched = harness.resolve_schedule(config, frame, sp)
    harness.feature_spec(frame, config.features)
    print(
        f"ok: {config.dataset} {len(frame)} h, stream {sp.stream_hours} h, "
        f"periods {', '.join(sched.names)}"
    )
    return 0


def _run(cmd: Command, config: harness.RunConfig) -> int:
    frame = harness.load_frame(config.data)
    config, _ = harness.tune(config, frame)
    result = harness.run(config, frame, progress=_progress(config))
    _write_rows(report.rows_from_run(result), cmd.out, cmd.format)
    print(f"{config.dataset} {config.method}: {result.runtime:.1f} s", file=sys.stderr)
    return 0


def _replicate(cmd: Command, config: harness.RunConfig) -> int:
    frame = harness.load_frame(config.data)
    config, _ = harness.tune(config, frame)
    runs = _run_seeds(config, frame, cmd.workers)
    rows = [row for r in runs for row in report.rows_from_run(r)]
    _write_rows(rows, cmd.out, cmd.format)
    print(_summary_line(harness.summarize(runs), config), file=sys.stderr)
    return 0


def _sweep(cmd: Command, config: harness.RunConfig, raw: dict) -> int:
    spec = raw.get("sweep", {})
    methods = list(spec.get("methods", harness.METHODS))
    features = list(spec.get("features", [config.features]))
    frame = harness.load_frame(config.data)
    configs = []
    for method in methods:
        for feats in features:
            univariate = method.startswith("copy_last") or method == "es"
            if univariate and feats != "E":
                continue
            c = replace(config, method=method, features=feats)
            c, _ = harness.tune(c, frame)
            configs.extend(replace(c, seed=c.seed + i) for i in range(c.replicate_n))
    results = harness.run_many(configs, frame, cmd.workers)
    rows = [row for r in results for row in report.rows_from_run(r)]
    _write_rows(rows, cmd.out, cmd.format)
    return 0


def _hpo(cmd: Command, config: harness.RunConfig) -> int:
    frame = harness.load_frame(config.data)
    budget = config.hpo_budget or 20
    tuned, result = harness.tune(config, frame, budget)
    if result is None:
        raise harness.SearchError(f"{config.method} has no search space")
    payload = {
        "dataset": config.dataset,
        "method": config.method,
        "features": config.features,
        "budget": budget,
        "best": result.best,
        "best_value": result.best_value,
        "trials": [{"params": p, "value": v} for p, v in result.trials],
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if cmd.out is None:
        sys.stdout.write(text)
    else:
        cmd.out.parent.mkdir(parents=True, exist_ok=True)
        cmd.out.write_text(text, encoding="utf-8")
    return 0


def _synth(cmd: Command, raw: dict) -> int:
    section = raw.get("data", {}).get("synth")
    if section is None:
        raise ValueError("synth needs a [data.synth] table in the config")
    frame = synth_generate(SynthConfig(**section))
    for path in write_synth_csvs(frame, cmd.out).values():
        print(path)
    return 0


def _report(cmd: Command) -> int:
    rows = []
    for path in cmd.inputs:
        rows.extend(report.parse_results_csv(Path(path).read_text(encoding="utf-8")))
    text = report.emit(rows, cmd.format)
    if cmd.out is None:
        sys.stdout.write(text)
    else:
        cmd.out.parent.mkdir(parents=True, exist_ok=True)
        cmd.out.write_text(text, encoding="utf-8")
    return 0


def execute(cmd: Command) -> int:
    try:
        if cmd.verb == "report":
            return _report(cmd)
        if cmd.verb == "synth":
            from ._toml import toml_loads

            raw = harness.apply_overrides(toml_loads(cmd.config.read_text(encoding="utf-8")), cmd.overrides)
            return _synth(cmd, raw)
        config, raw = harness.read_config(cmd.config, cmd.overrides)
        if cmd.verb == "validate":
            return _validate(cmd, config)
        if cmd.verb == "run":
            return _run(cmd, config)
        if cmd.verb == "replicate":
            return _replicate(cmd, config)
        if cmd.verb == "sweep":
            return _sweep(cmd, config, raw)
        return _hpo(cmd, config)
    except Exception as exc:  # single-line diagnostic, never a traceback
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"oodforecast {cmd.verb}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cmd = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    return execute(cmd)
