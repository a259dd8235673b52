"""Writing and reading experiment reports on disk."""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

from ..simcore import cdf_csv
from .config import ExperimentConfig
from .experiments import Report

SUMMARY = "summary.json"
TRACE = "trace.jsonl"
CDF = "cdf.csv"


class ReportError(OSError):
    kind = "io"


def _write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def summary_json(report: Report) -> str:
    return json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"


def emit_report(report: Report, out_dir: str | Path) -> dict[str, Path]:
    """Write summary.json, trace.jsonl and cdf.csv; returns their paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = {"summary": out / SUMMARY, "trace": out / TRACE, "cdf": out / CDF}
        _write(paths["summary"], summary_json(report))
        _write(paths["trace"], report.trace.to_jsonl())
        _write(paths["cdf"], cdf_csv(report.metrics.cdf))
    except OSError as exc:
        raise ReportError(f"cannot write report to {out}: {exc.strerror or exc}") from None
    return paths


def load_summary(path: str | Path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / SUMMARY
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ReportError(f"cannot read {p}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ReportError(f"{p}: not a report summary (line {exc.lineno}: {exc.msg})") from None


def format_summary(summary: dict) -> str:
    m = summary["metrics"]
    lines = [
        f"experiment  {summary['name']} (seed {summary['seed']})",
        f"jobs        {m['n_jobs']}",
        f"median      {m['median_runtime']:.1f} s",
        f"mean        {m['mean_runtime']:.1f} s",
        f"makespan    {m['makespan']:.1f} s ({m['makespan'] / 3600:.2f} h)",
        f"steady gap  {m['steady_state_intercompletion']:.1f} s",
        f"preempted   {m['preemption_count']} (wasted work {m['wasted_work']:.1f})",
    ]
    ov = summary.get("overlay") or {}
    if ov:
        lines.append(f"overlay     {ov['nodes']} nodes, delivery {ov['delivery_rate']:.3f}, "
                     f"mean hops {ov['mean_hops']:.2f}")
    sec = summary.get("security") or {}
    if sec:
        lines.append(f"confinement {sec['rejected']}/{sec['injected']} injected frames rejected")
    for key, value in sorted((summary.get("extras") or {}).items()):
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        lines.append(f"{key:<11} {shown}" if len(key) <= 11 else f"{key} {shown}")
    return "\n".join(lines)


Runner = Callable[[int, ExperimentConfig], Report]


def _run_one(args):
    runner, seed, cfg = args
    return runner(seed, cfg)


def sweep(runner: Runner, cfg: ExperimentConfig, seeds: Sequence[int], out_dir: str | Path,
          workers: int = 1) -> list[Report]:
    """Run independent seeds (optionally in parallel); outputs land in out_dir/seed-N in seed order."""
    seeds = sorted(set(seeds))
    jobs = [(runner, s, cfg) for s in seeds]
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    out = Path(out_dir)
    for r in reports:
        emit_report(r, out / f"seed-{r.seed}")
    rows = [{"seed": r.seed, **r.metrics.to_dict(), **r.extras} for r in reports]
    try:
        _write(out / "sweep.json", json.dumps(rows, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ReportError(f"cannot write sweep summary: {exc.strerror or exc}") from None
    return reports
