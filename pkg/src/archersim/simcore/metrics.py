"""Summary statistics over a finished trace."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, field

from .engine import EventKind, Trace

CDF_HEADER = ("time_seconds", "jobs_completed")


@dataclass
class Metrics:
    n_jobs: int
    median_runtime: float
    mean_runtime: float
    makespan: float
    steady_state_intercompletion: float
    preemption_count: int
    wasted_work: float
    processed_work: float
    cdf: list[tuple[float, int]] = field(repr=False)
    pool_usage: dict[str, float] = field(default_factory=dict)
    origin_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self, with_cdf: bool = False) -> dict:
        d = asdict(self)
        if not with_cdf:
            d.pop("cdf")
        else:
            d["cdf"] = [list(p) for p in self.cdf]
        return d


def steady_gap(completions: list[float]) -> float:
    """Mean gap between completions over the middle half of the run."""
    n = len(completions)
    if n < 2:
        return 0.0
    c = sorted(completions)
    lo = n // 4
    hi = max(math.ceil(3 * n / 4) - 1, lo + 1)
    hi = min(hi, n - 1)
    return (c[hi] - c[lo]) / (hi - lo)


def completion_cdf(completions: list[float], origin: float = 0.0) -> list[tuple[float, int]]:
    out: list[tuple[float, int]] = []
    for i, t in enumerate(sorted(completions), start=1):
        t = round(t - origin, 6)
        if out and out[-1][0] == t:
            out[-1] = (t, i)
        else:
            out.append((t, i))
    return out


def collect_metrics(trace: Trace) -> Metrics:
    jobs = trace.foreground()
    if not jobs:
        raise ValueError("trace holds no foreground jobs")
    first_submit = min(j.submit_time for j in jobs)
    # runtime of a job is its final, successful attempt
    runtimes = [j.completion_time - j.history[-1].start_time for j in jobs]
    completions = [j.completion_time for j in jobs]
    origins: dict[str, int] = {}
    for j in jobs:
        key = j.history[-1].origin.value
        origins[key] = origins.get(key, 0) + 1
    preemptions = sum(1 for ev in trace.events if ev.kind is EventKind.PREEMPT)
    return Metrics(
        n_jobs=len(jobs),
        median_runtime=statistics.median(runtimes),
        mean_runtime=statistics.fmean(runtimes),
        makespan=max(completions) - first_submit,
        steady_state_intercompletion=steady_gap(completions),
        preemption_count=preemptions,
        wasted_work=trace.wasted_work,
        processed_work=trace.processed_work,
        cdf=completion_cdf(completions, first_submit),
        pool_usage=dict(sorted(trace.usage.items())),
        origin_counts=dict(sorted(origins.items())),
    )


def cdf_csv(cdf: list[tuple[float, int]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CDF_HEADER)
    for t, n in cdf:
        w.writerow([repr(float(t)), n])
    return buf.getvalue()


def read_cdf_csv(text: str) -> list[tuple[float, int]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CDF_HEADER:
        raise ValueError(f"CDF header must be {','.join(CDF_HEADER)}")
    return [(float(t), int(n)) for t, n in rows[1:]]
