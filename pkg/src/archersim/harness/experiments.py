"""End-to-end experiment runs: simulation, overlay health and confinement checks."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Any, Optional

from ..overlay import build_overlay, frames
from ..overlay.analysis import all_pairs
from ..simcore import (
    ExperimentProfile,
    Metrics,
    PoolConfig,
    SiteSpec,
    Trace,
    collect_metrics,
    job_runtime,
    run_simulation,
)
from .config import ExperimentConfig, OverlayConfig, builtin_config, config_to_dict

DAY = 86400.0


@dataclass
class Report:
    name: str
    seed: int
    metrics: Metrics
    trace: Trace = field(repr=False)
    overlay: dict[str, float]
    security: dict[str, int]
    config: dict = field(repr=False)
    extras: dict[str, Any] = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "metrics": self.metrics.to_dict(),
            "overlay": self.overlay,
            "security": self.security,
            "extras": self.extras,
            "config": self.config,
        }


def overlay_stats(cfg: OverlayConfig, seed: int) -> dict[str, float]:
    """Join, stabilize, then measure all-pairs greedy delivery and hop counts."""
    ov = build_overlay(cfg.nodes, bits=cfg.bits, seed=seed ^ cfg.seed, nat_mix=dict(cfg.nat_mix))
    ov.stabilize()
    stats = all_pairs(ov)
    return {
        "nodes": cfg.nodes,
        "delivery_rate": stats.delivery_rate,
        "mean_hops": round(stats.mean_hops, 6),
        "max_hops": stats.max_hops,
    }


def confinement_stats(n_frames: int, seed: int, nodes: int = 8, bits: int = 160) -> dict[str, int]:
    """Inject frames from senders that hold no certificate; count what the overlay rejects."""
    ov = build_overlay(nodes, bits=bits, seed=seed)
    ov.stabilize()
    rng = random.Random(f"fuzz:{seed}")
    live = ov.live_ids()
    before = ov.rejected_frames()
    for i in range(n_frames):
        intruder = rng.getrandbits(bits)
        while intruder in ov.nodes:
            intruder = rng.getrandbits(bits)
        dst = live[rng.randrange(len(live))]
        body = rng.randbytes(rng.randrange(0, 64))
        kind = i % 3
        if kind == 0:
            data = frames.DataFrame(rng.getrandbits(32), intruder, dst, body, [intruder]).encode(ov.id_len)
        elif kind == 1:
            inner = frames.DataFrame(rng.getrandbits(32), intruder, dst, body, [intruder]).encode(ov.id_len)
            data = frames.RelayFrame(intruder, dst, inner).encode(ov.id_len)
        else:
            data = body
        ov.inject(intruder, dst, data)
    rejected = ov.rejected_frames() - before
    delivered = sum(len(ov.nodes[n].inbox) for n in live)
    return {"injected": n_frames, "rejected": rejected, "delivered": delivered}


def serial_baseline(cfg: ExperimentConfig, seed: int = 0) -> float:
    """Makespan of the whole job set run back to back on a single node.

    The node's speed and overhead come from the experiment's ``extras``
    (``baseline_speed``, ``baseline_overhead``) and default to speed 1.0
    with the experiment's own overhead.
    """
    p = cfg.profile
    speed = float(cfg.extra("baseline_speed", 1.0))
    overhead = cfg.extra("baseline_overhead", p.overhead)
    pool = cfg.profile.job_pool
    solo = ExperimentProfile(
        n_jobs=p.n_jobs, n_nodes=1, sites=(SiteSpec("solo", 1, speed, pool),), work=p.work,
        overhead=overhead, submit_link_delay=float(cfg.extra("baseline_submit_delay", p.submit_link_delay)),
        job_pool=pool, job_owner=p.job_owner, requirements=p.requirements, rank=p.rank,
        work_jitter=p.work_jitter, bits=p.bits,
    )
    trace = run_simulation(solo, [PoolConfig(pool)], seed)
    return collect_metrics(trace).makespan


def capacity_threshold(n_jobs: int, runtime: float, deadline: float = DAY) -> int:
    """Fewest free slots that finish ``n_jobs`` equal jobs within ``deadline``."""
    per_slot = math.floor(deadline / runtime)
    if per_slot < 1:
        raise ValueError(f"a single job ({runtime:g} s) already exceeds the deadline")
    return math.ceil(n_jobs / per_slot)


def run_experiment(cfg: ExperimentConfig, seed: int, with_side_stats: bool = True) -> Report:
    trace = run_simulation(cfg.profile, cfg.pools, seed)
    metrics = collect_metrics(trace)
    if with_side_stats:
        ov = overlay_stats(cfg.overlay, seed)
        sec = confinement_stats(cfg.overlay.fuzz_frames, seed)
    else:
        ov, sec = {}, {}
    return Report(cfg.name, seed, metrics, trace, ov, sec, config_to_dict(cfg))


def run_fig2(seed: int = 0, cfg: Optional[ExperimentConfig] = None) -> Report:
    cfg = cfg or builtin_config("fig2")
    report = run_experiment(cfg, seed)
    baseline = serial_baseline(cfg, seed)
    report.extras.update({
        "serial_baseline_seconds": baseline,
        "serial_baseline_days": baseline / DAY,
        "speedup": baseline / report.metrics.makespan,
    })
    return report


def run_scenario1(seed: int = 0, cfg: Optional[ExperimentConfig] = None) -> Report:
    cfg = cfg or builtin_config("scenario1")
    report = run_experiment(cfg, seed)
    p = cfg.profile
    baseline = serial_baseline(cfg, seed)
    # fastest site of the shipped profile sets the per-job runtime on the deployment
    speed = max(s.speed for s in p.sites)
    runtime = job_runtime(p.work, speed, p.overhead_model)
    bg = p.background
    free = sum(s.nodes - int(round(bg.occupancy * s.nodes)) for s in p.sites)
    report.extras.update({
        "serial_baseline_seconds": baseline,
        "serial_baseline_days": baseline / DAY,
        "serial_ratio": baseline / report.metrics.makespan,
        "makespan_hours": report.metrics.makespan / 3600.0,
        "job_runtime_seconds": runtime,
        "free_slots": free,
        "capacity_threshold_slots": capacity_threshold(p.n_jobs, runtime),
    })
    return report


def with_free_slots(cfg: ExperimentConfig, slots: int) -> ExperimentConfig:
    """Same deployment reduced to one idle pool of ``slots`` nodes at the fastest speed."""
    p = cfg.profile
    speed = max(s.speed for s in p.sites)
    pool = p.job_pool
    profile = replace(p, n_nodes=slots, sites=(SiteSpec("free", slots, speed, pool),),
                      background=replace(p.background, occupancy=0.0), departures=())
    pools = tuple(q for q in cfg.pools if q.pool_id == pool)
    pools = tuple(replace(q, flock_targets=()) for q in pools)
    return replace(cfg, profile=profile, pools=pools)


def run_any(seed: int, cfg: ExperimentConfig) -> Report:
    """Dispatch on the experiment name so built-in extras (baselines) are reported for edited copies too."""
    if cfg.name == "fig2":
        return run_fig2(seed, cfg)
    if cfg.name == "scenario1":
        return run_scenario1(seed, cfg)
    return run_experiment(cfg, seed)


__all__ = [
    "DAY", "Report", "capacity_threshold", "confinement_stats", "overlay_stats",
    "run_any", "run_experiment", "run_fig2", "run_scenario1", "serial_baseline", "with_free_slots",
]
