"""Discrete-event simulation of jobs flowing through pools of virtual workstations."""

from .engine import (
    EventKind,
    EventQueue,
    SimEvent,
    Simulation,
    SimulationStuck,
    Trace,
    allocate_nodes,
    node_ad,
    run_simulation,
)
from .metrics import CDF_HEADER, Metrics, cdf_csv, collect_metrics, completion_cdf, read_cdf_csv, steady_gap
from .model import (
    OVERHEAD_MULTIPLIERS,
    BackgroundLoad,
    Departure,
    ExperimentProfile,
    InvalidConfig,
    OverheadModel,
    PoolConfig,
    SiteSpec,
    job_runtime,
)

__all__ = [
    "BackgroundLoad", "CDF_HEADER", "Departure", "EventKind", "EventQueue", "ExperimentProfile",
    "InvalidConfig", "Metrics", "OVERHEAD_MULTIPLIERS", "OverheadModel", "PoolConfig", "SimEvent",
    "Simulation", "SimulationStuck", "SiteSpec", "Trace", "allocate_nodes", "cdf_csv", "collect_metrics",
    "completion_cdf", "job_runtime", "node_ad", "read_cdf_csv", "run_simulation", "steady_gap",
]
