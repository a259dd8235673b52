"""Experiment profile, per-job runtime and virtualization overhead."""

from __future__ import annotations

from dataclasses import dataclass, field

# Fraction of extra wall time a CPU-bound simulator job pays inside each VM flavour.
OVERHEAD_MULTIPLIERS = {
    "none": 1.0,
    "vmware": 1.11,
    "xen": 1.01,
}


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class OverheadModel:
    flavor: str = "none"
    multiplier: float = 1.0

    def __post_init__(self):
        if not self.multiplier >= 1.0:
            raise InvalidConfig(f"overhead multiplier must be >= 1.0, got {self.multiplier}")

    @classmethod
    def named(cls, flavor: str) -> "OverheadModel":
        try:
            return cls(flavor, OVERHEAD_MULTIPLIERS[flavor])
        except KeyError:
            raise InvalidConfig(f"unknown overhead flavor {flavor!r}; "
                                f"expected one of {sorted(OVERHEAD_MULTIPLIERS)}") from None


def job_runtime(work: float, speed: float, overhead: OverheadModel | str = "none") -> float:
    """Wall-clock seconds to finish ``work`` units on a node of ``speed`` units/s."""
    if not speed > 0:
        raise InvalidConfig(f"node speed must be positive, got {speed}")
    if isinstance(overhead, str):
        overhead = OverheadModel.named(overhead)
    return work / speed * overhead.multiplier


@dataclass(frozen=True)
class SiteSpec:
    name: str
    nodes: int
    speed: float
    pool: str
    nat: str = "public"
    memory: int = 2048
    arch: str = "x86"


@dataclass(frozen=True)
class BackgroundLoad:
    """Synthetic long-running flocked jobs that keep a share of every pool busy."""

    occupancy: float = 0.0
    work: float = 0.0
    origin_pool: str = "background"
    owner: str = "community"


@dataclass(frozen=True)
class Departure:
    site: str
    index: int
    time: float


@dataclass(frozen=True)
class ExperimentProfile:
    n_jobs: int
    n_nodes: int
    sites: tuple[SiteSpec, ...]
    work: float
    overhead: str = "none"
    submit_link_delay: float = 0.0
    job_pool: str = "archer"
    job_owner: str = "user"
    requirements: str = "true"
    rank: str = "other.Speed"
    work_jitter: float = 0.0
    background: BackgroundLoad = field(default_factory=BackgroundLoad)
    departures: tuple[Departure, ...] = ()
    bits: int = 160

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def overhead_model(self) -> OverheadModel:
        return OverheadModel.named(self.overhead)

    def violations(self) -> list[str]:
        errs = []
        if self.n_jobs <= 0:
            errs.append("n_jobs must be positive")
        if not self.sites:
            errs.append("at least one site is required")
        total = sum(s.nodes for s in self.sites)
        if total != self.n_nodes:
            errs.append(f"n_nodes is {self.n_nodes} but sites provide {total}")
        for s in self.sites:
            if s.nodes <= 0:
                errs.append(f"site {s.name!r}: nodes must be positive")
            if not s.speed > 0:
                errs.append(f"site {s.name!r}: speed must be positive")
        if not self.work > 0:
            errs.append("work must be positive")
        if self.submit_link_delay < 0:
            errs.append("submit_link_delay must be non-negative")
        if not 0 <= self.work_jitter < 1:
            errs.append("work_jitter must lie in [0, 1)")
        if self.overhead not in OVERHEAD_MULTIPLIERS:
            errs.append(f"unknown overhead flavor {self.overhead!r}")
        if not 0 <= self.background.occupancy < 1:
            errs.append("background occupancy must lie in [0, 1)")
        if self.background.occupancy > 0 and not self.background.work > 0:
            errs.append("background work must be positive when occupancy is set")
        names = {s.name for s in self.sites}
        for d in self.departures:
            if d.site not in names:
                errs.append(f"departure names unknown site {d.site!r}")
        return errs


@dataclass(frozen=True)
class PoolConfig:
    pool_id: str
    flock_targets: tuple[str, ...] = ()
    negotiation_interval: float = 60.0
    claim_reuse: bool = True

