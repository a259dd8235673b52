"""Multi-pool resource management: negotiation, flocking and local-over-remote preemption.

Each pool negotiates its own queue on a fixed interval.  A cycle runs in two
phases: the *local* phase offers queued jobs their own pool's idle members
(preempting flocked guests when none are idle) and the *flock* phase offers
what is still queued to the idle members of the pool's flock targets.  When
several pools tick at the same instant the simulator runs every pool's
local phase before any flock phase, so a pool's own users always see its
idle machines first.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .jobs import Assignment, InvariantViolation, Job, JobState, Origin
from .matchmaker import Ad, rank_score, symmetric_match
from .overlay import NodeDescriptor

DEFAULT_NEGOTIATION_INTERVAL = 60.0
PHASES = ("local", "flock")


@dataclass
class Pool:
    pool_id: str
    members: list[int] = field(default_factory=list)
    queue: list[int] = field(default_factory=list)
    flock_targets: list[str] = field(default_factory=list)
    negotiation_interval: float = DEFAULT_NEGOTIATION_INTERVAL
    claim_reuse: bool = True

    def __post_init__(self):
        if not self.negotiation_interval > 0:
            raise ValueError(f"pool {self.pool_id}: negotiation_interval must be positive")
        self.members = sorted(self.members)


@dataclass(frozen=True)
class PreemptionEvent:
    victim_job_id: int
    node_id: int
    time: float
    preemptor_job_id: int
    reason: str = "local-priority"


class GridState:
    """Pools, nodes, jobs and the node -> running assignment map."""

    def __init__(self, pools: Iterable[Pool], nodes: Iterable[tuple[NodeDescriptor, Ad]]):
        self.pools: dict[str, Pool] = {}
        for p in pools:
            if p.pool_id in self.pools:
                raise ValueError(f"duplicate pool {p.pool_id}")
            self.pools[p.pool_id] = p
        self.nodes: dict[int, NodeDescriptor] = {}
        self.node_ads: dict[int, Ad] = {}
        self.node_pool: dict[int, str] = {}
        for desc, ad in nodes:
            self.add_node(desc, ad)
        self.jobs: dict[int, Job] = {}
        self.running: dict[int, Assignment] = {}

    def add_node(self, desc: NodeDescriptor, ad: Ad) -> None:
        if desc.id in self.nodes:
            raise InvariantViolation(f"node {desc.id:x} already belongs to a pool")
        pool = self.pools.get(desc.pool)
        if pool is None:
            raise ValueError(f"node {desc.id:x} names unknown pool {desc.pool!r}")
        self.nodes[desc.id] = desc
        self.node_ads[desc.id] = ad
        self.node_pool[desc.id] = desc.pool
        bisect.insort(pool.members, desc.id)

    def remove_node(self, node_id: int) -> None:
        pool = self.pools[self.node_pool.pop(node_id)]
        pool.members.remove(node_id)
        del self.nodes[node_id]
        del self.node_ads[node_id]

    def is_idle(self, node_id: int) -> bool:
        return node_id in self.nodes and node_id not in self.running

    def idle_members(self, pool_id: str) -> list[int]:
        return [n for n in self.pools[pool_id].members if n not in self.running]

    def enqueue(self, job: Job) -> None:
        if job.state is not JobState.QUEUED:
            raise InvariantViolation(f"job {job.job_id} enqueued while {job.state.value}")
        self.jobs[job.job_id] = job
        queue = self.pools[job.origin_pool].queue
        keys = [(self.jobs[j].submit_time, j) for j in queue]
        queue.insert(bisect.bisect(keys, (job.submit_time, job.job_id)), job.job_id)

    def origin_of(self, job: Job, node_id: int) -> Origin:
        return Origin.LOCAL if self.node_pool[node_id] == job.origin_pool else Origin.FLOCKED

    def assign(self, job: Job, node_id: int, now: float) -> Assignment:
        if node_id in self.running:
            raise InvariantViolation(f"node {node_id:x} already runs job {self.running[node_id].job_id}")
        assignment = Assignment(job.job_id, node_id, now, self.origin_of(job, node_id))
        job.start(assignment)
        self.pools[job.origin_pool].queue.remove(job.job_id)
        self.running[node_id] = assignment
        return assignment

    def release(self, node_id: int) -> Assignment:
        return self.running.pop(node_id)

    def counts(self) -> dict[JobState, int]:
        out = {s: 0 for s in JobState}
        for job in self.jobs.values():
            out[job.state] += 1
        return out


def _ranked(job: Job, state: GridState, node_ids: Iterable[int]) -> list[int]:
    scored = []
    for n in node_ids:
        ad = state.node_ads[n]
        if symmetric_match(job.ad, ad):
            scored.append((-rank_score(job.ad, ad), n))
    scored.sort()
    return [n for _, n in scored]


def flock_tiers(pool: Pool, state: GridState) -> list[str]:
    tiers = [pool.pool_id]
    for target in pool.flock_targets:
        if target in state.pools and target not in tiers:
            tiers.append(target)
    return tiers


def flock_candidates(pool: Pool, job: Job, state: GridState) -> list[int]:
    """Idle matching nodes: the pool's own first, then each flock target in order.

    Within one pool candidates are ordered by the job's rank (highest first)
    and then by node id.
    """
    out: list[int] = []
    for pool_id in flock_tiers(pool, state):
        out.extend(_ranked(job, state, state.idle_members(pool_id)))
    return out


def requeue_preempted(job: Job, now: float) -> Job:
    """Kill-and-restart: the job loses all progress and goes back to its origin queue."""
    current = job.current
    if current is None:
        raise InvariantViolation(f"job {job.job_id} is not running")
    if current.origin is not Origin.FLOCKED:
        raise InvariantViolation(f"job {job.job_id} runs locally and cannot be preempted")
    job.transition(JobState.QUEUED)
    job.remaining_work = job.work
    job.preemptions += 1
    return job


def negotiate_cycle(
    pool: Pool,
    state: GridState,
    now: float,
    phases: Iterable[str] = PHASES,
    skip: Optional[set[int]] = None,
) -> tuple[list[Assignment], list[PreemptionEvent]]:
    """Match the pool's queued jobs; returns new assignments and preemptions.

    ``skip`` holds jobs that must sit this cycle out (jobs preempted earlier
    in the same tick); preempted victims are added to it.
    """
    skip = set() if skip is None else skip
    assignments: list[Assignment] = []
    preemptions: list[PreemptionEvent] = []
    phases = tuple(phases)
    unknown = set(phases) - set(PHASES)
    if unknown:
        raise ValueError(f"unknown negotiation phase(s) {sorted(unknown)}")

    if "local" in phases:
        for job_id in list(pool.queue):
            idle = state.idle_members(pool.pool_id)
            if not idle and not any(state.running[n].origin is Origin.FLOCKED
                                    for n in pool.members if n in state.running):
                break
            job = state.jobs[job_id]
            if job_id in skip or job.submit_time > now:
                continue
            ranked = _ranked(job, state, idle) if idle else []
            if ranked:
                assignments.append(state.assign(job, ranked[0], now))
                continue
            guests = [n for n in pool.members
                      if n in state.running and state.running[n].origin is Origin.FLOCKED
                      and symmetric_match(job.ad, state.node_ads[n])]
            if not guests:
                continue
            node = max(guests, key=lambda n: (state.running[n].start_time, state.running[n].job_id))
            victim = state.jobs[state.release(node).job_id]
            requeue_preempted(victim, now)
            state.enqueue(victim)
            skip.add(victim.job_id)
            preemptions.append(PreemptionEvent(victim.job_id, node, now, job_id))
            assignments.append(state.assign(job, node, now))

    if "flock" in phases:
        targets = flock_tiers(pool, state)
        for job_id in list(pool.queue):
            job = state.jobs[job_id]
            if job_id in skip or job.submit_time > now:
                continue
            if not any(state.idle_members(t) for t in targets):
                break
            cands = flock_candidates(pool, job, state)
            if cands:
                assignments.append(state.assign(job, cands[0], now))
    return assignments, preemptions


def reuse_claim(state: GridState, node_id: int, finished: Job, now: float) -> Optional[Assignment]:
    """Start the finished job's pool's next matching job on the freed node.

    A guest (flocked) claim is given up when the node's own pool has a
    queued job that could use the node.
    """
    origin = state.pools[finished.origin_pool]
    if not origin.claim_reuse or not state.is_idle(node_id):
        return None
    ad = state.node_ads[node_id]
    owner = state.node_pool[node_id]
    if owner != origin.pool_id:
        for jid in state.pools[owner].queue:
            j = state.jobs[jid]
            if j.submit_time <= now and symmetric_match(j.ad, ad):
                return None
    for jid in origin.queue:
        j = state.jobs[jid]
        if j.submit_time <= now and symmetric_match(j.ad, ad):
            return state.assign(j, node_id, now)
    return None
