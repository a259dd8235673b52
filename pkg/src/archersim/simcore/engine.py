"""Deterministic discrete-event execution of jobs on pooled virtual workstations."""

from __future__ import annotations

import enum
import heapq
import io
import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ..gridpool import GridState, Pool, negotiate_cycle, reuse_claim
from ..jobs import Job, JobState
from ..matchmaker import Ad, AdKind
from ..overlay import AddressPool, NodeDescriptor, id_hex
from .model import ExperimentProfile, InvalidConfig, PoolConfig, job_runtime

# event times are kept on a microsecond grid so runtimes that should coincide with a
# negotiation tick do not miss it by a rounding error
TIME_DIGITS = 6


class SimulationStuck(RuntimeError):
    def __init__(self, time: float, jobs: Sequence[int]):
        shown = ", ".join(str(j) for j in list(jobs)[:10])
        more = "" if len(jobs) <= 10 else f" (+{len(jobs) - 10} more)"
        super().__init__(f"stuck queue at t={time:g}: no node can ever run job(s) {shown}{more}")
        self.time = time
        self.jobs = list(jobs)


class EventKind(str, enum.Enum):
    SUBMIT = "Submit"
    NEGOTIATE = "NegotiateTick"
    JOB_START = "JobStart"
    JOB_COMPLETE = "JobComplete"
    PREEMPT = "Preempt"
    NODE_JOIN = "NodeJoin"
    NODE_LEAVE = "NodeLeave"


# same-instant order: departures, completions and submissions settle before pools negotiate
_PRIORITY = {
    EventKind.NODE_JOIN: 0,
    EventKind.NODE_LEAVE: 0,
    EventKind.JOB_COMPLETE: 1,
    EventKind.SUBMIT: 2,
    EventKind.PREEMPT: 3,
    EventKind.JOB_START: 3,
    EventKind.NEGOTIATE: 9,
}


@dataclass(frozen=True, order=True)
class SimEvent:
    time: float
    priority: int
    seq: int
    kind: EventKind = field(compare=False)
    job: Optional[int] = field(default=None, compare=False)
    node: Optional[int] = field(default=None, compare=False)
    pool: Optional[str] = field(default=None, compare=False)
    token: int = field(default=0, compare=False)


class EventQueue:
    """Min-heap on (time, kind priority, insertion sequence)."""

    def __init__(self):
        self._heap: list[SimEvent] = []
        self._seq = 0

    def push(self, time: float, kind: EventKind, job=None, node=None, pool=None, token=0) -> SimEvent:
        ev = SimEvent(round(float(time), TIME_DIGITS), _PRIORITY[kind], self._seq, kind, job, node, pool, token)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        return heapq.heappop(self._heap)

    def peek(self) -> Optional[SimEvent]:
        return self._heap[0] if self._heap else None

    def pending(self, *kinds: EventKind) -> bool:
        return any(e.kind in kinds for e in self._heap)

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class Trace:
    events: list[SimEvent]
    jobs: dict[int, Job]
    nodes: dict[int, NodeDescriptor]
    bits: int
    processed_work: float = 0.0
    wasted_work: float = 0.0
    usage: dict[str, float] = field(default_factory=dict)

    def foreground(self) -> list[Job]:
        return [self.jobs[j] for j in sorted(self.jobs) if not self.jobs[j].background]

    def records(self) -> list[dict]:
        out = []
        for ev in self.events:
            out.append({
                "t": ev.time,
                "kind": ev.kind.value,
                "job": ev.job,
                "node": None if ev.node is None else id_hex(ev.node, self.bits),
                "pool": ev.pool,
            })
        return out

    def to_jsonl(self) -> str:
        buf = io.StringIO()
        for rec in self.records():
            buf.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return buf.getvalue()


def node_ad(desc: NodeDescriptor, memory: int, arch: str) -> Ad:
    return Ad({
        "Memory": memory,
        "Arch": arch,
        "Speed": desc.speed,
        "Site": desc.site,
        "PoolId": desc.pool,
        "NodeId": desc.id,
    }, AdKind.RESOURCE)


def allocate_nodes(profile: ExperimentProfile, seed: int) -> list[NodeDescriptor]:
    """Seeded node identities for a profile, site by site."""
    rng = random.Random(f"nodes:{seed}")
    addresses = AddressPool.from_string()
    used: set[int] = set()
    out = []
    for site in profile.sites:
        for _ in range(site.nodes):
            nid = rng.getrandbits(profile.bits)
            while nid in used:
                nid = rng.getrandbits(profile.bits)
            used.add(nid)
            out.append(NodeDescriptor(nid, addresses.nth(len(out)), site.name, site.pool, site.speed, site.nat))
    return out


Observer = Callable[[SimEvent, GridState], None]


class Simulation:
    """One run of a profile over a set of pools.

    Foreground jobs are submitted one every ``submit_link_delay`` seconds
    starting at t=0; background jobs (if any) are all submitted at t=0
    ahead of them.  The run ends when the last foreground job completes.
    """

    def __init__(
        self,
        profile: ExperimentProfile,
        pools: Sequence[PoolConfig],
        seed: int = 0,
        nodes: Optional[Sequence[NodeDescriptor]] = None,
        observer: Optional[Observer] = None,
    ):
        errs = profile.violations()
        if not pools:
            errs.append("at least one pool is required")
        known = {p.pool_id for p in pools}
        for s in profile.sites:
            if s.pool not in known:
                errs.append(f"site {s.name!r} names unknown pool {s.pool!r}")
        if profile.job_pool not in known:
            errs.append(f"job pool {profile.job_pool!r} is not configured")
        if profile.background.occupancy > 0 and profile.background.origin_pool not in known:
            errs.append(f"background pool {profile.background.origin_pool!r} is not configured")
        if errs:
            raise InvalidConfig("; ".join(errs))
        self.profile = profile
        self.seed = seed
        self.overhead = profile.overhead_model
        self.rng = random.Random(f"jobs:{seed}")
        self.observer = observer
        self.nodes = list(nodes) if nodes is not None else allocate_nodes(profile, seed)
        if len(self.nodes) != profile.n_nodes:
            raise InvalidConfig(f"expected {profile.n_nodes} node descriptors, got {len(self.nodes)}")
        site_of = {s.name: s for s in profile.sites}
        self.state = GridState(
            [Pool(p.pool_id, flock_targets=list(p.flock_targets),
                  negotiation_interval=p.negotiation_interval, claim_reuse=p.claim_reuse) for p in pools],
            [(d, node_ad(d, site_of[d.site].memory, site_of[d.site].arch)) for d in self.nodes],
        )
        self.pool_order = [p.pool_id for p in pools]
        self.queue = EventQueue()
        self.events: list[SimEvent] = []
        self.pending: dict[int, Job] = {}
        self.processed_work = 0.0
        self.wasted_work = 0.0
        self.usage = {p.pool_id: 0.0 for p in pools}
        self._token = 0
        self._tokens: dict[int, int] = {}

    # -- setup --------------------------------------------------------------
    def _jobs(self) -> list[Job]:
        p = self.profile
        jobs = []
        bg = p.background
        if bg.occupancy > 0:
            job_id = 0
            # pin background jobs pool by pool so every pool carries the same share
            for pool_id in self.pool_order:
                members = len(self.state.pools[pool_id].members)
                for _ in range(int(round(bg.occupancy * members))):
                    ad = Ad({"Requirements": f'expr:other.PoolId == "{pool_id}"', "Rank": "expr:other.Speed"},
                            AdKind.JOB)
                    jobs.append(Job(10_000_000 + job_id, bg.owner, bg.origin_pool, bg.work, 0.0, ad,
                                    background=True))
                    job_id += 1
        ad = Ad({"Requirements": "expr:" + p.requirements, "Rank": "expr:" + p.rank, "Owner": p.job_owner},
                AdKind.JOB)
        for i in range(p.n_jobs):
            work = p.work
            if p.work_jitter:
                work *= 1.0 + self.rng.uniform(-p.work_jitter, p.work_jitter)
            jobs.append(Job(i, p.job_owner, p.job_pool, work, round(i * p.submit_link_delay, TIME_DIGITS), ad))
        return jobs

    # -- main loop ----------------------------------------------------------
    def run(self) -> Trace:
        q = self.queue
        for d in self.nodes:
            q.push(0.0, EventKind.NODE_JOIN, node=d.id, pool=d.pool)
        jobs = self._jobs()
        for job in jobs:
            self.pending[job.job_id] = job
            q.push(job.submit_time, EventKind.SUBMIT, job=job.job_id, pool=job.origin_pool)
        for dep in self.profile.departures:
            site_nodes = [d for d in self.nodes if d.site == dep.site]
            if not 0 <= dep.index < len(site_nodes):
                raise InvalidConfig(f"departure index {dep.index} outside site {dep.site!r}")
            q.push(dep.time, EventKind.NODE_LEAVE, node=site_nodes[dep.index].id, pool=site_nodes[dep.index].pool)
        self._tick_times = {}
        for pool_id in self.pool_order:
            self._schedule_tick(pool_id, 0)

        remaining = sum(1 for j in jobs if not j.background)
        while q and remaining:
            ev = q.pop()
            for rec in self._handlers[ev.kind](self, ev):
                self.events.append(rec)
                if rec.kind is EventKind.JOB_COMPLETE and not self.state.jobs[rec.job].background:
                    remaining -= 1
                if self.observer is not None:
                    self.observer(rec, self.state)
        if remaining:
            raise SimulationStuck(self.events[-1].time if self.events else 0.0,
                                  [j.job_id for j in jobs if j.state is not JobState.COMPLETED and not j.background])
        return Trace(self.events, self.state.jobs, {d.id: d for d in self.nodes}, self.profile.bits,
                     self.processed_work, self.wasted_work, self.usage)

    def _schedule_tick(self, pool_id: str, k: int) -> None:
        interval = self.state.pools[pool_id].negotiation_interval
        self._tick_times[pool_id] = k
        self.queue.push(k * interval, EventKind.NEGOTIATE, pool=pool_id, token=k)

    # -- handlers -----------------------------------------------------------
    def _on_join(self, ev: SimEvent) -> list[SimEvent]:
        return [ev]

    def _on_submit(self, ev: SimEvent) -> list[SimEvent]:
        job = self.pending.pop(ev.job)
        self.state.enqueue(job)
        return [ev]

    def _on_tick(self, ev: SimEvent) -> list[SimEvent]:
        now = ev.time
        # every pool whose tick falls on this instant negotiates together: local phases first
        ticks = [ev]
        while (nxt := self.queue.peek()) is not None and nxt.time == now and nxt.kind is EventKind.NEGOTIATE:
            ticks.append(self.queue.pop())
        due = sorted((t.pool for t in ticks), key=self.pool_order.index)
        skip: set[int] = set()
        started = []
        preempted = []
        for phase in ("local", "flock"):
            for pool_id in due:
                a, p = negotiate_cycle(self.state.pools[pool_id], self.state, now, (phase,), skip)
                started.extend(a)
                preempted.extend(p)
        for pe in preempted:
            self._account_preemption(pe.victim_job_id, pe.node_id, now)
            self.queue.push(now, EventKind.PREEMPT, job=pe.victim_job_id, node=pe.node_id,
                            pool=self.state.node_pool[pe.node_id])
        for a in started:
            self._start(a, now)
        if not started and not preempted:
            self._check_stuck(now)
        for pool_id in due:
            self._schedule_tick(pool_id, self._tick_times[pool_id] + 1)
        return ticks

    def _check_stuck(self, now: float) -> None:
        if self.state.running or self.pending:
            return
        if self.queue.pending(EventKind.JOB_COMPLETE, EventKind.NODE_LEAVE):
            return
        stuck = [j for p in self.state.pools.values() for j in p.queue if not self.state.jobs[j].background]
        if stuck:
            raise SimulationStuck(now, sorted(stuck))

    def _start(self, a, now: float) -> None:
        job = self.state.jobs[a.job_id]
        speed = self.state.nodes[a.node_id].speed
        runtime = job_runtime(job.remaining_work, speed, self.overhead)
        self._token += 1
        self._tokens[a.job_id] = self._token
        self.queue.push(now, EventKind.JOB_START, job=a.job_id, node=a.node_id, pool=self.state.node_pool[a.node_id])
        self.queue.push(now + runtime, EventKind.JOB_COMPLETE, job=a.job_id, node=a.node_id,
                        pool=self.state.node_pool[a.node_id], token=self._token)

    def _on_start(self, ev: SimEvent) -> list[SimEvent]:
        return [ev]

    def _on_preempt(self, ev: SimEvent) -> list[SimEvent]:
        return [ev]

    def _done_work(self, node_id: int, start: float, now: float) -> float:
        return (now - start) * self.state.nodes[node_id].speed / self.overhead.multiplier

    def _account(self, job: Job, node_id: int, start: float, now: float) -> float:
        done = self._done_work(node_id, start, now)
        self.processed_work += done
        self.usage[job.origin_pool] = self.usage.get(job.origin_pool, 0.0) + (now - start)
        return done

    def _account_preemption(self, job_id: int, node_id: int, now: float) -> None:
        job = self.state.jobs[job_id]
        self._tokens.pop(job_id, None)
        start = job.history[-1].start_time
        self.wasted_work += self._account(job, node_id, start, now)

    def _on_complete(self, ev: SimEvent) -> list[SimEvent]:
        if self._tokens.get(ev.job) != ev.token:
            return []  # cancelled by preemption or departure
        del self._tokens[ev.job]
        job = self.state.jobs[ev.job]
        a = self.state.release(ev.node)
        self._account(job, ev.node, a.start_time, ev.time)
        job.complete(ev.time)
        follow = reuse_claim(self.state, ev.node, job, ev.time)
        if follow is not None:
            self._start(follow, ev.time)
        return [ev]

    def _on_leave(self, ev: SimEvent) -> list[SimEvent]:
        node = ev.node
        a = self.state.running.get(node)
        if a is not None:
            job = self.state.jobs[a.job_id]
            self._account_preemption(job.job_id, node, ev.time)
            self.state.release(node)
            job.transition(JobState.QUEUED)
            job.remaining_work = job.work
            self.state.enqueue(job)
        self.state.remove_node(node)
        return [ev]

    _handlers = {
        EventKind.NODE_JOIN: _on_join,
        EventKind.SUBMIT: _on_submit,
        EventKind.NEGOTIATE: _on_tick,
        EventKind.JOB_START: _on_start,
        EventKind.JOB_COMPLETE: _on_complete,
        EventKind.PREEMPT: _on_preempt,
        EventKind.NODE_LEAVE: _on_leave,
    }


def run_simulation(
    profile: ExperimentProfile,
    pools: Sequence[PoolConfig],
    seed: int = 0,
    nodes: Optional[Sequence[NodeDescriptor]] = None,
    observer: Optional[Observer] = None,
) -> Trace:
    return Simulation(profile, pools, seed, nodes, observer).run()
