"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line in the terminal summary."""

import math
import random
import statistics
import time

import pytest

from archersim.gridpool import Origin
from archersim.harness import DAY, builtin_config, emit_report, run_fig2, run_scenario1
from archersim.harness.experiments import confinement_stats
from archersim.jobs import JobState
from archersim.matchmaker import Ad, AdKind, evaluate, parse_expression, symmetric_match, UNDEFINED
from archersim.overlay import build_overlay
from archersim.overlay.analysis import all_pairs
from archersim.secnet import AuthenticationError, Identity, enroll, establish_channel
from archersim.simcore import (
    BackgroundLoad,
    Departure,
    EventKind,
    ExperimentProfile,
    PoolConfig,
    SiteSpec,
    job_runtime,
    run_simulation,
)
from oracles import UNDEF, oracle_eval, oracle_match, random_attrs, random_expr, random_requirement, render, typed_attrs

MIX = {"public": 0.5, "cone": 0.35, "symmetric": 0.15}


def test_criterion_1_fig2_reproduction(criterion):
    with criterion(1) as c:
        rows = []
        for seed in range(10):
            t0 = time.perf_counter()
            r = run_fig2(seed)
            wall = time.perf_counter() - t0
            m = r.metrics
            rows.append((m.median_runtime, m.mean_runtime, m.makespan, m.steady_state_intercompletion, wall))
        c.detail = ("range over 10 seeds: median {:.0f}-{:.0f} s, mean {:.0f}-{:.0f} s, makespan {:.0f}-{:.0f} s, "
                    "steady gap {:.1f}-{:.1f} s, slowest seed {:.2f} s").format(
            min(x[0] for x in rows), max(x[0] for x in rows), min(x[1] for x in rows), max(x[1] for x in rows),
            min(x[2] for x in rows), max(x[2] for x in rows), min(x[3] for x in rows), max(x[3] for x in rows),
            max(x[4] for x in rows))
        for median, mean, makespan, gap, wall in rows:
            assert abs(median - 4080) <= 0.05 * 4080
            assert abs(mean - 4320) <= 0.05 * 4320
            assert abs(makespan - 27000) <= 0.15 * 27000
            assert abs(gap - 90) <= 0.20 * 90
            assert wall < 5.0


def test_criterion_2_single_node_baseline(criterion):
    with criterion(2) as c:
        cfg = builtin_config("fig2")
        r = run_fig2(0, cfg)
        base = r.extras["serial_baseline_seconds"]
        c.detail = f"serial baseline {base:.0f} s = {base / DAY:.2f} days"
        # the median-speed node is the one whose per-job runtime is the run's median runtime
        solo = job_runtime(cfg.profile.work, float(cfg.extra("baseline_speed")), cfg.extra("baseline_overhead"))
        assert solo == pytest.approx(r.metrics.median_runtime, rel=1e-9)
        assert abs(base - 816_000) <= 0.01 * 816_000


def test_criterion_3_scenario1(criterion):
    with criterion(3) as c:
        r = run_scenario1(0)
        base = r.extras["serial_baseline_seconds"]
        c.detail = f"serial baseline {base / DAY:g} days, makespan {r.metrics.makespan / 3600:.2f} h"
        assert base == 80 * DAY
        assert r.metrics.makespan <= DAY


def test_criterion_4_overhead_factors(criterion):
    with criterion(4) as c:
        bases = [1.0, 2220.0, 3675.6756756756754, 43200.0, 0.125, 1e6 / 3]
        for b in bases:
            assert job_runtime(b, 1.0, "vmware") == b * 1.11
            assert job_runtime(b, 1.0, "xen") == b * 1.01
            assert job_runtime(b, 1.0, "none") == b
        c.detail = f"vmware x1.11 and xen x1.01 exact on {len(bases)} bases"


def _tunnel_pairs(ov, pairs):
    ok = 0
    hops = []
    for s, d in pairs:
        payload = s.to_bytes(8, "big") + d.to_bytes(8, "big")
        rec = ov.tunnel_send(s, ov.nodes[d].desc.vip, payload)
        if rec.payload == payload:
            ok += 1
            hops.append(rec.hops)
    return ok, hops


def _pairs(ov, rng, limit):
    ids = ov.live_ids()
    every = [(s, d) for s in ids for d in ids if s != d]
    return every if len(every) <= limit else rng.sample(every, limit)


def test_criterion_5_overlay_delivery(criterion):
    with criterion(5) as c:
        t0 = time.perf_counter()
        notes = []
        for n in (16, 64, 256, 1024):
            rng = random.Random(n)
            ov = build_overlay(n, bits=64, seed=n, nat_mix=MIX)
            ov.stabilize()
            walk = all_pairs(ov)
            pairs = _pairs(ov, rng, 64 * 63 if n <= 64 else 1000)
            ok, hops = _tunnel_pairs(ov, pairs)
            assert walk.delivery_rate == 1.0 and ok == len(pairs)
            assert walk.mean_hops <= 2 * math.log2(n)
            assert statistics.fmean(hops) <= 2 * math.log2(n)
            for nid in rng.sample(ov.live_ids(), n // 4):
                ov.fail(nid)
            ov.stabilize()
            after = all_pairs(ov)
            pairs = _pairs(ov, rng, 48 * 47 if n <= 64 else 1000)
            ok2, _ = _tunnel_pairs(ov, pairs)
            assert after.delivery_rate == 1.0 and ok2 == len(pairs)
            notes.append(f"N={n} hops {walk.mean_hops:.2f}/{2 * math.log2(n):.0f}")
        wall = time.perf_counter() - t0
        c.detail = f"100% before and after 25% removal; {', '.join(notes)}; {wall:.1f} s"
        assert wall < 30.0


def _same(a, b):
    return a is UNDEFINED if b is UNDEF else (type(a) is type(b) and a == b)


def test_criterion_6_matchmaker_oracle(criterion):
    with criterion(6) as c:
        rng = random.Random(6)
        cases = bad = 0
        for _ in range(10_000):
            tree = random_expr(rng)
            my, other = random_attrs(rng), random_attrs(rng)
            got = evaluate(parse_expression(render(tree, full=rng.random() < 0.3)), Ad(my), Ad(other))
            bad += not _same(got, oracle_eval(tree, my, other))
            cases += 1
        for _ in range(5_000):
            jr, rr = random_requirement(rng), random_requirement(rng)
            ja, ra = typed_attrs(rng), typed_attrs(rng)
            job = Ad({**ja, "Requirements": "expr:" + render(jr)}, AdKind.JOB)
            res = Ad({**ra, "Requirements": "expr:" + render(rr)})
            bad += symmetric_match(job, res) != oracle_match(jr, ja, rr, ra)
            cases += 1
        c.detail = f"{cases} cases, {bad} discrepancies"
        assert cases >= 10_000 and bad == 0


def _random_scenario(rng):
    n_pools = rng.randint(2, 4)
    pool_ids = [f"p{i}" for i in range(n_pools)]
    sites = []
    for p in pool_ids:
        for k in range(rng.randint(1, 2)):
            sites.append(SiteSpec(f"{p}s{k}", rng.randint(1, 4), rng.choice([0.5, 1.0, 2.0]), p,
                                  memory=rng.choice([512, 1024, 2048])))
    job_pool = rng.choice(pool_ids)
    # keep every scenario feasible: the job pool's own nodes can always serve its jobs
    own_best = max(s.memory for s in sites if s.pool == job_pool)
    need = rng.choice([m for m in (0, 512, 1024) if m <= own_best])
    departures = ()
    roomy = [s for s in sites if s.nodes >= 2]
    if roomy and rng.random() < 0.3:
        s = rng.choice(roomy)
        departures = (Departure(s.name, rng.randrange(s.nodes), float(rng.randint(1, 2000))),)
    profile = ExperimentProfile(
        n_jobs=rng.randint(5, 40), n_nodes=sum(s.nodes for s in sites), sites=tuple(sites),
        work=float(rng.randint(200, 3000)), overhead=rng.choice(["none", "xen", "vmware"]),
        submit_link_delay=float(rng.choice([0, 5, 17, 45])), job_pool=job_pool,
        requirements=f"other.Memory >= {need}", work_jitter=rng.choice([0.0, 0.2]),
        background=BackgroundLoad(rng.choice([0.0, 0.5, 0.75]), float(rng.randint(1000, 20000)),
                                  rng.choice(pool_ids)),
        departures=departures,
    )
    pools = []
    for p in pool_ids:
        others = [q for q in pool_ids if q != p]
        rng.shuffle(others)
        pools.append(PoolConfig(p, tuple(others[: rng.randint(0, len(others))]), rng.choice([30.0, 60.0, 90.0])))
    return profile, pools


class PolicyWatch:
    """Observer checking local latency, Local-job immunity and conservation after every event."""

    def __init__(self, intervals):
        self.intervals = intervals
        self.since: dict[int, float] = {}
        self.submitted = 0
        self.violations: list[str] = []
        self.preemptions = 0
        self.eligible_waits = 0

    def __call__(self, ev, state):
        t = ev.time
        if ev.kind is EventKind.SUBMIT:
            self.submitted += 1
        if ev.kind is EventKind.PREEMPT:
            self.preemptions += 1
            victim = state.jobs[ev.job]
            if victim.history[-1].origin is not Origin.FLOCKED:
                self.violations.append(f"t={t}: Local job {ev.job} preempted")
        counts = state.counts()
        if not (counts[JobState.QUEUED] + counts[JobState.RUNNING] + counts[JobState.COMPLETED]
                == self.submitted == len(state.jobs)) or counts[JobState.RUNNING] != len(state.running):
            self.violations.append(f"t={t}: conservation broken {counts}")
        waiting = set()
        for pid, pool in state.pools.items():
            guests = [n for n in pool.members if n in state.running and state.running[n].origin is Origin.FLOCKED]
            if not guests:
                continue
            for jid in pool.queue:
                job = state.jobs[jid]
                if any(symmetric_match(job.ad, state.node_ads[n]) for n in guests):
                    waiting.add(jid)
                    start = self.since.setdefault(jid, t)
                    if t - start > self.intervals[pid] + 1e-6:
                        self.violations.append(f"t={t}: local job {jid} of {pid} waiting since {start}")
        self.eligible_waits += len(waiting)
        self.since = {j: s for j, s in self.since.items() if j in waiting}


def test_criterion_7_preemption_policy(criterion):
    with criterion(7) as c:
        rng = random.Random(7)
        preempted = waits = 0
        problems = []
        for k in range(100):
            profile, pools = _random_scenario(rng)
            watch = PolicyWatch({p.pool_id: p.negotiation_interval for p in pools})
            run_simulation(profile, pools, seed=k, observer=watch)
            problems += [f"scenario {k}: {v}" for v in watch.violations]
            preempted += watch.preemptions
            waits += watch.eligible_waits
        c.detail = f"100 scenarios, {preempted} preemptions, {len(problems)} violations"
        assert not problems, problems[:5]
        assert preempted > 0 and waits > 0


def test_criterion_8_security_confinement(criterion):
    with criterion(8) as c:
        fuzz = confinement_stats(1000, seed=8, nodes=16, bits=64)
        assert fuzz == {"injected": 1000, "rejected": 1000, "delivered": 0}
        ca = Identity.generate(seed=b"\x81" * 32)
        a, b = establish_channel(enroll(ca, 1, seed=b"\x82" * 32), enroll(ca, 2, seed=b"\x83" * 32),
                                 ca.public_key, now=0)
        buf = random.Random(8).randbytes(65536)
        for n in range(65537):
            assert b.open(a.seal(buf[:n])) == buf[:n]
        flips = 0
        for size in (0, 1, 64, 1024):
            ct = a.seal(buf[:size])
            for i in range(len(ct) * 8):
                bad = bytearray(ct)
                bad[i // 8] ^= 1 << (i % 8)
                with pytest.raises(AuthenticationError):
                    b.open(bytes(bad))
                flips += 1
            assert b.open(ct) == buf[:size]
        c.detail = f"1000/1000 uncertified frames rejected, sizes 0..65536 round-trip, {flips} bit flips rejected"


def test_criterion_9_determinism(criterion, tmp_path):
    with criterion(9) as c:
        for name, runner in (("fig2", run_fig2), ("scenario1", run_scenario1)):
            first = emit_report(runner(3), tmp_path / name / "a")
            second = emit_report(runner(3), tmp_path / name / "b")
            for key in ("trace", "cdf"):
                assert first[key].read_bytes() == second[key].read_bytes(), (name, key)
        c.detail = "fig2 and scenario1 trace.jsonl and cdf.csv byte-identical for equal seeds"
