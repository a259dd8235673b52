import ipaddress
import random

import pytest

from archersim.gridpool import (
    GridState,
    Pool,
    flock_candidates,
    negotiate_cycle,
    requeue_preempted,
    reuse_claim,
)
from archersim.jobs import InvariantViolation, Job, JobState, Origin
from archersim.matchmaker import Ad, AdKind
from archersim.overlay import NodeDescriptor
from oracles import oracle_match, oracle_rank, random_requirement, render, typed_attrs

RANK = ("attr", "other", "Speed")


def desc(nid, pool, speed=1.0):
    return NodeDescriptor(nid, ipaddress.IPv4Address(0x0A000000 + nid), pool, pool, speed)


def res_ad(attrs, req=("lit", True)):
    return Ad({**attrs, "Requirements": "expr:" + render(req)})


def job_ad(req=("lit", True), rank=RANK):
    return Ad({"Requirements": "expr:" + render(req), "Rank": "expr:" + render(rank)}, AdKind.JOB)


def make_job(jid, pool, t=0.0, req=("lit", True), work=100.0):
    return Job(jid, "u", pool, work, t, job_ad(req))


def simple_state(layout, flocks=None):
    """``layout`` maps pool -> list of (node id, speed)."""
    flocks = flocks or {}
    pools = [Pool(p, flock_targets=list(flocks.get(p, []))) for p in layout]
    nodes = [(desc(n, p, s), res_ad({"Speed": s, "Memory": 2048})) for p, ns in layout.items() for n, s in ns]
    return GridState(pools, nodes)


# -- worked examples ------------------------------------------------------------

def test_one_job_one_node():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a"))
    a, p = negotiate_cycle(st.pools["a"], st, 0.0)
    assert [(x.job_id, x.node_id, x.origin) for x in a] == [(0, 1, Origin.LOCAL)]
    assert p == []


def test_local_job_preempts_most_recent_guest():
    st = simple_state({"a": [(1, 1.0), (2, 1.0)], "b": []}, {"b": ["a"]})
    st.enqueue(make_job(10, "b"))
    st.enqueue(make_job(11, "b"))
    st.assign(st.jobs[10], 1, 0.0)
    st.assign(st.jobs[11], 2, 30.0)
    st.enqueue(make_job(0, "a", t=60.0))
    a, p = negotiate_cycle(st.pools["a"], st, 60.0)
    assert len(p) == 1
    assert (p[0].victim_job_id, p[0].node_id, p[0].preemptor_job_id, p[0].reason) == (11, 2, 0, "local-priority")
    assert [(x.job_id, x.node_id, x.origin) for x in a] == [(0, 2, Origin.LOCAL)]
    victim = st.jobs[11]
    assert victim.state is JobState.QUEUED and victim.preemptions == 1
    assert st.pools["b"].queue == [11]


def test_no_preemption_of_local_work():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a"))
    negotiate_cycle(st.pools["a"], st, 0.0)
    st.enqueue(make_job(1, "a", t=5.0))
    a, p = negotiate_cycle(st.pools["a"], st, 60.0)
    assert a == [] and p == []
    assert st.jobs[1].state is JobState.QUEUED


def test_no_match_stays_queued():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a", req=("bin", ">", ("attr", "other", "Memory"), ("lit", 4096))))
    assert negotiate_cycle(st.pools["a"], st, 0.0) == ([], [])
    assert st.pools["a"].queue == [0]


def test_future_submissions_wait():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a", t=100.0))
    assert negotiate_cycle(st.pools["a"], st, 60.0) == ([], [])


def test_unknown_phase_rejected():
    st = simple_state({"a": [(1, 1.0)]})
    with pytest.raises(ValueError):
        negotiate_cycle(st.pools["a"], st, 0.0, ("global",))


# -- flock candidates -------------------------------------------------------------

def test_empty_flock_targets_local_only():
    st = simple_state({"a": [(1, 1.0), (2, 2.0)], "b": [(3, 9.0)]})
    assert flock_candidates(st.pools["a"], make_job(0, "a"), st) == [2, 1]


def test_one_remote_idle():
    st = simple_state({"a": [(1, 1.0)], "b": [(3, 1.0), (4, 1.0)]}, {"a": ["b"]})
    st.enqueue(make_job(10, "a"))
    st.enqueue(make_job(11, "b"))
    st.assign(st.jobs[10], 1, 0.0)
    st.assign(st.jobs[11], 3, 0.0)
    assert flock_candidates(st.pools["a"], make_job(0, "a"), st) == [4]


def test_triangle_order_hand_enumerated():
    layout = {"a": [(1, 1.0), (2, 3.0)], "b": [(3, 2.0), (4, 2.0)], "c": [(5, 5.0), (6, 1.0)]}
    flocks = {"a": ["b", "c"], "b": ["c", "a"], "c": ["a", "b"]}
    st = simple_state(layout, flocks)
    job = make_job(0, "a")
    assert flock_candidates(st.pools["a"], job, st) == [2, 1, 3, 4, 5, 6]
    assert flock_candidates(st.pools["b"], job, st) == [3, 4, 5, 6, 2, 1]
    assert flock_candidates(st.pools["c"], job, st) == [5, 6, 2, 1, 3, 4]
    slow = make_job(1, "a", req=("bin", "<", ("attr", "other", "Speed"), ("lit", 2.5)))
    assert flock_candidates(st.pools["c"], slow, st) == [6, 1, 3, 4]


def test_unknown_and_repeated_targets_ignored():
    st = simple_state({"a": [(1, 1.0)], "b": [(2, 1.0)]}, {"a": ["zz", "b", "a", "b"]})
    assert flock_candidates(st.pools["a"], make_job(0, "a"), st) == [1, 2]


# -- requeue ---------------------------------------------------------------------

def _running_guest():
    st = simple_state({"a": [(1, 1.0)], "b": []}, {"b": ["a"]})
    st.enqueue(make_job(7, "b", work=400.0))
    st.assign(st.jobs[7], 1, 0.0)
    return st, st.jobs[7]


def test_requeue_resets_work_and_counts():
    st, job = _running_guest()
    job.remaining_work = 200.0  # half done
    st.release(1)
    requeue_preempted(job, 100.0)
    assert job.remaining_work == 400.0
    assert job.preemptions == 1
    assert job.state is JobState.QUEUED


def test_requeue_local_job_is_invariant_violation():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a"))
    negotiate_cycle(st.pools["a"], st, 0.0)
    with pytest.raises(InvariantViolation):
        requeue_preempted(st.jobs[0], 10.0)


def test_requeue_queued_job_is_invariant_violation():
    with pytest.raises(InvariantViolation):
        requeue_preempted(make_job(0, "a"), 0.0)


def test_preempted_twice_still_completes():
    st, guest = _running_guest()
    t = 0.0
    for k in range(2):
        t += 60.0
        local = make_job(100 + k, "a", t=t)
        st.enqueue(local)
        _, p = negotiate_cycle(st.pools["a"], st, t)
        assert [e.victim_job_id for e in p] == [7]
        t += 60.0
        st.release(1)
        local.complete(t)
        # the guest flocks back in when the local user is done
        a, _ = negotiate_cycle(st.pools["b"], st, t)
        assert [(x.job_id, x.origin) for x in a] == [(7, Origin.FLOCKED)]
    t += 400.0
    st.release(1)
    guest.complete(t)
    assert guest.preemptions == 2 and guest.state is JobState.COMPLETED
    assert len(guest.history) == 3


def test_single_occupancy_enforced():
    st = simple_state({"a": [(1, 1.0)]})
    st.enqueue(make_job(0, "a"))
    st.enqueue(make_job(1, "a"))
    st.assign(st.jobs[0], 1, 0.0)
    with pytest.raises(InvariantViolation):
        st.assign(st.jobs[1], 1, 0.0)


def test_node_in_one_pool_only():
    st = simple_state({"a": [(1, 1.0)], "b": []})
    with pytest.raises(InvariantViolation):
        st.add_node(desc(1, "b"), res_ad({}))


def test_claim_reuse_prefers_owner_queue():
    st = simple_state({"a": [(1, 1.0)], "b": []}, {"b": ["a"]})
    st.enqueue(make_job(10, "b"))
    st.enqueue(make_job(11, "b"))
    st.assign(st.jobs[10], 1, 0.0)
    st.release(1)
    st.jobs[10].complete(50.0)
    assert reuse_claim(st, 1, st.jobs[10], 50.0).job_id == 11
    st.release(1)
    st.jobs[11].complete(90.0)
    st.enqueue(make_job(12, "b"))
    st.enqueue(make_job(0, "a", t=80.0))
    assert reuse_claim(st, 1, st.jobs[11], 90.0) is None


# -- oracle ----------------------------------------------------------------------

def oracle_cycle(pool_id, pools, nodes, running, queue):
    """Two-phase negotiation worked out by exhaustive enumeration.

    ``nodes`` maps id -> (pool, attrs, req); ``running`` maps node -> (job, origin, start);
    ``queue`` is a list of (job id, submit, req) already in (submit, id) order.
    Returns [(job, node)] and [(victim, node, preemptor)].
    """
    running = dict(running)
    tiers = [pool_id] + [t for t in pools[pool_id] if t != pool_id]
    out, pre, done = [], [], set()

    def feasible(req, allowed):
        return [n for n, (p, attrs, rreq) in nodes.items()
                if p in allowed and n not in running and oracle_match(req, {}, rreq, attrs)]

    for jid, _, req in queue:
        cands = feasible(req, {pool_id})
        if cands:
            best = min(cands, key=lambda n: (-oracle_rank(RANK, {}, nodes[n][1]), n))
            out.append((jid, best))
            running[best] = (jid, "Local", 0.0)
            done.add(jid)
            continue
        guests = [n for n, (j, origin, start) in running.items()
                  if nodes[n][0] == pool_id and origin == "Flocked" and oracle_match(req, {}, nodes[n][2], nodes[n][1])]
        if guests:
            node = max(guests, key=lambda n: (running[n][2], running[n][0]))
            pre.append((running[node][0], node, jid))
            out.append((jid, node))
            running[node] = (jid, "Local", 0.0)
            done.add(jid)
    for jid, _, req in queue:
        if jid in done:
            continue
        for tier in tiers:
            cands = feasible(req, {tier})
            if cands:
                best = min(cands, key=lambda n: (-oracle_rank(RANK, {}, nodes[n][1]), n))
                out.append((jid, best))
                running[best] = (jid, "Flocked", 0.0)
                break
    return out, pre


@pytest.mark.parametrize("seed", range(60))
def test_negotiation_matches_exhaustive_oracle(seed):
    rng = random.Random(seed)
    pools = {"a": ["b"], "b": ["a"]}
    nodes = {}
    nid = 1
    for p in pools:
        for _ in range(rng.randint(1, 5)):
            attrs = typed_attrs(rng)
            attrs["Speed"] = rng.choice([0.5, 1, 2])
            req = random_requirement(rng, 1) if rng.random() < 0.3 else ("lit", True)
            nodes[nid] = (p, attrs, req)
            nid += 1
    st = GridState([Pool(p, flock_targets=t) for p, t in pools.items()],
                   [(desc(n, p), res_ad(attrs, req)) for n, (p, attrs, req) in nodes.items()])
    # some "b" jobs already run on "a" nodes as guests
    running = {}
    gid = 500
    for n in sorted(nodes):
        if nodes[n][0] == "a" and rng.random() < 0.4:
            g = make_job(gid, "b")
            st.enqueue(g)
            start = float(rng.randint(0, 5))
            st.assign(g, n, start)
            running[n] = (gid, "Flocked", start)
            gid += 1
    queue = []
    for jid in range(rng.randint(1, 10)):
        req = random_requirement(rng) if rng.random() < 0.7 else ("lit", True)
        t = float(rng.randint(0, 3) * 5)
        st.enqueue(make_job(jid, "a", t=t, req=req))
        queue.append((jid, t, req))
    queue.sort(key=lambda q: (q[1], q[0]))

    want_a, want_p = oracle_cycle("a", pools, nodes, running, queue)
    got_a, got_p = negotiate_cycle(st.pools["a"], st, 60.0)
    assert [(x.job_id, x.node_id) for x in got_a] == want_a
    assert [(e.victim_job_id, e.node_id, e.preemptor_job_id) for e in got_p] == want_p
    assert len(st.running) == len({a.node_id for a in st.running.values()})
