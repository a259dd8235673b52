"""All-pairs greedy-routing statistics computed over routing tables with numpy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Overlay


@dataclass(frozen=True)
class PairStats:
    pairs: int
    delivered: int
    mean_hops: float
    max_hops: int

    @property
    def delivery_rate(self) -> float:
        return self.delivered / self.pairs if self.pairs else 1.0


def _ring_dist(a, b, mask, size):
    if size is None:  # uint64 path: wraparound subtraction is the modular difference
        d = (a - b) & mask
        e = (b - a) & mask
    else:
        d = (a - b) % size
        e = (b - a) % size
    return np.minimum(d, e)


def all_pairs(overlay: Overlay) -> PairStats:
    """Walk every ordered (src, dst) pair of live nodes greedily.

    Uses uint64 arithmetic when the ring is at most 64 bits wide and Python
    integers in object arrays otherwise.
    """
    ids_list = overlay.live_ids()
    n = len(ids_list)
    if n < 2:
        return PairStats(0, 0, 0.0, 0)
    index = {nid: i for i, nid in enumerate(ids_list)}
    tables = [overlay.nodes[nid].table.entries() for nid in ids_list]
    width = max(1, max(len(t) for t in tables))
    nb = np.full((n, width), -1, dtype=np.int64)
    for i, t in enumerate(tables):
        nb[i, : len(t)] = [index[x] for x in t]
    valid = nb >= 0

    if overlay.bits <= 64:
        ids = np.array(ids_list, dtype=np.uint64)
        mask = np.uint64((1 << overlay.bits) - 1)
        size = None
        big = np.uint64(0xFFFFFFFFFFFFFFFF)
    else:
        ids = np.array(ids_list, dtype=object)
        mask = None
        size = 1 << overlay.bits
        big = 1 << (overlay.bits + 1)
    nb_ids = ids[np.where(valid, nb, 0)]
    rows = np.arange(n)

    delivered = 0
    total_hops = 0
    max_hops = 0
    for d in range(n):
        target = ids[d]
        nd = np.where(valid, _ring_dist(nb_ids, target, mask, size), big)
        own = _ring_dist(ids, target, mask, size)
        best_d = nd.min(axis=1)
        tie = np.where(nd == best_d[:, None], nb_ids, big).min(axis=1)
        if size is None:
            best_idx = np.minimum(np.searchsorted(ids, tie), n - 1)
        else:
            best_idx = np.array([index.get(x, 0) for x in tie])
        nxt = np.where(best_d < own, best_idx, rows)
        nxt[d] = d
        cur = rows.copy()
        hops = np.zeros(n, dtype=np.int64)
        for _ in range(n):
            moving = (cur != d) & (nxt[cur] != cur)
            if not moving.any():
                break
            hops += moving
            cur = np.where(moving, nxt[cur], cur)
        ok = cur == d
        ok[d] = False
        delivered += int(ok.sum())
        total_hops += int(hops[ok].sum())
        if ok.any():
            max_hops = max(max_hops, int(hops[ok].max()))
    pairs = n * (n - 1)
    return PairStats(pairs, delivered, total_hops / delivered if delivered else 0.0, max_hops)
