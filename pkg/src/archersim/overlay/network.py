"""Self-configuring overlay of virtual workstations.

``Overlay`` owns the live node set.  Control-plane work (join lookups,
stabilization, registry maintenance) walks the routing tables directly;
payloads travel as frames through a :mod:`~archersim.overlay.transport`,
sealed end to end by :mod:`archersim.secnet`.
"""

from __future__ import annotations

import ipaddress
import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

from ..secnet import (
    AuthenticationError,
    ChannelError,
    Credentials,
    Identity,
    SecureChannel,
    enroll,
    establish_channel,
    verify_certificate,
)
from . import frames
from .ring import (
    DEFAULT_BITS,
    DEFAULT_NEAR,
    DEFAULT_PREFIX,
    AddressPool,
    IsolatedNodeError,
    JoinError,
    LinkMode,
    NatClass,
    NoRouteToHost,
    OverlayError,
    RoutingTable,
    clockwise,
    id_hex,
    key_for,
    link_allowed,
    ring_distance,
    route_next_hop,
)
from .transport import InMemoryTransport, Transport

log = logging.getLogger(__name__)


class UncertifiedEndpoint(OverlayError):
    pass


class DeliveryError(OverlayError):
    pass


@dataclass(frozen=True)
class NodeDescriptor:
    id: int
    vip: ipaddress.IPv4Address
    site: str = ""
    pool: str = ""
    speed: float = 1.0
    nat: NatClass = NatClass.PUBLIC

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed}")
        object.__setattr__(self, "nat", NatClass(self.nat))
        object.__setattr__(self, "vip", ipaddress.IPv4Address(self.vip))


@dataclass(frozen=True)
class Link:
    a: int
    b: int
    mode: LinkMode
    relay: Optional[int] = None


@dataclass
class DeliveryReceipt:
    hops: int
    path: list[int]
    relays: list[int] = field(default_factory=list)
    payload: bytes = b""


class OverlayNode:
    """One virtual workstation: routing state, DHT slice, peers and channels."""

    def __init__(self, overlay: "Overlay", desc: NodeDescriptor, creds: Credentials):
        self.overlay = overlay
        self.desc = desc
        self.creds = creds
        self.table = RoutingTable(desc.id, overlay.bits, overlay.near)
        self.registry: dict[ipaddress.IPv4Address, int] = {}
        self.peers: set[int] = set()  # certified link partners
        self.channels: dict[int, SecureChannel] = {}
        self.inbox: dict[int, tuple[int, bytes, list[int]]] = {}
        self.shortcut_target = 0
        self.rejected = 0
        self.undeliverable = 0

    @property
    def id(self) -> int:
        return self.desc.id

    # -- data plane -------------------------------------------------------
    def receive(self, link_src: int, data: bytes) -> None:
        if link_src not in self.peers:
            self.rejected += 1
            return
        try:
            frame = frames.decode(data)
        except frames.FrameError:
            self.rejected += 1
            return
        if isinstance(frame, frames.RelayFrame):
            self._relay(link_src, frame)
        else:
            self._data(frame)

    def _relay(self, link_src: int, frame: frames.RelayFrame) -> None:
        if frame.target == self.id:
            # the relay vouches for the hop; the previous hop must still be one of ours
            if frame.prev_hop not in self.peers:
                self.rejected += 1
                return
            try:
                inner = frames.decode(frame.inner)
            except frames.FrameError:
                self.rejected += 1
                return
            if isinstance(inner, frames.DataFrame):
                self._data(inner)
            else:
                self.rejected += 1
        elif frame.target in self.peers and frame.prev_hop == link_src:
            self.overlay.transport.send(self.id, frame.target, frame.encode(self.overlay.id_len))
        else:
            self.rejected += 1

    def _data(self, frame: frames.DataFrame) -> None:
        frame.path.append(self.id)
        if frame.dst == self.id:
            channel = self.channels.get(frame.src)
            if channel is None:
                self.rejected += 1
                return
            try:
                plaintext = channel.open(frame.payload)
            except (AuthenticationError, ChannelError):
                self.rejected += 1
                return
            self.inbox[frame.msg_id] = (frame.src, plaintext, frame.path)
            return
        if frame.ttl == 0:
            self.undeliverable += 1
            return
        frame.ttl -= 1
        try:
            nxt = route_next_hop(self.table, frame.dst)
        except IsolatedNodeError:
            nxt = None
        if nxt is None:
            self.undeliverable += 1
            return
        self.forward(nxt, frame.encode(self.overlay.id_len))

    def forward(self, nxt: int, data: bytes) -> None:
        link = self.overlay.link(self.id, nxt)
        transport = self.overlay.transport
        if link is None:
            self.undeliverable += 1
        elif link.mode is LinkMode.DIRECT:
            transport.send(self.id, nxt, data)
        else:
            relay = frames.RelayFrame(self.id, nxt, data)
            transport.send(self.id, link.relay, relay.encode(self.overlay.id_len))


def shortcut_budget(n: int) -> int:
    return max(1, math.ceil(math.log2(n))) if n > 1 else 0


class Overlay:
    """A ring overlay instance.

    ``seed`` fixes node ids, keys and shortcut sampling: the same seed and
    join order reproduce identical tables and paths.
    """

    def __init__(
        self,
        bits: int = DEFAULT_BITS,
        near: int = DEFAULT_NEAR,
        seed: int = 0,
        prefix: str = DEFAULT_PREFIX,
        transport: Transport | None = None,
        ca: Identity | None = None,
        now: float = 0,
    ):
        self.bits = bits
        self.near = near
        self.id_len = (bits + 7) // 8
        self.rng = random.Random(seed)
        self.addresses = AddressPool.from_string(prefix)
        self.transport = transport if transport is not None else InMemoryTransport()
        self.ca = ca if ca is not None else Identity.generate(seed=self.rng.randbytes(32), label="archer-ca")
        self.now = now
        self.nodes: dict[int, OverlayNode] = {}
        self._allocated: set[int] = set()
        self._next_vip = 0
        self._links: dict[frozenset, Link] = {}
        self._msg_seq = 0

    # -- membership -------------------------------------------------------
    def allocate(self, site: str = "", pool: str = "", speed: float = 1.0,
                 nat: NatClass | str = NatClass.PUBLIC) -> NodeDescriptor:
        """Draw a fresh node id and the next virtual address."""
        while True:
            nid = self.rng.getrandbits(self.bits)
            if nid not in self._allocated:
                break
        self._allocated.add(nid)
        vip = self.addresses.nth(self._next_vip)
        self._next_vip += 1
        return NodeDescriptor(nid, vip, site, pool, speed, NatClass(nat))

    def enroll(self, desc: NodeDescriptor) -> Credentials:
        return enroll(self.ca, desc.id, seed=self.rng.randbytes(32))

    @property
    def size(self) -> int:
        return len(self.nodes)

    def live_ids(self) -> list[int]:
        return sorted(self.nodes)

    def node(self, nid: int) -> OverlayNode:
        try:
            return self.nodes[nid]
        except KeyError:
            raise OverlayError(f"node {id_hex(nid, self.bits)} is not live") from None

    def join(self, desc: NodeDescriptor, bootstraps: Iterable[int] = (),
             credentials: Credentials | None = None) -> OverlayNode:
        if desc.id in self.nodes:
            raise JoinError(f"node {id_hex(desc.id, self.bits)} already joined")
        if desc.vip not in self.addresses:
            raise JoinError(f"{desc.vip} outside {self.addresses.prefix}")
        creds = credentials if credentials is not None else self.enroll(desc)
        if creds.node_id != desc.id or not verify_certificate(self.ca.public_key, creds.certificate, self.now):
            raise JoinError(f"node {id_hex(desc.id, self.bits)} presented an invalid certificate")
        node = OverlayNode(self, desc, creds)
        if not self.nodes:
            self._admit(node)
            self._store(node, desc.vip, desc.id)
            return node
        boot = next((b for b in bootstraps if b in self.nodes), None)
        if boot is None:
            raise JoinError("no live bootstrap node")

        closest = self._lookup(boot, desc.id)
        pred, succ = self._bracket(closest, desc.id)
        p, s = self.nodes[pred], self.nodes[succ]
        candidates = {pred, succ, *p.table.successors, *p.table.predecessors,
                      *s.table.successors, *s.table.predecessors}
        node.table.rebuild_near(candidates)
        self._admit(node)
        for nid in set(node.table.successors) | set(node.table.predecessors):
            other = self.nodes[nid]
            other.table.rebuild_near(other.table.near_set() | {desc.id})
            # a shortcut that just became a near neighbour frees a slot
            self._fill_shortcuts(other)
            self._connect_table(nid)
        node.shortcut_target = shortcut_budget(self.size)
        self._fill_shortcuts(node)
        self._connect_table(desc.id)
        self._take_over_keys(node)
        self._store(node, desc.vip, desc.id)
        return node

    def _admit(self, node: OverlayNode) -> None:
        self.nodes[node.id] = node
        self.transport.register(node.id, node.receive)

    def fail(self, nid: int) -> None:
        """Remove a node abruptly; neighbours notice at the next stabilize."""
        self.node(nid)
        del self.nodes[nid]
        self.transport.unregister(nid)

    # -- lookup -----------------------------------------------------------
    def _lookup(self, start: int, key: int) -> int:
        """Greedy walk from ``start``; ends at the live node responsible for ``key``."""
        cur = start
        for _ in range(len(self.nodes) + 1):
            table = self.nodes[cur].table
            if table.is_empty():
                return cur
            nxt = route_next_hop(table, key)
            if nxt is None or nxt not in self.nodes:
                break
            cur = nxt
        # equidistant keys belong to the smaller id
        d = ring_distance(cur, key, self.bits)
        for n in self.nodes[cur].table.entries():
            if n in self.nodes and ring_distance(n, key, self.bits) == d and n < cur:
                cur = n
        return cur

    def _bracket(self, start: int, nid: int) -> tuple[int, int]:
        """Live (predecessor, successor) pair that ``nid`` falls between."""
        cur = start
        for _ in range(len(self.nodes) + 1):
            table = self.nodes[cur].table
            if not table.successors:
                return cur, cur
            succ = table.successors[0]
            if clockwise(cur, nid, self.bits) < clockwise(cur, succ, self.bits) or succ == cur:
                return cur, succ
            pred = table.predecessors[0]
            if clockwise(pred, nid, self.bits) < clockwise(pred, cur, self.bits):
                return pred, cur
            # walk in whichever direction is shorter
            cur = succ if clockwise(cur, nid, self.bits) <= clockwise(nid, cur, self.bits) else pred
        raise OverlayError("ring inconsistent: could not bracket joining id")

    def _fill_shortcuts(self, node: OverlayNode) -> None:
        table = node.table
        attempts = 0
        half = 1 << (self.bits - 1)
        while len(table.shortcuts) < node.shortcut_target and attempts < 4 * node.shortcut_target:
            attempts += 1
            # log-uniform distance: density proportional to 1/distance
            dist = int(math.exp(self.rng.random() * math.log(half)))
            sign = 1 if self.rng.random() < 0.5 else -1
            target = (node.id + sign * max(1, dist)) % (1 << self.bits)
            table.add_shortcut(self._lookup(node.id, target))

    def refresh_shortcuts(self) -> None:
        """Raise every node's shortcut budget to match the current size."""
        budget = shortcut_budget(self.size)
        for nid in self.live_ids():
            node = self.nodes[nid]
            node.shortcut_target = budget
            self._fill_shortcuts(node)
            self._connect_table(nid)

    # -- links ------------------------------------------------------------
    def link(self, a: int, b: int) -> Optional[Link]:
        return self._links.get(frozenset((a, b)))

    def links(self) -> list[Link]:
        return [self._links[k] for k in sorted(self._links, key=lambda k: tuple(sorted(k)))]

    def _certify(self, a: OverlayNode, b: OverlayNode) -> None:
        ca = self.ca.public_key
        if b.id not in a.peers and not verify_certificate(ca, b.creds.certificate, self.now):
            raise UncertifiedEndpoint(f"{id_hex(b.id, self.bits)} failed certificate check")
        if a.id not in b.peers and not verify_certificate(ca, a.creds.certificate, self.now):
            raise UncertifiedEndpoint(f"{id_hex(a.id, self.bits)} failed certificate check")
        a.peers.add(b.id)
        b.peers.add(a.id)

    def _pick_relay(self, a: int, b: int) -> int:
        public = [n for n, node in self.nodes.items()
                  if node.desc.nat is NatClass.PUBLIC and n not in (a, b)]
        if not public:
            raise OverlayError("relayed link needs a public node and none is live")
        return min(public, key=lambda n: (ring_distance(n, a, self.bits), n))

    def connect(self, a: int, b: int) -> Link:
        key = frozenset((a, b))
        existing = self._links.get(key)
        if existing is not None and (existing.relay is None or existing.relay in self.nodes):
            return existing
        na, nb = self.nodes[a], self.nodes[b]
        self._certify(na, nb)
        mode = link_allowed(na.desc.nat, nb.desc.nat)
        relay = None
        if mode is LinkMode.RELAYED:
            relay = self._pick_relay(a, b)
            self._certify(na, self.nodes[relay])
            self._certify(nb, self.nodes[relay])
        link = Link(min(a, b), max(a, b), mode, relay)
        self._links[key] = link
        return link

    def _connect_table(self, nid: int) -> None:
        for other in self.nodes[nid].table.entries():
            self.connect(nid, other)

    # -- registry ---------------------------------------------------------
    def _vip_key(self, vip: ipaddress.IPv4Address) -> int:
        return key_for(f"vip:{vip}", self.bits)

    def _store(self, via: OverlayNode, vip: ipaddress.IPv4Address, nid: int) -> None:
        holder = self._lookup(via.id, self._vip_key(vip))
        self.nodes[holder].registry[vip] = nid

    def _take_over_keys(self, node: OverlayNode) -> None:
        for nid in node.table.near_set():
            holder = self.nodes[nid]
            for vip in list(holder.registry):
                k = self._vip_key(vip)
                if (ring_distance(node.id, k, self.bits), node.id) < (ring_distance(nid, k, self.bits), nid):
                    node.registry[vip] = holder.registry.pop(vip)

    def resolve_virtual_address(self, vip, via: int | None = None) -> int:
        vip = ipaddress.IPv4Address(vip)
        if not self.nodes:
            raise NoRouteToHost(f"no route to host {vip}")
        start = via if via is not None else self.live_ids()[0]
        holder = self.nodes[self._lookup(start, self._vip_key(vip))]
        nid = holder.registry.get(vip)
        if nid is None or nid not in self.nodes:
            raise NoRouteToHost(f"no route to host {vip}")
        return nid

    # -- maintenance ------------------------------------------------------
    def stabilize(self, max_rounds: int | None = None) -> int:
        """Repair tables after departures; returns the number of gossip rounds run."""
        live = set(self.nodes)
        snapshot = {nid: tuple(node.table.entries()) for nid, node in self.nodes.items()}
        for key in [k for k in self._links if not k <= live]:
            del self._links[key]
        for node in self.nodes.values():
            dead = node.table.entries()
            node.table.drop({n for n in dead if n not in live})
            node.peers &= live
            for n in [n for n in node.channels if n not in live]:
                del node.channels[n]
            for vip in [v for v, n in node.registry.items() if n not in live]:
                del node.registry[vip]
        for key, link in list(self._links.items()):
            if link.relay is not None and link.relay not in live:
                del self._links[key]

        order = self.live_ids()
        rounds = 0
        limit = max_rounds if max_rounds is not None else 2 * len(order) + 4
        while rounds < limit:
            rounds += 1
            changed = False
            for nid in order:
                table = self.nodes[nid].table
                known = set(table.entries()) | self.nodes[nid].peers
                if not known:
                    continue
                cand = set(known)
                for n in known:
                    other = self.nodes[n].table
                    cand.update(other.successors)
                    cand.update(other.predecessors)
                before = (table.successors, table.predecessors)
                table.rebuild_near(cand)
                if (table.successors, table.predecessors) != before:
                    changed = True
                for n in table.near_set():
                    other = self.nodes[n].table
                    prev = (other.successors, other.predecessors)
                    other.rebuild_near(other.near_set() | {nid})
                    if (other.successors, other.predecessors) != prev:
                        changed = True
            if not changed and self._ring_consistent():
                break
        else:
            raise OverlayError(f"stabilize did not converge in {limit} rounds")

        # only repaired tables draw new shortcuts, so a quiet ring is left untouched
        for nid in order:
            if tuple(self.nodes[nid].table.entries()) != snapshot[nid]:
                self._fill_shortcuts(self.nodes[nid])
        for nid in order:
            self._connect_table(nid)
        self._repair_registry()
        return rounds

    def _ring_consistent(self) -> bool:
        for nid, node in self.nodes.items():
            t = node.table
            if len(self.nodes) > 1 and not t.successors:
                return False
            if t.successors:
                s = self.nodes[t.successors[0]].table
                if not s.predecessors or s.predecessors[0] != nid:
                    return False
        return True

    def _repair_registry(self) -> None:
        entries = []
        for nid in self.live_ids():
            node = self.nodes[nid]
            entries.extend((nid, vip, owner) for vip, owner in sorted(node.registry.items()))
            node.registry.clear()
        for holder, vip, owner in entries:
            self._store(self.nodes[holder], vip, owner)
        # every live node republishes its own address
        for nid in self.live_ids():
            node = self.nodes[nid]
            self._store(node, node.desc.vip, nid)

    # -- data plane -------------------------------------------------------
    def channel(self, src: int, dst: int) -> SecureChannel:
        a, b = self.nodes[src], self.nodes[dst]
        chan = a.channels.get(dst)
        if chan is None or src not in b.channels:
            seeds = (self.rng.randbytes(32), self.rng.randbytes(32))
            try:
                ca_, cb_ = establish_channel(a.creds, b.creds, self.ca.public_key, self.now, eph_seeds=seeds)
            except ChannelError as exc:
                raise UncertifiedEndpoint(str(exc)) from exc
            a.channels[dst] = ca_
            b.channels[src] = cb_
            chan = ca_
        return chan

    def tunnel_send(self, src: int, dst, payload: bytes) -> DeliveryReceipt:
        """Deliver ``payload`` from node ``src`` to the node owning virtual address ``dst``."""
        node = self.node(src)
        dst_id = self.resolve_virtual_address(dst, via=src)
        payload = bytes(payload)
        if dst_id == src:
            return DeliveryReceipt(0, [src], [], payload)
        channel = self.channel(src, dst_id)
        self._msg_seq = (self._msg_seq + 1) & 0xFFFFFFFF
        msg_id = self._msg_seq
        frame = frames.DataFrame(msg_id, src, dst_id, channel.seal(payload), [src])
        nxt = route_next_hop(node.table, dst_id)
        if nxt is None:
            raise DeliveryError(f"{id_hex(src, self.bits)} has no route towards {dst}")
        node.forward(nxt, frame.encode(self.id_len))
        self.transport.run_until_idle()
        got = self.nodes[dst_id].inbox.pop(msg_id, None)
        if got is None:
            raise DeliveryError(f"payload to {dst} was not delivered")
        _, plaintext, path = got
        relays = []
        for a, b in zip(path, path[1:]):
            link = self.link(a, b)
            if link is not None and link.relay is not None:
                relays.append(link.relay)
        return DeliveryReceipt(len(path) - 1, path, relays, plaintext)

    def inject(self, link_src: int, dst: int, data: bytes) -> None:
        """Hand raw bytes to ``dst`` as if ``link_src`` had sent them."""
        self.transport.send(link_src, dst, data)
        self.transport.run_until_idle()

    def rejected_frames(self) -> int:
        return sum(n.rejected for n in self.nodes.values())

    # -- reporting --------------------------------------------------------
    def route_path(self, src: int, dst: int) -> list[int]:
        """Greedy control-plane path between two live node ids."""
        path = [src]
        cur = src
        while cur != dst:
            nxt = route_next_hop(self.nodes[cur].table, dst)
            if nxt is None:
                raise DeliveryError(f"greedy routing stuck at {id_hex(cur, self.bits)}")
            path.append(nxt)
            cur = nxt
        return path

    def topology_records(self) -> list[dict]:
        out = []
        for nid in self.live_ids():
            node = self.nodes[nid]
            t = node.table
            near = list(dict.fromkeys([*t.successors, *t.predecessors]))
            out.append({
                "id": id_hex(nid, self.bits),
                "vip": str(node.desc.vip),
                "site": node.desc.site,
                "nat": node.desc.nat.value,
                "near": [id_hex(n, self.bits) for n in near],
                "shortcuts": [id_hex(n, self.bits) for n in t.shortcuts],
            })
        return out

    def dump_topology(self, fp: IO[str]) -> None:
        for rec in self.topology_records():
            fp.write(json.dumps(rec) + "\n")


def build_overlay(n: int, bits: int = DEFAULT_BITS, seed: int = 0,
                  nat_mix: dict[str, float] | None = None, **kwargs) -> Overlay:
    """Join ``n`` nodes one after another, each bootstrapping off the first node."""
    ov = Overlay(bits=bits, seed=seed, **kwargs)
    kinds, weights = _nat_weights(nat_mix)
    first = None
    for i in range(n):
        nat = kinds[0] if i == 0 else ov.rng.choices(kinds, weights)[0]
        desc = ov.allocate(site=f"site{i % 5}", nat=nat)
        ov.join(desc, [first] if first is not None else [])
        first = desc.id if first is None else first
    return ov


def _nat_weights(nat_mix):
    if not nat_mix:
        return [NatClass.PUBLIC], [1.0]
    kinds = [NatClass(k) for k in nat_mix]
    weights = [float(nat_mix[k]) for k in nat_mix]
    # keep a public node first so relayed links always have somewhere to go
    if NatClass.PUBLIC in kinds:
        i = kinds.index(NatClass.PUBLIC)
        kinds.insert(0, kinds.pop(i))
        weights.insert(0, weights.pop(i))
    return kinds, weights
