"""Identifier ring arithmetic, routing tables and greedy next-hop selection."""

from __future__ import annotations

import enum
import hashlib
import ipaddress
from dataclasses import dataclass, field
from typing import Iterable, Optional

DEFAULT_BITS = 160
DEFAULT_NEAR = 2
DEFAULT_PREFIX = "10.128.0.0/9"


class OverlayError(Exception):
    """Base class for overlay failures."""


class IsolatedNodeError(OverlayError):
    pass


class NoRouteToHost(OverlayError):
    pass


class JoinError(OverlayError):
    pass


class NatClass(str, enum.Enum):
    PUBLIC = "public"
    CONE = "cone"
    SYMMETRIC = "symmetric"


class LinkMode(str, enum.Enum):
    DIRECT = "direct"
    RELAYED = "relayed"


def link_allowed(a: NatClass, b: NatClass) -> LinkMode:
    """Connection mode the NAT policy grants between two endpoints.

    Either side Public, or both Cone (hole punching assumed to succeed),
    gives a direct link; anything involving a Symmetric NAT without a Public
    peer has to be relayed.
    """
    a, b = NatClass(a), NatClass(b)
    if a is NatClass.PUBLIC or b is NatClass.PUBLIC:
        return LinkMode.DIRECT
    if a is NatClass.CONE and b is NatClass.CONE:
        return LinkMode.DIRECT
    return LinkMode.RELAYED


def check_id(value: int, bits: int = DEFAULT_BITS) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"node id must be an int, got {type(value).__name__}")
    if not 0 <= value < (1 << bits):
        raise ValueError(f"node id {value} outside ring of width {bits}")
    return value


def ring_distance(a: int, b: int, bits: int = DEFAULT_BITS) -> int:
    size = 1 << bits
    d = (a - b) % size
    return min(d, size - d)


def clockwise(a: int, b: int, bits: int = DEFAULT_BITS) -> int:
    """Distance travelling from ``a`` to ``b`` in increasing-id direction."""
    return (b - a) % (1 << bits)


def key_for(data: bytes | str, bits: int = DEFAULT_BITS) -> int:
    """Hash arbitrary data onto the ring."""
    if isinstance(data, str):
        data = data.encode()
    if not 1 <= bits <= 512:
        raise ValueError("ring width must be within 1..512 bits")
    return int.from_bytes(hashlib.sha512(data).digest(), "big") >> (512 - bits)


def id_hex(value: int, bits: int = DEFAULT_BITS) -> str:
    return format(value, f"0{(bits + 3) // 4}x")


@dataclass
class RoutingTable:
    """Connections held by one node.

    ``successors`` are ordered by clockwise distance from the owner and
    ``predecessors`` by counter-clockwise distance, nearest first.
    """

    owner: int
    bits: int = DEFAULT_BITS
    near: int = DEFAULT_NEAR
    successors: list[int] = field(default_factory=list)
    predecessors: list[int] = field(default_factory=list)
    shortcuts: list[int] = field(default_factory=list)

    def entries(self) -> list[int]:
        seen: dict[int, None] = {}
        for n in (*self.successors, *self.predecessors, *self.shortcuts):
            seen.setdefault(n, None)
        return list(seen)

    def near_set(self) -> set[int]:
        return set(self.successors) | set(self.predecessors)

    def is_empty(self) -> bool:
        return not (self.successors or self.predecessors or self.shortcuts)

    def rebuild_near(self, candidates: Iterable[int]) -> None:
        """Keep the ``near`` closest candidates on each side of the owner."""
        pool = {c for c in candidates if c != self.owner}
        self.successors = sorted(pool, key=lambda c: clockwise(self.owner, c, self.bits))[: self.near]
        self.predecessors = sorted(pool, key=lambda c: clockwise(c, self.owner, self.bits))[: self.near]
        near = self.near_set()
        self.shortcuts = [s for s in self.shortcuts if s not in near]

    def add_shortcut(self, node: int) -> bool:
        if node == self.owner or node in self.shortcuts or node in self.near_set():
            return False
        self.shortcuts.append(node)
        return True

    def drop(self, dead: set[int]) -> bool:
        before = (len(self.successors), len(self.predecessors), len(self.shortcuts))
        self.successors = [n for n in self.successors if n not in dead]
        self.predecessors = [n for n in self.predecessors if n not in dead]
        self.shortcuts = [n for n in self.shortcuts if n not in dead]
        return before != (len(self.successors), len(self.predecessors), len(self.shortcuts))

    def check(self) -> None:
        for name in ("successors", "predecessors", "shortcuts"):
            lst = getattr(self, name)
            if self.owner in lst:
                raise AssertionError(f"{name} contains the owner")
            if len(set(lst)) != len(lst):
                raise AssertionError(f"{name} has duplicates")
        if self.successors != sorted(self.successors, key=lambda c: clockwise(self.owner, c, self.bits)):
            raise AssertionError("successors out of order")
        if self.predecessors != sorted(self.predecessors, key=lambda c: clockwise(c, self.owner, self.bits)):
            raise AssertionError("predecessors out of order")


def route_next_hop(table: RoutingTable, dest: int) -> Optional[int]:
    """Greedy next hop towards ``dest``; ``None`` means deliver to self.

    The entry closest to ``dest`` is chosen (smaller id wins a tie) and only
    if it is strictly closer than the owner.
    """
    if dest == table.owner:
        return None
    entries = table.entries()
    if not entries:
        raise IsolatedNodeError(f"node {id_hex(table.owner, table.bits)} has no connections")
    bits = table.bits
    best = min(entries, key=lambda n: (ring_distance(n, dest, bits), n))
    if ring_distance(best, dest, bits) < ring_distance(table.owner, dest, bits):
        return best
    return None


@dataclass(frozen=True)
class AddressPool:
    """Sequential allocator of virtual IPv4 addresses inside a prefix."""

    prefix: ipaddress.IPv4Network

    @classmethod
    def from_string(cls, prefix: str = DEFAULT_PREFIX) -> "AddressPool":
        return cls(ipaddress.IPv4Network(prefix))

    def nth(self, index: int) -> ipaddress.IPv4Address:
        # skip the network address; the broadcast address is never handed out
        if not 0 <= index < self.prefix.num_addresses - 2:
            raise OverlayError(f"virtual address pool {self.prefix} exhausted")
        return self.prefix.network_address + 1 + index

    def __contains__(self, vip: ipaddress.IPv4Address) -> bool:
        return ipaddress.IPv4Address(vip) in self.prefix
