"""Structured ring overlay: greedy routing, NAT-aware links, virtual-address tunnels."""

from .network import (
    DeliveryError,
    DeliveryReceipt,
    Link,
    NodeDescriptor,
    Overlay,
    OverlayNode,
    UncertifiedEndpoint,
    build_overlay,
    shortcut_budget,
)
from .ring import (
    DEFAULT_BITS,
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
    link_allowed,
    ring_distance,
    route_next_hop,
)
from .transport import InMemoryTransport, LoopbackTransport, Transport

__all__ = [
    "AddressPool", "DEFAULT_BITS", "DeliveryError", "DeliveryReceipt", "InMemoryTransport",
    "IsolatedNodeError", "JoinError", "Link", "LinkMode", "LoopbackTransport", "NatClass",
    "NoRouteToHost", "NodeDescriptor", "Overlay", "OverlayError", "OverlayNode", "RoutingTable",
    "Transport", "UncertifiedEndpoint", "build_overlay", "clockwise", "id_hex", "link_allowed",
    "ring_distance", "route_next_hop", "shortcut_budget",
]
