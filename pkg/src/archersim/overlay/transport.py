"""Point-to-point transports: send bytes to a node id, receive through a callback.

``InMemoryTransport`` is a deterministic FIFO pumped by the caller and is
what the simulator uses.  ``LoopbackTransport`` moves the same bytes over
UDP sockets on 127.0.0.1 with one receiver thread per node.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from collections import deque
from typing import Callable, Protocol

log = logging.getLogger(__name__)

Handler = Callable[[int, bytes], None]


class TransportError(Exception):
    pass


class Transport(Protocol):
    def register(self, node_id: int, handler: Handler) -> None: ...
    def unregister(self, node_id: int) -> None: ...
    def send(self, src: int, dst: int, data: bytes) -> None: ...
    def run_until_idle(self) -> None: ...
    def close(self) -> None: ...


class InMemoryTransport:
    def __init__(self, latency: float = 0.0):
        self.latency = latency
        self.clock = 0.0
        self.delivered = 0
        self.dropped = 0
        self._handlers: dict[int, Handler] = {}
        self._queue: deque[tuple[int, int, bytes]] = deque()

    def register(self, node_id, handler):
        self._handlers[node_id] = handler

    def unregister(self, node_id):
        self._handlers.pop(node_id, None)

    def send(self, src, dst, data):
        self._queue.append((src, dst, bytes(data)))

    def run_until_idle(self):
        while self._queue:
            src, dst, data = self._queue.popleft()
            self.clock += self.latency
            handler = self._handlers.get(dst)
            if handler is None:
                self.dropped += 1
                continue
            self.delivered += 1
            handler(src, data)

    def close(self):
        self._queue.clear()
        self._handlers.clear()


class LoopbackTransport:
    """UDP on the loopback interface; datagrams are ``src_len u8 | src | data``."""

    MAX_DATAGRAM = 65000

    def __init__(self, host: str = "127.0.0.1", timeout: float = 10.0):
        self.host = host
        self.timeout = timeout
        self.delivered = 0
        self.dropped = 0
        self._socks: dict[int, socket.socket] = {}
        self._addrs: dict[int, tuple[str, int]] = {}
        self._threads: dict[int, threading.Thread] = {}
        self._inflight = 0
        self._cond = threading.Condition()
        self._closing = False

    def register(self, node_id, handler):
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        sock.bind((self.host, 0))
        sock.settimeout(0.2)
        self._socks[node_id] = sock
        self._addrs[node_id] = sock.getsockname()
        t = threading.Thread(target=self._serve, args=(node_id, sock, handler), daemon=True,
                             name=f"node-{node_id:x}"[:32])
        self._threads[node_id] = t
        t.start()

    def unregister(self, node_id):
        sock = self._socks.pop(node_id, None)
        self._addrs.pop(node_id, None)
        t = self._threads.pop(node_id, None)
        if sock is not None:
            sock.close()
        if t is not None:
            t.join(timeout=1.0)

    def _done(self):
        with self._cond:
            self._inflight -= 1
            self._cond.notify_all()

    def _serve(self, node_id, sock, handler):
        while not self._closing:
            try:
                datagram, _ = sock.recvfrom(self.MAX_DATAGRAM + 64)
            except socket.timeout:
                continue
            except OSError:
                return
            try:
                n = datagram[0]
                src = int.from_bytes(datagram[1 : 1 + n], "big")
                self.delivered += 1
                handler(src, datagram[1 + n :])
            except Exception:  # a bad frame must not kill the node thread
                log.exception("handler failed on node %x", node_id)
            finally:
                self._done()

    def send(self, src, dst, data):
        addr = self._addrs.get(dst)
        sock = self._socks.get(src)
        if addr is None or sock is None:
            self.dropped += 1
            return
        n = max(1, (src.bit_length() + 7) // 8)
        datagram = struct.pack(">B", n) + src.to_bytes(n, "big") + bytes(data)
        if len(datagram) > self.MAX_DATAGRAM:
            raise TransportError(f"datagram of {len(datagram)} bytes exceeds loopback limit")
        with self._cond:
            self._inflight += 1
        sock.sendto(datagram, addr)

    def run_until_idle(self):
        with self._cond:
            if not self._cond.wait_for(lambda: self._inflight == 0, timeout=self.timeout):
                raise TransportError(f"{self._inflight} datagrams still in flight after {self.timeout}s")

    def close(self):
        self._closing = True
        for node_id in list(self._socks):
            self.unregister(node_id)
