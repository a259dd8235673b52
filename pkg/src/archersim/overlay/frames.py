"""Binary frame layouts carried by the transport.

DATA   kind=1 | ttl u16 | id_len u8 | msg_id u32 | src | dst | n u16 | path[n] | len u32 | payload
RELAY  kind=2 | id_len u8 | prev_hop | target | inner frame

All integers are big-endian; node ids are fixed-width ``id_len`` bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

DATA = 1
RELAY = 2
MAX_TTL = 0xFFFF

_DATA_HEAD = struct.Struct(">BHBI")
_RELAY_HEAD = struct.Struct(">BB")


class FrameError(ValueError):
    pass


@dataclass
class DataFrame:
    msg_id: int
    src: int
    dst: int
    payload: bytes
    path: list[int]
    ttl: int = MAX_TTL

    def encode(self, id_len: int) -> bytes:
        parts = [
            _DATA_HEAD.pack(DATA, self.ttl, id_len, self.msg_id),
            self.src.to_bytes(id_len, "big"),
            self.dst.to_bytes(id_len, "big"),
            struct.pack(">H", len(self.path)),
            *(p.to_bytes(id_len, "big") for p in self.path),
            struct.pack(">I", len(self.payload)),
            self.payload,
        ]
        return b"".join(parts)


@dataclass
class RelayFrame:
    prev_hop: int
    target: int
    inner: bytes

    def encode(self, id_len: int) -> bytes:
        return (_RELAY_HEAD.pack(RELAY, id_len) + self.prev_hop.to_bytes(id_len, "big")
                + self.target.to_bytes(id_len, "big") + self.inner)


def decode(data: bytes) -> DataFrame | RelayFrame:
    data = bytes(data)
    if not data:
        raise FrameError("empty frame")
    try:
        if data[0] == DATA:
            _, ttl, n, msg_id = _DATA_HEAD.unpack_from(data, 0)
            pos = _DATA_HEAD.size
            if n == 0:
                raise FrameError("zero id length")
            src = int.from_bytes(data[pos : pos + n], "big")
            dst = int.from_bytes(data[pos + n : pos + 2 * n], "big")
            pos += 2 * n
            (count,) = struct.unpack_from(">H", data, pos)
            pos += 2
            path = [int.from_bytes(data[pos + i * n : pos + (i + 1) * n], "big") for i in range(count)]
            pos += count * n
            (length,) = struct.unpack_from(">I", data, pos)
            pos += 4
            if pos + length != len(data):
                raise FrameError("payload length mismatch")
            return DataFrame(msg_id, src, dst, data[pos:], path, ttl)
        if data[0] == RELAY:
            _, n = _RELAY_HEAD.unpack_from(data, 0)
            pos = _RELAY_HEAD.size
            if n == 0 or len(data) < pos + 2 * n + 1:
                raise FrameError("truncated relay frame")
            prev = int.from_bytes(data[pos : pos + n], "big")
            target = int.from_bytes(data[pos + n : pos + 2 * n], "big")
            return RelayFrame(prev, target, data[pos + 2 * n :])
    except struct.error as exc:
        raise FrameError(str(exc)) from exc
    raise FrameError(f"unknown frame kind {data[0]}")
