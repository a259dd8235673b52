"""Authenticated key establishment and sealed channels between certified nodes."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .certs import Certificate, Credentials, verify_certificate
from .primitives import DEFAULT_SUITE, AuthenticationError, CryptoSuite

HELLO_CONTEXT = b"archer-hello-v1"
CHANNEL_INFO = b"archer-channel-v1"
COUNTER = struct.Struct(">Q")


class ChannelError(Exception):
    pass


class HandshakeRejected(ChannelError):
    pass


class ReplayError(ChannelError):
    pass


def _id_bytes(node_id: int) -> bytes:
    return node_id.to_bytes(max(1, (node_id.bit_length() + 7) // 8), "big")


@dataclass(frozen=True)
class Hello:
    """One handshake flight: certificate, ephemeral key and a signature binding both."""

    claimed_id: int
    certificate: Certificate
    ephemeral_public: bytes
    signature: bytes


def _hello_transcript(sender: int, receiver: int, eph: bytes, peer_eph: bytes) -> bytes:
    return b"|".join([HELLO_CONTEXT, _id_bytes(sender), _id_bytes(receiver), eph, peer_eph])


def make_hello(creds: Credentials, claimed_id: int, peer_id: int, eph_public: bytes, peer_eph: bytes = b"",
               suite: CryptoSuite = DEFAULT_SUITE) -> Hello:
    sig = suite.sign(creds.identity.private_key, _hello_transcript(claimed_id, peer_id, eph_public, peer_eph))
    return Hello(claimed_id, creds.certificate, eph_public, sig)


def check_hello(hello: Hello, expected_peer_eph: bytes, my_id: int, ca_public_key: bytes, now: float, suite: CryptoSuite = DEFAULT_SUITE) -> None:
    cert = hello.certificate
    if not verify_certificate(ca_public_key, cert, now, suite=suite):
        raise HandshakeRejected(f"certificate for node {hello.claimed_id:x} does not verify")
    if cert.subject_node_id != hello.claimed_id:
        raise HandshakeRejected("certificate subject does not match claimed node id")
    transcript = _hello_transcript(hello.claimed_id, my_id, hello.ephemeral_public, expected_peer_eph)
    if not suite.verify(cert.subject_public_key, hello.signature, transcript):
        raise HandshakeRejected("handshake signature invalid")


@dataclass
class SecureChannel:
    """One endpoint's view of an established channel.

    ``peer_a`` is the local node, ``peer_b`` the remote one.
    """

    peer_a: int
    peer_b: int
    session_key: bytes = field(repr=False)
    send_counter: int = 0
    recv_counter: int = 0
    suite: CryptoSuite = field(default=DEFAULT_SUITE, repr=False, compare=False)
    _send_key: bytes = field(default=b"", repr=False, compare=False)
    _recv_key: bytes = field(default=b"", repr=False, compare=False)

    def __post_init__(self):
        self._send_key = self._direction_key(self.peer_a, self.peer_b)
        self._recv_key = self._direction_key(self.peer_b, self.peer_a)

    def _direction_key(self, sender: int, receiver: int) -> bytes:
        info = CHANNEL_INFO + b"|dir|" + _id_bytes(sender) + b">" + _id_bytes(receiver)
        return self.suite.derive(self.session_key, b"", info)

    @staticmethod
    def _aad(sender: int, receiver: int, counter: bytes) -> bytes:
        return _id_bytes(sender) + b">" + _id_bytes(receiver) + b"#" + counter

    def seal(self, plaintext: bytes) -> bytes:
        self.send_counter += 1
        ctr = COUNTER.pack(self.send_counter)
        nonce = b"\x00\x00\x00\x00" + ctr
        return ctr + self.suite.seal(self._send_key, nonce, bytes(plaintext), self._aad(self.peer_a, self.peer_b, ctr))

    def open(self, ciphertext: bytes) -> bytes:
        ciphertext = bytes(ciphertext)
        if len(ciphertext) < COUNTER.size:
            raise AuthenticationError("ciphertext too short")
        ctr = ciphertext[: COUNTER.size]
        nonce = b"\x00\x00\x00\x00" + ctr
        # authenticate before looking at the counter so any tampering reports as such
        plaintext = self.suite.open(self._recv_key, nonce, ciphertext[COUNTER.size :], self._aad(self.peer_b, self.peer_a, ctr))
        (counter,) = COUNTER.unpack(ctr)
        if counter <= self.recv_counter:
            raise ReplayError(f"counter {counter} not above last accepted {self.recv_counter}")
        self.recv_counter = counter
        return plaintext


def establish_channel(
    a: Credentials,
    b: Credentials,
    ca_public_key: bytes,
    now: float = 0,
    claimed_a: int | None = None,
    claimed_b: int | None = None,
    eph_seeds: tuple[bytes, bytes] | None = None,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> tuple[SecureChannel, SecureChannel]:
    """Run the two-flight handshake between ``a`` and ``b``.

    Returns the channel as seen from ``a`` and from ``b``.  ``claimed_a`` and
    ``claimed_b`` are the ids each side asserts on the wire (default: the id
    in its own certificate).
    """
    id_a = a.node_id if claimed_a is None else claimed_a
    id_b = b.node_id if claimed_b is None else claimed_b
    seed_a, seed_b = eph_seeds if eph_seeds is not None else (None, None)
    eph_a_priv, eph_a_pub = suite.kex_keypair(seed_a)
    eph_b_priv, eph_b_pub = suite.kex_keypair(seed_b)

    hello_a = make_hello(a, id_a, id_b, eph_a_pub, suite=suite)
    check_hello(hello_a, b"", id_b, ca_public_key, now, suite)

    hello_b = make_hello(b, id_b, id_a, eph_b_pub, eph_a_pub, suite=suite)
    check_hello(hello_b, eph_a_pub, id_a, ca_public_key, now, suite)

    salt = eph_a_pub + eph_b_pub
    info = CHANNEL_INFO + b"|" + _id_bytes(id_a) + b"|" + _id_bytes(id_b)
    key_a = suite.derive(suite.kex(eph_a_priv, eph_b_pub), salt, info)
    key_b = suite.derive(suite.kex(eph_b_priv, eph_a_pub), salt, info)
    return (
        SecureChannel(id_a, id_b, key_a, suite=suite),
        SecureChannel(id_b, id_a, key_b, suite=suite),
    )
