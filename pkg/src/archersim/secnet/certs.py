"""Node identities and CA-issued certificates.

Certificates use a canonical big-endian byte layout (see
``docs/certificate-format.md``) so signatures are stable across builds::

    magic   4 bytes  b"ARCT"
    version u8       1
    subject u16 len + unsigned big-endian node id (minimal, >= 1 byte)
    pubkey  u16 len + raw public key
    issuer  u16 len + UTF-8 label
    expiry  u64      seconds
    sig     u16 len + signature over every preceding byte
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Union

from .primitives import DEFAULT_SUITE, CryptoSuite

MAGIC = b"ARCT"
VERSION = 1
DEFAULT_CA_LABEL = "archer-ca"
FOREVER = (1 << 63) - 1


class CertificateFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Identity:
    node_id: int | None
    public_key: bytes
    private_key: bytes = field(repr=False)
    label: str | None = None

    @classmethod
    def generate(cls, node_id=None, seed=None, label=None, suite: CryptoSuite = DEFAULT_SUITE):
        private, public = suite.signing_keypair(seed)
        return cls(node_id=node_id, public_key=public, private_key=private, label=label)

    def to_public_dict(self) -> dict:
        # private keys never leave the process
        return {"node_id": self.node_id, "public_key": self.public_key.hex(), "label": self.label}


def _encode_id(node_id: int) -> bytes:
    if node_id < 0:
        raise ValueError("node id must be non-negative")
    return node_id.to_bytes(max(1, (node_id.bit_length() + 7) // 8), "big")


def _field(data: bytes) -> bytes:
    if len(data) > 0xFFFF:
        raise ValueError("certificate field too long")
    return struct.pack(">H", len(data)) + data


@dataclass(frozen=True)
class Certificate:
    subject_node_id: int
    subject_public_key: bytes
    issuer: str
    expiry: int
    signature: bytes = b""

    def tbs_bytes(self) -> bytes:
        """The signed portion of the encoding."""
        return (
            MAGIC
            + bytes([VERSION])
            + _field(_encode_id(self.subject_node_id))
            + _field(self.subject_public_key)
            + _field(self.issuer.encode("utf-8"))
            + struct.pack(">Q", self.expiry)
        )

    def to_bytes(self) -> bytes:
        return self.tbs_bytes() + _field(self.signature)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        view = memoryview(bytes(data))
        pos = 0

        def take(n):
            nonlocal pos
            if pos + n > len(view):
                raise CertificateFormatError("truncated certificate")
            chunk = bytes(view[pos : pos + n])
            pos += n
            return chunk

        def var():
            (n,) = struct.unpack(">H", take(2))
            return take(n)

        if take(4) != MAGIC:
            raise CertificateFormatError("bad magic")
        if take(1)[0] != VERSION:
            raise CertificateFormatError("unsupported version")
        subject = var()
        if not subject or (len(subject) > 1 and subject[0] == 0):
            raise CertificateFormatError("non-canonical subject id")
        pubkey = var()
        try:
            issuer = var().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CertificateFormatError("issuer is not UTF-8") from exc
        (expiry,) = struct.unpack(">Q", take(8))
        signature = var()
        if pos != len(view):
            raise CertificateFormatError("trailing bytes")
        return cls(int.from_bytes(subject, "big"), pubkey, issuer, expiry, signature)


def issue_certificate(
    ca: Identity,
    subject_public_key: bytes,
    subject_id: int,
    expiry: int = FOREVER,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> Certificate:
    unsigned = Certificate(subject_id, bytes(subject_public_key), ca.label or DEFAULT_CA_LABEL, int(expiry))
    signature = suite.sign(ca.private_key, unsigned.tbs_bytes())
    return Certificate(unsigned.subject_node_id, unsigned.subject_public_key, unsigned.issuer, unsigned.expiry, signature)


def verify_certificate(
    ca_public_key: bytes,
    cert: Union[Certificate, bytes],
    now: float = 0,
    suite: CryptoSuite = DEFAULT_SUITE,
) -> bool:
    """True iff the signature checks under ``ca_public_key`` and ``now < expiry``.

    Malformed input (bad bytes, wrong types) yields False rather than raising.
    """
    try:
        if not isinstance(cert, Certificate):
            cert = Certificate.from_bytes(cert)
        tbs = cert.tbs_bytes()
    except (CertificateFormatError, ValueError, TypeError, AttributeError, struct.error):
        return False
    if not now < cert.expiry:
        return False
    return suite.verify(ca_public_key, cert.signature, tbs)


@dataclass(frozen=True)
class Credentials:
    """An identity together with the certificate vouching for it."""

    identity: Identity
    certificate: Certificate

    @property
    def node_id(self) -> int:
        return self.certificate.subject_node_id


def enroll(ca: Identity, node_id: int, seed=None, expiry: int = FOREVER, suite: CryptoSuite = DEFAULT_SUITE) -> Credentials:
    """Generate a key pair for ``node_id`` and have ``ca`` certify it."""
    ident = Identity.generate(node_id=node_id, seed=seed, suite=suite)
    return Credentials(ident, issue_certificate(ca, ident.public_key, node_id, expiry, suite=suite))
