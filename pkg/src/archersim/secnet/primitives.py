"""Pluggable signature, key-agreement and AEAD primitives.

``DEFAULT_SUITE`` binds to Ed25519, X25519, HKDF-SHA256 and
ChaCha20-Poly1305 from the ``cryptography`` package.  Anything exposing the
same methods can be passed where a suite is accepted.
"""

from __future__ import annotations

import os
from typing import Protocol

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


class AuthenticationError(Exception):
    """Ciphertext failed integrity verification."""


class CryptoSuite(Protocol):
    name: str

    def signing_keypair(self, seed: bytes | None = None) -> tuple[bytes, bytes]: ...
    def sign(self, private_key: bytes, message: bytes) -> bytes: ...
    def verify(self, public_key: bytes, signature: bytes, message: bytes) -> bool: ...
    def kex_keypair(self, seed: bytes | None = None) -> tuple[bytes, bytes]: ...
    def kex(self, private_key: bytes, peer_public: bytes) -> bytes: ...
    def derive(self, secret: bytes, salt: bytes, info: bytes, length: int = 32) -> bytes: ...
    def seal(self, key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> bytes: ...
    def open(self, key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes: ...


class StandardSuite:
    name = "ed25519-x25519-hkdf-chacha20poly1305"
    nonce_size = 12

    def signing_keypair(self, seed=None):
        seed = os.urandom(32) if seed is None else seed
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        return seed, sk.public_key().public_bytes(_RAW, _RAW_PUB)

    def sign(self, private_key, message):
        return Ed25519PrivateKey.from_private_bytes(private_key).sign(message)

    def verify(self, public_key, signature, message):
        try:
            Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True

    def kex_keypair(self, seed=None):
        seed = os.urandom(32) if seed is None else seed
        sk = X25519PrivateKey.from_private_bytes(seed)
        return seed, sk.public_key().public_bytes(_RAW, _RAW_PUB)

    def kex(self, private_key, peer_public):
        sk = X25519PrivateKey.from_private_bytes(private_key)
        return sk.exchange(X25519PublicKey.from_public_bytes(peer_public))

    def derive(self, secret, salt, info, length=32):
        return HKDF(algorithm=hashes.SHA256(), length=length, salt=salt, info=info).derive(secret)

    def seal(self, key, nonce, plaintext, aad):
        return ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)

    def open(self, key, nonce, ciphertext, aad):
        try:
            return ChaCha20Poly1305(key).decrypt(nonce, ciphertext, aad)
        except InvalidTag as exc:
            raise AuthenticationError("ciphertext failed authentication") from exc


DEFAULT_SUITE = StandardSuite()
