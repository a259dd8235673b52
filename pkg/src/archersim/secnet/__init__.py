"""PKI identities, certificates and sealed channels confining overlay traffic to members."""

from .certs import (
    DEFAULT_CA_LABEL,
    FOREVER,
    Certificate,
    CertificateFormatError,
    Credentials,
    Identity,
    enroll,
    issue_certificate,
    verify_certificate,
)
from .channel import (
    ChannelError,
    HandshakeRejected,
    Hello,
    ReplayError,
    SecureChannel,
    establish_channel,
)
from .primitives import DEFAULT_SUITE, AuthenticationError, CryptoSuite, StandardSuite

__all__ = [
    "AuthenticationError",
    "Certificate",
    "CertificateFormatError",
    "ChannelError",
    "Credentials",
    "CryptoSuite",
    "DEFAULT_CA_LABEL",
    "DEFAULT_SUITE",
    "FOREVER",
    "HandshakeRejected",
    "Hello",
    "Identity",
    "ReplayError",
    "SecureChannel",
    "StandardSuite",
    "enroll",
    "establish_channel",
    "issue_certificate",
    "verify_certificate",
]
