"""Signing and encryption key handling.

Signatures are Ed25519 (deterministic, 32-byte public keys) for every
account and validator. Encryption keys are X25519.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from fcnledger import codec

SIGNATURE_SCHEME = "ed25519"
SIGNATURE_SIZE = 64
PUBLIC_KEY_SIZE = 32

_RAW = (Encoding.Raw, PublicFormat.Raw)


def derive_secret(seed: int | str, label: str, purpose: str, index: int = 0) -> bytes:
    """32 deterministic secret bytes for (seed, label, purpose, index)."""
    return codec.digest(["fcn-key-material", str(seed), label, purpose, index])


@dataclass(frozen=True)
class SigningKey:
    secret: bytes = field(repr=False)

    @property
    def _key(self) -> Ed25519PrivateKey:
        return Ed25519PrivateKey.from_private_bytes(self.secret)

    @property
    def public(self) -> bytes:
        return self._key.public_key().public_bytes(*_RAW)

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


def x25519_public(secret: bytes) -> bytes:
    return X25519PrivateKey.from_private_bytes(secret).public_key().public_bytes(*_RAW)


def account_id_for(signing_public: bytes) -> str:
    """Account identifiers are the hex SHA-256 of the signing public key."""
    return codec.sha256(signing_public).hex()
