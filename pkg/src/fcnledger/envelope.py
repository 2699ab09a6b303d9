"""Multi-recipient hybrid envelopes for confidential payloads.

A fresh 32-byte content key encrypts the payload with ChaCha20-Poly1305.
The content key is wrapped once per recipient: an ephemeral X25519 key
agrees a secret with the recipient's *authorized* registry key, HKDF
turns it into a key-encryption key, and the content key is sealed under
that. Each wrap is ``ephemeral_public (32) || sealed_content_key (48)``.

The sorted recipient list is bound into the payload's associated data,
so adding, dropping or renaming a wrap breaks decryption for everyone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Callable, Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from fcnledger import codec
from fcnledger.errors import EnvelopeError, ErrorCode
from fcnledger.keys import x25519_public
from fcnledger.pki import KeyRecord, KeyStatus

TAG_SIZE = 16
WRAP_SIZE = 32 + 32 + TAG_SIZE
_NONCE = bytes(12)

RandBytes = Callable[[int], bytes]


@dataclass(frozen=True)
class EncryptedEnvelope:
    recipient_wraps: Mapping[str, bytes]
    ciphertext: bytes
    auth_tag: bytes

    @property
    def recipients(self) -> tuple[str, ...]:
        return tuple(sorted(self.recipient_wraps))

    def to_record(self) -> dict:
        return {
            "authTag": self.auth_tag,
            "ciphertext": self.ciphertext,
            "recipientWraps": {k: self.recipient_wraps[k] for k in self.recipients},
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "EncryptedEnvelope":
        return cls(
            recipient_wraps=dict(sorted(record["recipientWraps"].items())),
            ciphertext=bytes(record["ciphertext"]),
            auth_tag=bytes(record["authTag"]),
        )


def _recipients_aad(recipients) -> bytes:
    return codec.encode(["fcn-envelope", sorted(recipients)])


def _kek(shared: bytes, recipient: str, ephemeral_public: bytes, recipient_public: bytes) -> bytes:
    info = codec.encode(["fcn-wrap", recipient, ephemeral_public, recipient_public])
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=info).derive(shared)


def authorized_key(directory: Mapping[str, KeyRecord], account: str) -> bytes:
    """Return the account's usable encryption key or raise the seal error."""
    record = directory.get(account)
    if record is None:
        raise EnvelopeError(ErrorCode.RECIPIENT_KEY_NOT_AUTHORIZED, f"{account} has no key record")
    if record.status is KeyStatus.REVOKED:
        raise EnvelopeError(ErrorCode.RECIPIENT_KEY_REVOKED, f"{account} key revoked")
    if record.status is not KeyStatus.AUTHORIZED:
        raise EnvelopeError(ErrorCode.RECIPIENT_KEY_NOT_AUTHORIZED, f"{account} key is {record.status.value}")
    return record.key_bytes


def seal_envelope(
    plaintext: bytes,
    recipients,
    key_directory: Mapping[str, KeyRecord],
    randbytes: RandBytes | None = None,
) -> EncryptedEnvelope:
    """Encrypt ``plaintext`` so exactly ``recipients`` can open it.

    ``key_directory`` maps account ids to their current key record, as
    seen at the sealing height. Pass a seeded ``randbytes`` for
    reproducible envelopes.
    """
    randbytes = randbytes or os.urandom
    recipients = sorted(set(recipients))
    if not recipients:
        raise ValueError("envelope needs at least one recipient")
    public_keys = {r: authorized_key(key_directory, r) for r in recipients}

    content_key = randbytes(32)
    sealed = ChaCha20Poly1305(content_key).encrypt(_NONCE, bytes(plaintext), _recipients_aad(recipients))

    wraps = {}
    for recipient in recipients:
        ephemeral = X25519PrivateKey.from_private_bytes(randbytes(32))
        ephemeral_public = x25519_public(ephemeral.private_bytes_raw())
        shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(public_keys[recipient]))
        kek = _kek(shared, recipient, ephemeral_public, public_keys[recipient])
        wrapped = ChaCha20Poly1305(kek).encrypt(_NONCE, content_key, recipient.encode("utf-8"))
        wraps[recipient] = ephemeral_public + wrapped
    return EncryptedEnvelope(wraps, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def open_envelope(envelope: EncryptedEnvelope, account: str, private_key: bytes) -> bytes:
    wrap = envelope.recipient_wraps.get(account)
    if wrap is None:
        raise EnvelopeError(ErrorCode.NOT_A_RECIPIENT, account)
    if len(wrap) != WRAP_SIZE or len(private_key) != 32:
        raise EnvelopeError(ErrorCode.INTEGRITY_FAILURE, "malformed wrap or key")
    ephemeral_public, wrapped = wrap[:32], wrap[32:]
    try:
        own = X25519PrivateKey.from_private_bytes(private_key)
        own_public = own.public_key().public_bytes_raw()
        shared = own.exchange(X25519PublicKey.from_public_bytes(ephemeral_public))
        kek = _kek(shared, account, ephemeral_public, own_public)
        content_key = ChaCha20Poly1305(kek).decrypt(_NONCE, wrapped, account.encode("utf-8"))
        return ChaCha20Poly1305(content_key).decrypt(
            _NONCE, envelope.ciphertext + envelope.auth_tag, _recipients_aad(envelope.recipient_wraps)
        )
    except (InvalidTag, ValueError) as exc:
        raise EnvelopeError(ErrorCode.INTEGRITY_FAILURE, "authentication failed") from exc
