"""PKI registry contract: key publication, vetting, rotation and revocation.

Lifecycle of one record::

    Published --authorize--> Authorized --revoke--> Revoked
        |  ^                     |
        |  +-------update--------+
        +--------revoke-------------------------> Revoked

``update`` on a Published record keeps it Published (version + 1).
Revoked is terminal; the owner may start a fresh record afterwards.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from fcnledger import codec
from fcnledger.errors import ContractError, ErrorCode
from fcnledger.rbac import Account, Function, require_access

KEY_SIZE = 32


class KeyStatus(str, Enum):
    PUBLISHED = "Published"
    AUTHORIZED = "Authorized"
    REVOKED = "Revoked"


# (from, to); None is "no live record"
PERMITTED_TRANSITIONS = frozenset(
    {
        (None, KeyStatus.PUBLISHED),
        (KeyStatus.PUBLISHED, KeyStatus.AUTHORIZED),
        (KeyStatus.PUBLISHED, KeyStatus.REVOKED),
        (KeyStatus.AUTHORIZED, KeyStatus.REVOKED),
        (KeyStatus.AUTHORIZED, KeyStatus.PUBLISHED),
        (KeyStatus.PUBLISHED, KeyStatus.PUBLISHED),
    }
)


@dataclass
class KeyRecord:
    owner: str
    key_bytes: bytes
    status: KeyStatus
    version: int = 1
    history: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "history": [dict(h) for h in self.history],
            "keyBytes": self.key_bytes,
            "owner": self.owner,
            "status": self.status.value,
            "version": self.version,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "KeyRecord":
        return cls(
            owner=record["owner"],
            key_bytes=bytes(record["keyBytes"]),
            status=KeyStatus(record["status"]),
            version=record["version"],
            history=[dict(h) for h in record["history"]],
        )

    def _log(self, tx_hash: bytes) -> None:
        self.history.append(
            {
                "keyDigest": codec.sha256(self.key_bytes),
                "status": self.status.value,
                "txHash": tx_hash,
                "version": self.version,
            }
        )


def history_digest_chain(history: list[dict]) -> list[bytes]:
    """Running digests over a record's history; each entry extends the last."""
    chain, running = [], codec.ZERO_DIGEST
    for entry in history:
        running = codec.digest([running, entry])
        chain.append(running)
    return chain


def current_record(keys: Mapping[str, list[KeyRecord]], owner: str) -> KeyRecord | None:
    records = keys.get(owner)
    return records[-1] if records else None


def key_directory(keys: Mapping[str, list[KeyRecord]]) -> dict[str, KeyRecord]:
    """Owner -> current record, the view envelopes are sealed against."""
    return {owner: records[-1] for owner, records in keys.items() if records}


def _check_key(key_bytes: bytes) -> bytes:
    if not isinstance(key_bytes, (bytes, bytearray)) or len(key_bytes) != KEY_SIZE:
        raise ContractError(ErrorCode.INVALID_ARGUMENT, f"key must be {KEY_SIZE} bytes")
    return bytes(key_bytes)


def publish_key(keys, accounts: Mapping[str, Account], caller: str, key_bytes: bytes, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.PUBLISH_KEY)
    key_bytes = _check_key(key_bytes)
    record = current_record(keys, caller)
    if record is not None and record.status is not KeyStatus.REVOKED:
        raise ContractError(ErrorCode.ACTIVE_KEY_EXISTS, caller)
    fresh = KeyRecord(owner=caller, key_bytes=key_bytes, status=KeyStatus.PUBLISHED)
    fresh._log(tx_hash)
    keys.setdefault(caller, []).append(fresh)
    return [("KeyPublished", {"owner": caller, "version": 1})]


def update_key(keys, accounts: Mapping[str, Account], caller: str, new_key_bytes: bytes, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.UPDATE_KEY)
    new_key_bytes = _check_key(new_key_bytes)
    record = current_record(keys, caller)
    if record is None:
        raise ContractError(ErrorCode.NO_ACTIVE_KEY, caller)
    if record.status is KeyStatus.REVOKED:
        raise ContractError(ErrorCode.KEY_REVOKED, caller)
    record.key_bytes = new_key_bytes
    record.version += 1
    record.status = KeyStatus.PUBLISHED
    record._log(tx_hash)
    return [("KeyUpdated", {"owner": caller, "version": record.version})]


def retrieve_key(keys, accounts: Mapping[str, Account], caller: str, owner: str) -> KeyRecord:
    """Current record for ``owner``, revoked ones included."""
    require_access(accounts, caller, Function.RETRIEVE_KEY)
    record = current_record(keys, owner)
    if record is None:
        raise ContractError(ErrorCode.NO_RECORD_FOR_OWNER, owner)
    return copy.deepcopy(record)


def revoke_key(keys, accounts: Mapping[str, Account], caller: str, owner: str, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.REVOKE_KEY)
    record = current_record(keys, owner)
    if record is None:
        raise ContractError(ErrorCode.NO_RECORD_FOR_OWNER, owner)
    if record.status is KeyStatus.REVOKED:
        raise ContractError(ErrorCode.ALREADY_REVOKED, owner)
    record.status = KeyStatus.REVOKED
    record._log(tx_hash)
    return [("KeyRevoked", {"owner": owner, "version": record.version})]


def authorize_key(keys, accounts: Mapping[str, Account], caller: str, owner: str, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.AUTHORIZE_KEY)
    record = current_record(keys, owner)
    if record is None:
        raise ContractError(ErrorCode.NO_RECORD_FOR_OWNER, owner)
    if record.status is not KeyStatus.PUBLISHED:
        raise ContractError(ErrorCode.NOT_PUBLISHED_STATE, f"{owner} is {record.status.value}")
    record.status = KeyStatus.AUTHORIZED
    record._log(tx_hash)
    return [("KeyAuthorized", {"owner": owner, "version": record.version})]
