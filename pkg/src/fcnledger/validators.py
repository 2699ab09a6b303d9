"""Validator set shared by the ledger's quorum check and the consensus engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from fcnledger.keys import verify_signature


@dataclass(frozen=True)
class ValidatorInfo:
    validator_id: str
    public_key: bytes


@dataclass(frozen=True)
class ValidatorSet:
    validators: tuple[ValidatorInfo, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "validators", tuple(self.validators))
        if not self.validators:
            raise ValueError("validator set must not be empty")
        ids = [v.validator_id for v in self.validators]
        if len(set(ids)) != len(ids):
            raise ValueError("validator ids must be unique")

    def __len__(self) -> int:
        return len(self.validators)

    @property
    def quorum(self) -> int:
        return 2 * len(self.validators) // 3 + 1

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(v.validator_id for v in self.validators)

    def key_of(self, validator_id: str) -> bytes | None:
        for v in self.validators:
            if v.validator_id == validator_id:
                return v.public_key
        return None

    def designated_proposer(self, height: int, round: int = 0) -> str:
        """Round-robin by height; each timed-out round moves to the next validator."""
        return self.validators[(height + round) % len(self.validators)].validator_id

    def check_signatures(self, message: bytes, signatures: Mapping[str, bytes]) -> tuple[list[str], list[str]]:
        """Split signers into (valid, invalid-or-unknown)."""
        valid, invalid = [], []
        for validator_id in sorted(signatures):
            key = self.key_of(validator_id)
            if key is not None and verify_signature(key, message, signatures[validator_id]):
                valid.append(validator_id)
            else:
                invalid.append(validator_id)
        return valid, invalid

    def to_record(self) -> list[dict]:
        return [{"id": v.validator_id, "publicKey": v.public_key} for v in self.validators]

    @classmethod
    def from_record(cls, record) -> "ValidatorSet":
        return cls(tuple(ValidatorInfo(r["id"], bytes(r["publicKey"])) for r in record))
