"""Proof-of-authority block production with quorum signing.

The proposer for ``(height, round)`` is ``validators[(height + round) % n]``;
round 0 is tried first and every timed-out round hands the same height to
the next validator. A block finalizes once ``floor(2n/3) + 1`` validators
have signed its hash.

Honest validators sign at most one candidate per height. A validator that
already signed a candidate keeps re-signing that candidate only, and a
new proposer that knows of such a candidate re-proposes it instead of
building a fresh one; this is what lets a stalled height finish once
enough validators are back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from fcnledger.errors import BlockRejected, ConsensusError, ErrorCode, LedgerError
from fcnledger.keys import SigningKey
from fcnledger.ledger import (
    Block,
    ChainState,
    TransactionEnvelope,
    apply_transaction,
    execute_block,
)
from fcnledger.validators import ValidatorInfo, ValidatorSet

__all__ = [
    "Candidate",
    "ConsensusLogEntry",
    "EquivocationDetector",
    "ProposalRound",
    "Refusal",
    "Timeout",
    "Validator",
    "ValidatorInfo",
    "ValidatorSet",
    "Vote",
    "finalize",
    "prevalidate",
    "propose",
]


@dataclass(frozen=True)
class Candidate:
    block: Block
    rejected: tuple[tuple[TransactionEnvelope, ErrorCode], ...] = ()


def prevalidate(chain: ChainState, pending: Iterable[TransactionEnvelope]):
    """Dry-run ``pending`` in order; return (includable, [(tx, error code)])."""
    scratch = chain.state.copy()
    accepted, rejected = [], []
    for tx in pending:
        try:
            apply_transaction(scratch, tx)
        except LedgerError as exc:
            rejected.append((tx, exc.code))
        else:
            accepted.append(tx)
    return accepted, rejected


def propose(
    height: int,
    pending: Sequence[TransactionEnvelope],
    chain: ChainState,
    proposer: str,
    *,
    round: int = 0,
    timestamp: int = 0,
    check: bool = True,
) -> Candidate:
    """Build an unsigned candidate for ``height``.

    With ``check`` off the pending list is taken verbatim, which is how
    tests model a faulty proposer.
    """
    if proposer != chain.validators.designated_proposer(height, round):
        raise ConsensusError(ErrorCode.NOT_DESIGNATED_PROPOSER, f"{proposer} is not proposer for {height}/{round}")
    if height != chain.height + 1:
        raise ConsensusError(ErrorCode.BAD_HEIGHT, f"chain head is {chain.height}")
    if check:
        accepted, rejected = prevalidate(chain, pending)
    else:
        accepted, rejected = list(pending), []
    if not accepted:
        error = ConsensusError(ErrorCode.NO_PENDING_TRANSACTIONS, f"nothing to propose at {height}")
        error.rejected = tuple(rejected)
        raise error
    block = Block.build(height, chain.head.hash, accepted, proposer, timestamp)
    return Candidate(block, tuple(rejected))


@dataclass
class ProposalRound:
    height: int
    round: int
    designated_proposer: str
    collected_signatures: dict[str, bytes] = field(default_factory=dict)

    @classmethod
    def open(cls, validators: ValidatorSet, height: int, round: int = 0) -> "ProposalRound":
        return cls(height, round, validators.designated_proposer(height, round))

    def add(self, vote: "Vote") -> None:
        if vote.height == self.height:
            self.collected_signatures[vote.validator_id] = vote.signature


@dataclass(frozen=True)
class Timeout:
    height: int
    round: int
    signers: tuple[str, ...]
    next_proposer: str


def finalize(round_: ProposalRound, candidate: Block, validators: ValidatorSet) -> Block | Timeout:
    """Seal ``candidate`` if a quorum of valid signatures was collected."""
    valid, _ = validators.check_signatures(candidate.hash, round_.collected_signatures)
    if candidate.height == round_.height and len(valid) >= validators.quorum:
        return candidate.with_signatures({v: round_.collected_signatures[v] for v in valid})
    return Timeout(round_.height, round_.round, tuple(valid), validators.designated_proposer(round_.height, round_.round + 1))


@dataclass(frozen=True)
class Vote:
    validator_id: str
    height: int
    round: int
    block_hash: bytes
    signature: bytes


@dataclass(frozen=True)
class Refusal:
    validator_id: str
    height: int
    round: int
    block_hash: bytes
    reason: str


class Validator:
    """One validator's signing logic; its locks survive crashes."""

    def __init__(self, validator_id: str, key: SigningKey) -> None:
        self.validator_id = validator_id
        self.key = key
        self.locks: dict[int, Block] = {}
        self.seen: dict[int, dict[bytes, tuple[Block, set[str]]]] = {}

    def observe(self, block: Block, signers: Iterable[str] = ()) -> None:
        """Remember a candidate and who is known to have signed it."""
        entry = self.seen.setdefault(block.height, {}).setdefault(block.hash, (block, set()))
        entry[1].update(signers)

    def observe_vote(self, vote: Vote) -> None:
        for block_hash, (_, signers) in self.seen.get(vote.height, {}).items():
            if block_hash == vote.block_hash:
                signers.add(vote.validator_id)

    def known_candidate(self, height: int) -> Block | None:
        """The candidate a new proposer must reuse, if any."""
        if height in self.locks:
            return self.locks[height]
        options = [(b, s) for b, s in self.seen.get(height, {}).values() if s]
        if not options:
            return None
        options.sort(key=lambda bs: (-len(bs[1]), bs[0].hash))
        return options[0][0]

    def build_proposal(
        self, chain: ChainState, pending: Sequence[TransactionEnvelope], *, round: int, timestamp: int
    ) -> Candidate:
        height = chain.height + 1
        if self.validator_id != chain.validators.designated_proposer(height, round):
            raise ConsensusError(ErrorCode.NOT_DESIGNATED_PROPOSER, self.validator_id)
        reuse = self.known_candidate(height)
        if reuse is not None and reuse.prev_hash == chain.head.hash:
            return Candidate(reuse)
        return propose(height, pending, chain, self.validator_id, round=round, timestamp=timestamp)

    def review(self, chain: ChainState, candidate: Block, *, round: int, sender: str) -> Vote | Refusal:
        """Sign ``candidate`` or say why not."""
        height = candidate.height

        def refuse(reason: str) -> Refusal:
            return Refusal(self.validator_id, height, round, candidate.hash, reason)

        if sender != chain.validators.designated_proposer(height, round):
            return refuse(ErrorCode.NOT_DESIGNATED_PROPOSER.value)
        if candidate.proposer not in chain.validators.ids:
            return refuse("UnknownProposer")
        if height != chain.height + 1:
            return refuse(ErrorCode.BAD_HEIGHT.value)
        if candidate.prev_hash != chain.head.hash:
            return refuse(ErrorCode.BAD_PREV_HASH.value)
        locked = self.locks.get(height)
        if locked is not None and locked.hash != candidate.hash:
            return refuse("LockedOnOtherCandidate")
        if locked is None:
            try:
                execute_block(chain.state, candidate)
            except BlockRejected as exc:
                return refuse(exc.code.value)
            self.locks[height] = candidate
        self.observe(candidate, [self.validator_id])
        return Vote(self.validator_id, height, round, candidate.hash, self.key.sign(candidate.hash))


class EquivocationDetector:
    """Flags validators whose valid signatures cover two blocks at one height."""

    def __init__(self, validators: ValidatorSet) -> None:
        self.validators = validators
        self._signed: dict[tuple[str, int], set[bytes]] = {}

    def observe(self, vote: Vote) -> None:
        valid, _ = self.validators.check_signatures(vote.block_hash, {vote.validator_id: vote.signature})
        if valid:
            self._signed.setdefault((vote.validator_id, vote.height), set()).add(vote.block_hash)

    def offenders(self) -> list[tuple[str, int]]:
        return sorted(key for key, hashes in self._signed.items() if len(hashes) > 1)


@dataclass(frozen=True)
class ConsensusLogEntry:
    tick: int
    height: int
    round: int
    proposer: str
    signers: tuple[str, ...]
    outcome: str
    block_hash: bytes = b""

    def line(self) -> str:
        signers = ",".join(self.signers) or "-"
        block = self.block_hash.hex() if self.block_hash else "-"
        return (
            f"tick={self.tick} height={self.height} round={self.round} proposer={self.proposer} "
            f"signers={signers} outcome={self.outcome} block={block}"
        )
