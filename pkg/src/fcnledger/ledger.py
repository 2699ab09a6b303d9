"""Hash-chained, validator-signed blocks of signed transactions.

Hashing rules (all digests are SHA-256 over :func:`fcnledger.codec.encode`):

* transaction hash: the full transaction record, signature included
* transaction signature: Ed25519 over the record *without* ``signature``
* ``txDigest``: ``["fcn-txs", [tx hash, ...]]`` in block order
* block hash: the header ``{height, prevHash, proposer, timestamp, txDigest}``;
  validators sign the block hash, and the next block's ``prevHash`` is it

Chain files hold one block per line as compact JSON with a fixed field
order and lowercase hex for every byte field. A line is only accepted if
re-serializing the parsed block reproduces it exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

from fcnledger import codec
from fcnledger.envelope import EncryptedEnvelope
from fcnledger.errors import BlockRejected, ContractError, ErrorCode, LedgerError
from fcnledger.keys import SigningKey, verify_signature
from fcnledger.policy import install_policy
from fcnledger.rbac import Account, Function
from fcnledger.state import Event, WorldState, execute
from fcnledger.validators import ValidatorSet


class TxInvalid(LedgerError):
    """Ledger-level transaction failure (signature, nonce, encoding)."""


@dataclass(frozen=True)
class TransactionEnvelope:
    nonce: int
    caller: str
    function: str
    public_fields: bytes
    confidential_payload: EncryptedEnvelope | None
    timestamp: int
    signature: bytes = b""

    @classmethod
    def create(
        cls,
        key: SigningKey,
        *,
        nonce: int,
        caller: str,
        function: Function | str,
        args: Mapping[str, Any] | None = None,
        payload: EncryptedEnvelope | None = None,
        timestamp: int = 0,
    ) -> "TransactionEnvelope":
        function = Function(function).value
        public = codec.encode({**(args or {}), "function": function})
        unsigned = cls(nonce, caller, function, public, payload, timestamp)
        return unsigned.signed(key)

    def signed(self, key: SigningKey) -> "TransactionEnvelope":
        return TransactionEnvelope(
            self.nonce, self.caller, self.function, self.public_fields,
            self.confidential_payload, self.timestamp, key.sign(self.signing_bytes()),
        )

    def _record(self, with_signature: bool) -> dict:
        record = {
            "caller": self.caller,
            "confidentialPayload": None if self.confidential_payload is None else self.confidential_payload.to_record(),
            "function": self.function,
            "nonce": self.nonce,
            "publicFields": self.public_fields,
            "timestamp": self.timestamp,
        }
        if with_signature:
            record["signature"] = self.signature
        return record

    def signing_bytes(self) -> bytes:
        return codec.encode(["fcn-tx", self._record(False)])

    @cached_property
    def hash(self) -> bytes:
        return codec.digest(self._record(True))

    @cached_property
    def args(self) -> dict:
        """Decoded public fields; raises TxInvalid when they do not decode to a record."""
        try:
            value = codec.decode(self.public_fields)
        except codec.DecodeError as exc:
            raise TxInvalid(ErrorCode.MALFORMED_TRANSACTION, str(exc)) from exc
        if not isinstance(value, dict) or value.get("function") != self.function:
            raise TxInvalid(ErrorCode.MALFORMED_TRANSACTION, "public fields do not name the called function")
        return value

    def verify(self, signing_key: bytes) -> bool:
        return verify_signature(signing_key, self.signing_bytes(), self.signature)

    def to_json(self) -> dict:
        payload = None
        if self.confidential_payload is not None:
            env = self.confidential_payload
            payload = {
                "recipientWraps": {r: env.recipient_wraps[r].hex() for r in env.recipients},
                "ciphertext": env.ciphertext.hex(),
                "authTag": env.auth_tag.hex(),
            }
        return {
            "nonce": self.nonce,
            "caller": self.caller,
            "function": self.function,
            "publicFields": self.public_fields.hex(),
            "confidentialPayload": payload,
            "timestamp": self.timestamp,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_json(cls, obj: Any) -> "TransactionEnvelope":
        _keys(obj, ("nonce", "caller", "function", "publicFields", "confidentialPayload", "timestamp", "signature"))
        payload = obj["confidentialPayload"]
        envelope = None
        if payload is not None:
            _keys(payload, ("recipientWraps", "ciphertext", "authTag"))
            wraps = payload["recipientWraps"]
            if not isinstance(wraps, dict):
                raise ValueError("recipientWraps must be an object")
            envelope = EncryptedEnvelope(
                {_str(r): codec.parse_hex(w) for r, w in wraps.items()},
                codec.parse_hex(payload["ciphertext"]),
                codec.parse_hex(payload["authTag"]),
            )
        return cls(
            nonce=_int(obj["nonce"]),
            caller=_str(obj["caller"]),
            function=_str(obj["function"]),
            public_fields=codec.parse_hex(obj["publicFields"]),
            confidential_payload=envelope,
            timestamp=_int(obj["timestamp"]),
            signature=codec.parse_hex(obj["signature"]),
        )


def _keys(obj: Any, expected: tuple[str, ...]) -> None:
    if not isinstance(obj, dict) or tuple(obj) != expected:
        raise ValueError(f"expected fields {expected}")


def _int(value: Any) -> int:
    if type(value) is not int:
        raise ValueError("expected integer")
    return value


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise ValueError("expected string")
    return value


def compute_tx_digest(transactions: Iterable[TransactionEnvelope]) -> bytes:
    return codec.digest(["fcn-txs", [tx.hash for tx in transactions]])


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    tx_digest: bytes
    transactions: tuple[TransactionEnvelope, ...]
    proposer: str
    timestamp: int
    validator_signatures: Mapping[str, bytes] = field(default_factory=dict)

    @classmethod
    def build(cls, height: int, prev_hash: bytes, transactions, proposer: str, timestamp: int) -> "Block":
        transactions = tuple(transactions)
        return cls(height, prev_hash, compute_tx_digest(transactions), transactions, proposer, timestamp, {})

    def header_record(self) -> dict:
        return {
            "height": self.height,
            "prevHash": self.prev_hash,
            "proposer": self.proposer,
            "timestamp": self.timestamp,
            "txDigest": self.tx_digest,
        }

    @cached_property
    def hash(self) -> bytes:
        return codec.digest(["fcn-block", self.header_record()])

    def with_signatures(self, signatures: Mapping[str, bytes]) -> "Block":
        return Block(
            self.height, self.prev_hash, self.tx_digest, self.transactions, self.proposer,
            self.timestamp, dict(sorted(signatures.items())),
        )

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "prevHash": self.prev_hash.hex(),
            "txDigest": self.tx_digest.hex(),
            "proposer": self.proposer,
            "timestamp": self.timestamp,
            "transactions": [tx.to_json() for tx in self.transactions],
            "validatorSignatures": {v: self.validator_signatures[v].hex() for v in sorted(self.validator_signatures)},
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"), ensure_ascii=True)

    @classmethod
    def from_json(cls, obj: Any) -> "Block":
        _keys(obj, ("height", "prevHash", "txDigest", "proposer", "timestamp", "transactions", "validatorSignatures"))
        if not isinstance(obj["transactions"], list) or not isinstance(obj["validatorSignatures"], dict):
            raise ValueError("bad block containers")
        return cls(
            height=_int(obj["height"]),
            prev_hash=codec.parse_hex(obj["prevHash"], codec.DIGEST_SIZE),
            tx_digest=codec.parse_hex(obj["txDigest"], codec.DIGEST_SIZE),
            transactions=tuple(TransactionEnvelope.from_json(t) for t in obj["transactions"]),
            proposer=_str(obj["proposer"]),
            timestamp=_int(obj["timestamp"]),
            validator_signatures={_str(v): codec.parse_hex(s) for v, s in obj["validatorSignatures"].items()},
        )

    @classmethod
    def from_line(cls, line: str | bytes) -> "Block":
        """Strict parse: the line must be the block's own canonical rendering."""
        if isinstance(line, bytes):
            line = line.decode("ascii")
        block = cls.from_json(json.loads(line))
        if block.to_line() != line:
            raise ValueError("non-canonical block line")
        return block


class ReceiptStatus(str, Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class Receipt:
    tx_hash: bytes
    status: ReceiptStatus
    error_code: ErrorCode | None = None
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        if (self.status is ReceiptStatus.REJECTED) != (self.error_code is not None):
            raise ValueError("rejected receipts carry an error code, accepted ones do not")

    @classmethod
    def accepted(cls, tx_hash: bytes, events=()) -> "Receipt":
        return cls(tx_hash, ReceiptStatus.ACCEPTED, None, tuple(events))

    @classmethod
    def rejected(cls, tx_hash: bytes, code: ErrorCode) -> "Receipt":
        return cls(tx_hash, ReceiptStatus.REJECTED, code)


# ---------------------------------------------------------------- genesis


def genesis_transaction(
    admin_key: SigningKey,
    *,
    chain_label: str,
    config_digest: bytes,
    validators: ValidatorSet,
    accounts: Sequence[Account],
    policies: Sequence[Mapping[str, Any]] = (),
) -> TransactionEnvelope:
    admin = next((a for a in accounts if a.signing_key == admin_key.public), None)
    if admin is None:
        raise ValueError("genesis signer must be one of the initial accounts")
    return TransactionEnvelope.create(
        admin_key,
        nonce=0,
        caller=admin.account_id,
        function=Function.GENESIS,
        args={
            "accounts": [a.to_record() for a in accounts],
            "chainLabel": chain_label,
            "configDigest": config_digest,
            "policies": [dict(p) for p in policies],
            "validators": validators.to_record(),
        },
    )


def bootstrap(genesis: Block) -> tuple[WorldState, ValidatorSet]:
    """Initial world state and validator set declared by a genesis block."""
    if genesis.height != 0:
        raise BlockRejected(ErrorCode.BAD_HEIGHT, "genesis must be height 0")
    if genesis.prev_hash != codec.ZERO_DIGEST:
        raise BlockRejected(ErrorCode.BAD_PREV_HASH, "genesis prevHash must be zero")
    if len(genesis.transactions) != 1 or genesis.transactions[0].function != Function.GENESIS.value:
        raise BlockRejected(ErrorCode.TX_REJECTED, "genesis holds exactly one genesis transaction", tx_index=0)
    tx = genesis.transactions[0]
    try:
        args = tx.args
        validators = ValidatorSet.from_record(args["validators"])
        accounts = [Account.from_record(a) for a in args["accounts"]]
        state = WorldState(chain_label=args["chainLabel"], config_digest=bytes(args["configDigest"]))
        for account in accounts:
            if account.account_id in state.accounts:
                raise ValueError(f"duplicate genesis account {account.account_id}")
            state.accounts[account.account_id] = account
        for p in args["policies"]:
            install_policy(state.policies, p["policyId"], p["name"], p["directives"], p["createdBy"], tx.hash)
    except (LedgerError, KeyError, TypeError, ValueError) as exc:
        raise BlockRejected(ErrorCode.TX_REJECTED, f"bad genesis payload: {exc}", tx_index=0) from exc
    signer = state.accounts.get(tx.caller)
    if signer is None or not tx.verify(signer.signing_key):
        raise BlockRejected(ErrorCode.INVALID_TX_SIGNATURE, "genesis signature", tx_index=0)
    state.nonces[tx.caller] = tx.nonce
    return state, validators


# ---------------------------------------------------------------- application


def apply_transaction(state: WorldState, tx: TransactionEnvelope, *, check_signature: bool = True) -> list[Event]:
    """Validate and apply one transaction in place; nothing changes on failure."""
    account = state.accounts.get(tx.caller)
    if account is None:
        raise ContractError(ErrorCode.UNAUTHORIZED, "caller is not registered")
    if check_signature and not tx.verify(account.signing_key):
        raise TxInvalid(ErrorCode.INVALID_TX_SIGNATURE, f"bad signature from {tx.caller}")
    last = state.nonces.get(tx.caller, -1)
    if tx.nonce <= last:
        raise TxInvalid(ErrorCode.NONCE_REPLAY, f"nonce {tx.nonce} <= {last}")
    if tx.function == Function.GENESIS.value:
        raise TxInvalid(ErrorCode.MALFORMED_TRANSACTION, "genesis only at height 0")
    events = execute(state, tx.caller, tx.function, tx.args, tx.confidential_payload, tx.hash)
    state.nonces[tx.caller] = tx.nonce
    return events


def check_quorum(validators: ValidatorSet, block: Block) -> None:
    valid, invalid = validators.check_signatures(block.hash, block.validator_signatures)
    if invalid:
        raise BlockRejected(ErrorCode.INSUFFICIENT_QUORUM, f"invalid signatures from {invalid}")
    if len(valid) < validators.quorum:
        raise BlockRejected(ErrorCode.INSUFFICIENT_QUORUM, f"{len(valid)} of {validators.quorum} signatures")


def execute_block(state: WorldState, block: Block) -> tuple[WorldState, tuple[Receipt, ...]]:
    """Apply every transaction of ``block`` to a copy of ``state``."""
    if compute_tx_digest(block.transactions) != block.tx_digest:
        raise BlockRejected(ErrorCode.BAD_TX_DIGEST)
    working = state.copy()
    receipts = []
    for index, tx in enumerate(block.transactions):
        try:
            events = apply_transaction(working, tx)
        except TxInvalid as exc:
            code = exc.code if exc.code in (ErrorCode.INVALID_TX_SIGNATURE, ErrorCode.NONCE_REPLAY) else ErrorCode.TX_REJECTED
            raise BlockRejected(code, f"tx {index}: {exc}", tx_index=index) from exc
        except ContractError as exc:
            raise BlockRejected(ErrorCode.TX_REJECTED, f"tx {index}: {exc}", tx_index=index) from exc
        receipts.append(Receipt.accepted(tx.hash, events))
    return working, tuple(receipts)


@dataclass(frozen=True)
class ChainState:
    """An accepted chain with the world state after every height.

    Instances are never mutated; :func:`append_block` returns a new one,
    so any height can be read while a writer extends the chain.
    """

    blocks: tuple[Block, ...]
    validators: ValidatorSet
    states: tuple[WorldState, ...]
    receipts: tuple[tuple[Receipt, ...], ...]

    @classmethod
    def from_genesis(cls, genesis: Block) -> "ChainState":
        state, validators = bootstrap(genesis)
        check_quorum(validators, genesis)
        if compute_tx_digest(genesis.transactions) != genesis.tx_digest:
            raise BlockRejected(ErrorCode.BAD_TX_DIGEST)
        receipt = Receipt.accepted(genesis.transactions[0].hash, [("Genesis", {"chainLabel": state.chain_label})])
        return cls((genesis,), validators, (state,), ((receipt,),))

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.height

    @property
    def state(self) -> WorldState:
        return self.states[-1]

    def state_at(self, height: int) -> WorldState:
        return self.states[height]

    def __len__(self) -> int:
        return len(self.blocks)

    def find_transaction(self, tx_hash: bytes) -> tuple[int, TransactionEnvelope] | None:
        for block in self.blocks:
            for tx in block.transactions:
                if tx.hash == tx_hash:
                    return block.height, tx
        return None

    def serialize(self) -> str:
        return "".join(b.to_line() + "\n" for b in self.blocks)

    def prefix(self, length: int) -> "ChainState":
        return ChainState(self.blocks[:length], self.validators, self.states[:length], self.receipts[:length])


def append_block(chain: ChainState, block: Block) -> ChainState:
    """Extend ``chain`` by one block or raise BlockRejected leaving it untouched."""
    if block.height != chain.height + 1:
        raise BlockRejected(ErrorCode.BAD_HEIGHT, f"expected height {chain.height + 1}, got {block.height}")
    if block.prev_hash != chain.head.hash:
        raise BlockRejected(ErrorCode.BAD_PREV_HASH, f"block {block.height} does not link to head")
    check_quorum(chain.validators, block)
    state, receipts = execute_block(chain.state, block)
    return ChainState(chain.blocks + (block,), chain.validators, chain.states + (state,), chain.receipts + (receipts,))


def load_chain(text: str | bytes) -> ChainState:
    """Parse and append every block of a chain file; raises on the first failure."""
    lines = _split_lines(text.encode("ascii") if isinstance(text, str) else text)
    if not lines:
        raise LedgerError(ErrorCode.CHAIN_INVALID, "empty chain file")
    try:
        blocks = [Block.from_line(line) for line in lines]
    except (ValueError, UnicodeDecodeError) as exc:
        raise LedgerError(ErrorCode.CHAIN_INVALID, f"malformed chain file: {exc}") from exc
    chain = ChainState.from_genesis(blocks[0])
    for block in blocks[1:]:
        chain = append_block(chain, block)
    return chain


def _split_lines(data: bytes) -> list[bytes]:
    if not data:
        return []
    if not data.endswith(b"\n"):
        # last line is reported malformed rather than silently accepted
        return data.split(b"\n")
    return data[:-1].split(b"\n")


# ---------------------------------------------------------------- verification


@dataclass
class BlockCheck:
    height: int
    well_formed: bool = True
    height_ok: bool = True
    link_ok: bool = True
    digest_ok: bool = True
    quorum_ok: bool = True
    tx_signatures: list[bool] = field(default_factory=list)
    execution_ok: bool = True
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (
            self.well_formed and self.height_ok and self.link_ok and self.digest_ok
            and self.quorum_ok and all(self.tx_signatures) and self.execution_ok
        )

    def fail(self, attribute: str, problem: str) -> None:
        setattr(self, attribute, False)
        self.problems.append(problem)


@dataclass
class VerificationReport:
    blocks: list[BlockCheck]

    @property
    def ok(self) -> bool:
        return bool(self.blocks) and all(b.ok for b in self.blocks)

    @property
    def failing_heights(self) -> list[int]:
        return [b.height for b in self.blocks if not b.ok]

    @property
    def first_failure(self) -> int | None:
        failing = self.failing_heights
        return failing[0] if failing else None

    def lines(self) -> list[str]:
        out = []
        for b in self.blocks:
            sigs = "".join("1" if s else "0" for s in b.tx_signatures) or "-"
            out.append(
                f"block {b.height} {'ok' if b.ok else 'FAIL'} link={int(b.link_ok)} digest={int(b.digest_ok)} "
                f"quorum={int(b.quorum_ok)} txsig={sigs} exec={int(b.execution_ok)}"
                + (f" problems={'; '.join(b.problems)}" if b.problems else "")
            )
        out.append(f"verdict {'VALID' if self.ok else 'INVALID'}")
        return out


def _content_hash(block: Block) -> bytes:
    """Header hash with the txDigest recomputed from the block's own transactions.

    Linking against this value means a tampered body also breaks the link
    from the next block, not only the digest check of its own block.
    """
    recomputed = compute_tx_digest(block.transactions)
    if recomputed == block.tx_digest:
        return block.hash
    return replace(block, tx_digest=recomputed).hash


def verify_chain(chain: ChainState | Sequence[Block | None]) -> VerificationReport:
    """Re-check every block from genesis; failures are reported, never raised.

    ``None`` entries stand for unreadable blocks (see :func:`verify_chain_file`).
    """
    blocks = list(chain.blocks) if isinstance(chain, ChainState) else list(chain)
    checks: list[BlockCheck] = []
    state: WorldState | None = None
    validators: ValidatorSet | None = None
    prev: Block | None = None

    for index, block in enumerate(blocks):
        check = BlockCheck(index)
        checks.append(check)
        if block is None:
            check.fail("well_formed", "unreadable block")
            prev = None
            continue
        if block.height != index:
            check.fail("height_ok", f"height {block.height} at position {index}")
        if index == 0:
            if block.prev_hash != codec.ZERO_DIGEST:
                check.fail("link_ok", "genesis prevHash not zero")
        elif prev is None:
            check.fail("link_ok", "previous block unreadable")
        elif block.prev_hash != _content_hash(prev):
            check.fail("link_ok", "prevHash does not match previous block hash")
        if compute_tx_digest(block.transactions) != block.tx_digest:
            check.fail("digest_ok", "txDigest mismatch")

        if index == 0:
            try:
                state, validators = bootstrap(block)
                check.tx_signatures = [True]
            except BlockRejected as exc:
                check.tx_signatures = [exc.code is not ErrorCode.INVALID_TX_SIGNATURE] * len(block.transactions)
                check.fail("execution_ok", f"genesis: {exc}")
        if validators is None:
            check.fail("quorum_ok", "no validator set (genesis invalid)")
        else:
            valid, invalid = validators.check_signatures(block.hash, block.validator_signatures)
            if invalid:
                check.fail("quorum_ok", f"invalid signatures from {','.join(invalid)}")
            if len(valid) < validators.quorum:
                check.fail("quorum_ok", f"{len(valid)} valid signatures, quorum {validators.quorum}")

        if index > 0:
            for tx_index, tx in enumerate(block.transactions):
                account = state.accounts.get(tx.caller) if state is not None else None
                signed = account is not None and tx.verify(account.signing_key)
                check.tx_signatures.append(signed)
                if not signed:
                    check.problems.append(f"tx {tx_index}: signature does not verify")
                    continue
                try:
                    apply_transaction(state, tx, check_signature=False)
                except LedgerError as exc:
                    check.fail("execution_ok", f"tx {tx_index}: {exc}")
        prev = block
    return VerificationReport(checks)


def verify_chain_file(data: str | bytes) -> VerificationReport:
    """Verify raw chain-file bytes; malformed lines count as failed blocks."""
    data = data.encode("ascii") if isinstance(data, str) else data
    blocks: list[Block | None] = []
    for line in _split_lines(data):
        try:
            blocks.append(Block.from_line(line))
        except (ValueError, UnicodeDecodeError):
            blocks.append(None)
    return verify_chain(blocks)
