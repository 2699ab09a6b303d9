"""Error codes shared by the ledger, contracts, envelopes and tooling."""

from __future__ import annotations

from enum import Enum


class ErrorCode(str, Enum):
    # block / transaction validity
    BAD_HEIGHT = "BadHeight"
    BAD_PREV_HASH = "BadPrevHash"
    BAD_TX_DIGEST = "BadTxDigest"
    INSUFFICIENT_QUORUM = "InsufficientQuorum"
    INVALID_TX_SIGNATURE = "InvalidTxSignature"
    NONCE_REPLAY = "NonceReplay"
    TX_REJECTED = "TxRejected"
    MALFORMED_TRANSACTION = "MalformedTransaction"
    # access control
    UNAUTHORIZED = "Unauthorized"
    ACCOUNT_INACTIVE = "AccountInactive"
    UNKNOWN_ACCOUNT = "UnknownAccount"
    DUPLICATE_ACCOUNT = "DuplicateAccount"
    ALREADY_INACTIVE = "AlreadyInactive"
    # policy contract
    DUPLICATE_POLICY_ID = "DuplicatePolicyId"
    EMPTY_DIRECTIVES = "EmptyDirectives"
    DUPLICATE_DIRECTIVE = "DuplicateDirective"
    UNKNOWN_POLICY = "UnknownPolicy"
    POLICY_SUSPENDED = "PolicySuspended"
    UNKNOWN_REQUEST = "UnknownRequest"
    REQUEST_ALREADY_EVALUATED = "RequestAlreadyEvaluated"
    INVALID_ARGUMENT = "InvalidArgument"
    # pki contract
    ACTIVE_KEY_EXISTS = "ActiveKeyExists"
    NO_ACTIVE_KEY = "NoActiveKey"
    KEY_REVOKED = "KeyRevoked"
    NO_RECORD_FOR_OWNER = "NoRecordForOwner"
    ALREADY_REVOKED = "AlreadyRevoked"
    NOT_PUBLISHED_STATE = "NotPublishedState"
    # envelopes
    RECIPIENT_KEY_NOT_AUTHORIZED = "RecipientKeyNotAuthorized"
    RECIPIENT_KEY_REVOKED = "RecipientKeyRevoked"
    NOT_A_RECIPIENT = "NotARecipient"
    INTEGRITY_FAILURE = "IntegrityFailure"
    DIGEST_MISMATCH = "DigestMismatch"
    DUPLICATE_RECORD = "DuplicateRecord"
    # consensus
    NOT_DESIGNATED_PROPOSER = "NotDesignatedProposer"
    NO_PENDING_TRANSACTIONS = "NoPendingTransactions"
    # simulator / tooling
    NODE_UNAVAILABLE = "NodeUnavailable"
    UNKNOWN_NODE = "UnknownNode"
    MALFORMED_SCRIPT = "MalformedScript"
    GENESIS_INVALID = "GenesisInvalid"
    CONFIG_PARSE_ERROR = "ConfigParseError"
    CONFIG_INVALID = "ConfigInvalid"
    CHAIN_INVALID = "ChainInvalid"
    TX_NOT_FOUND = "TxNotFound"

    def __str__(self) -> str:
        return self.value


class LedgerError(Exception):
    """Base class; ``code`` is the machine-readable error."""

    def __init__(self, code: ErrorCode, message: str = "") -> None:
        self.code = code
        self.message = message
        super().__init__(f"{code.value}: {message}" if message else code.value)


class BlockRejected(LedgerError):
    """A block failed validation; the chain is unchanged."""

    def __init__(self, code: ErrorCode, message: str = "", *, tx_index: int | None = None) -> None:
        super().__init__(code, message)
        self.tx_index = tx_index


class ContractError(LedgerError):
    pass


class EnvelopeError(LedgerError):
    pass


class ConsensusError(LedgerError):
    pass


class ConfigError(LedgerError):
    pass


class ScenarioError(LedgerError):
    pass
