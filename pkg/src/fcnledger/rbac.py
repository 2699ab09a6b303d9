"""Account registry and the role-based authorization oracle."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Mapping

from fcnledger.errors import ContractError, ErrorCode
from fcnledger.keys import account_id_for

COALITION_NATION = "JFC"


class Role(str, Enum):
    ADMINISTRATOR = "Administrator"
    AUTHORIZED_USER = "AuthorizedUser"


class Tier(str, Enum):
    COALITION = "Coalition"
    NATIONAL = "National"
    TACTICAL = "Tactical"


class Function(str, Enum):
    CREATE_POLICY = "createPolicy"
    RETRIEVE_POLICY = "retrievePolicy"
    REQUEST_MODIFICATION = "requestModification"
    MODIFY_POLICY = "modifyPolicy"
    EVALUATE_REQUEST = "evaluateRequest"
    PUBLISH_KEY = "publishKey"
    UPDATE_KEY = "updateKey"
    RETRIEVE_KEY = "retrieveKey"
    REVOKE_KEY = "revokeKey"
    AUTHORIZE_KEY = "authorizeKey"
    # registry and plumbing
    REGISTER_ACCOUNT = "registerAccount"
    DEACTIVATE_ACCOUNT = "deactivateAccount"
    POST_ORDER = "postOrder"
    FILE_REPORT = "fileReport"
    GENESIS = "genesis"


CONTRACT_FUNCTIONS = (
    Function.CREATE_POLICY,
    Function.RETRIEVE_POLICY,
    Function.REQUEST_MODIFICATION,
    Function.MODIFY_POLICY,
    Function.EVALUATE_REQUEST,
    Function.PUBLISH_KEY,
    Function.UPDATE_KEY,
    Function.RETRIEVE_KEY,
    Function.REVOKE_KEY,
    Function.AUTHORIZE_KEY,
)
READ_FUNCTIONS = frozenset({Function.RETRIEVE_POLICY, Function.RETRIEVE_KEY})

_ADMIN = frozenset({Role.ADMINISTRATOR})
_ANY = frozenset({Role.ADMINISTRATOR, Role.AUTHORIZED_USER})

PERMITTED_ROLES: Mapping[Function, frozenset[Role]] = {
    Function.CREATE_POLICY: _ADMIN,
    Function.MODIFY_POLICY: _ADMIN,
    Function.EVALUATE_REQUEST: _ADMIN,
    Function.REVOKE_KEY: _ADMIN,
    Function.AUTHORIZE_KEY: _ADMIN,
    Function.RETRIEVE_POLICY: _ANY,
    Function.REQUEST_MODIFICATION: _ANY,
    Function.PUBLISH_KEY: _ANY,
    Function.UPDATE_KEY: _ANY,
    Function.RETRIEVE_KEY: _ANY,
    Function.REGISTER_ACCOUNT: _ADMIN,
    Function.DEACTIVATE_ACCOUNT: _ADMIN,
    Function.POST_ORDER: _ANY,
    Function.FILE_REPORT: _ANY,
    Function.GENESIS: frozenset(),
}


@dataclass
class Account:
    account_id: str
    signing_key: bytes
    role: Role
    tier: Tier
    nation: str
    label: str = ""
    active: bool = True

    def __post_init__(self) -> None:
        self.role = Role(self.role)
        self.tier = Tier(self.tier)
        if self.account_id != account_id_for(self.signing_key):
            raise ValueError("account id must be the digest of the signing key")
        if self.tier is Tier.COALITION and self.nation != COALITION_NATION:
            raise ValueError(f"coalition-tier accounts belong to {COALITION_NATION}")

    @classmethod
    def from_key(cls, signing_key: bytes, role, tier, nation: str, label: str = "") -> "Account":
        return cls(account_id_for(signing_key), signing_key, Role(role), Tier(tier), nation, label)

    def to_record(self) -> dict:
        return {
            "accountId": self.account_id,
            "active": self.active,
            "label": self.label,
            "nation": self.nation,
            "role": self.role.value,
            "signingKey": self.signing_key,
            "tier": self.tier.value,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "Account":
        return cls(
            account_id=record["accountId"],
            signing_key=bytes(record["signingKey"]),
            role=Role(record["role"]),
            tier=Tier(record["tier"]),
            nation=record["nation"],
            label=record["label"],
            active=record["active"],
        )


class AccessReason(str, Enum):
    GRANTED = "Granted"
    ROLE_INSUFFICIENT = "RoleInsufficient"
    ACCOUNT_INACTIVE = "AccountInactive"
    UNKNOWN_ACCOUNT = "UnknownAccount"


@dataclass(frozen=True)
class AccessDecision:
    allowed: bool
    reason: AccessReason

    @property
    def error_code(self) -> ErrorCode | None:
        if self.allowed:
            return None
        if self.reason is AccessReason.ACCOUNT_INACTIVE:
            return ErrorCode.ACCOUNT_INACTIVE
        return ErrorCode.UNAUTHORIZED


def check_access(accounts: Mapping[str, Account], caller: str, function: Function) -> AccessDecision:
    """Decide whether ``caller`` may invoke ``function``; pure in its inputs."""
    account = accounts.get(caller)
    if account is None:
        return AccessDecision(False, AccessReason.UNKNOWN_ACCOUNT)
    if not account.active:
        return AccessDecision(False, AccessReason.ACCOUNT_INACTIVE)
    if account.role not in PERMITTED_ROLES[Function(function)]:
        return AccessDecision(False, AccessReason.ROLE_INSUFFICIENT)
    return AccessDecision(True, AccessReason.GRANTED)


def require_access(accounts: Mapping[str, Account], caller: str, function: Function) -> None:
    decision = check_access(accounts, caller, function)
    if not decision.allowed:
        raise ContractError(decision.error_code, f"{function.value} denied: {decision.reason.value}")


def register_account(accounts: dict[str, Account], admin: str, new_account: Account) -> list:
    require_access(accounts, admin, Function.REGISTER_ACCOUNT)
    if new_account.account_id in accounts:
        raise ContractError(ErrorCode.DUPLICATE_ACCOUNT, new_account.account_id)
    accounts[new_account.account_id] = replace(new_account, active=True)
    return [("AccountRegistered", {"accountId": new_account.account_id, "role": new_account.role.value})]


def deactivate_account(accounts: dict[str, Account], admin: str, target: str) -> list:
    require_access(accounts, admin, Function.DEACTIVATE_ACCOUNT)
    account = accounts.get(target)
    if account is None:
        raise ContractError(ErrorCode.UNKNOWN_ACCOUNT, target)
    if not account.active:
        raise ContractError(ErrorCode.ALREADY_INACTIVE, target)
    account.active = False
    return [("AccountDeactivated", {"accountId": target})]
