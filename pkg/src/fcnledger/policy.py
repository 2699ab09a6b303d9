"""Policy enforcement contract: versioned directive sets and change requests."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from fcnledger.errors import ContractError, ErrorCode
from fcnledger.rbac import Function, require_access

Directives = tuple[tuple[str, str], ...]


class PolicyStatus(str, Enum):
    ACTIVE = "Active"
    SUSPENDED = "Suspended"


class RequestStatus(str, Enum):
    PENDING = "Pending"
    APPROVED = "Approved"
    DENIED = "Denied"


def normalize_directives(directives: Iterable) -> Directives:
    """Key-sorted tuple of (key, value) string pairs; keys must be unique."""
    pairs = [(str(k), str(v)) for k, v in (directives.items() if isinstance(directives, Mapping) else directives)]
    if not pairs:
        raise ContractError(ErrorCode.EMPTY_DIRECTIVES)
    seen = set()
    for key, value in pairs:
        if not key or "=" in key or "\n" in key or "\n" in value:
            raise ContractError(ErrorCode.INVALID_ARGUMENT, f"bad directive {key!r}")
        if key in seen:
            raise ContractError(ErrorCode.DUPLICATE_DIRECTIVE, key)
        seen.add(key)
    return tuple(sorted(pairs))


def directives_text(directives: Iterable) -> str:
    """Canonical textual form: one ``key=value`` line per directive, key-sorted."""
    return "".join(f"{k}={v}\n" for k, v in sorted(directives))


@dataclass
class PolicySet:
    policy_id: str
    name: str
    directives: Directives
    created_by: str
    version: int = 1
    status: PolicyStatus = PolicyStatus.ACTIVE
    history: list[dict] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "createdBy": self.created_by,
            "directives": [list(d) for d in self.directives],
            "history": [dict(h) for h in self.history],
            "name": self.name,
            "policyId": self.policy_id,
            "status": self.status.value,
            "version": self.version,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "PolicySet":
        return cls(
            policy_id=record["policyId"],
            name=record["name"],
            directives=tuple((k, v) for k, v in record["directives"]),
            created_by=record["createdBy"],
            version=record["version"],
            status=PolicyStatus(record["status"]),
            history=[dict(h) for h in record["history"]],
        )

    def _bump(self, tx_hash: bytes) -> None:
        self.version += 1
        self.history.append({"txHash": tx_hash, "version": self.version})


@dataclass
class ModificationRequest:
    request_id: str
    policy_id: str
    proposed_directives: Directives
    requester: str
    status: RequestStatus = RequestStatus.PENDING
    evaluator: str | None = None
    rationale: str = ""

    def to_record(self) -> dict:
        return {
            "evaluator": self.evaluator,
            "policyId": self.policy_id,
            "proposedDirectives": [list(d) for d in self.proposed_directives],
            "rationale": self.rationale,
            "requestId": self.request_id,
            "requester": self.requester,
            "status": self.status.value,
        }

    @classmethod
    def from_record(cls, record: Mapping) -> "ModificationRequest":
        return cls(
            request_id=record["requestId"],
            policy_id=record["policyId"],
            proposed_directives=tuple((k, v) for k, v in record["proposedDirectives"]),
            requester=record["requester"],
            status=RequestStatus(record["status"]),
            evaluator=record["evaluator"],
            rationale=record["rationale"],
        )


def request_id_for(tx_hash: bytes) -> str:
    return "req-" + tx_hash.hex()[:16]


def _policy(policies: Mapping[str, PolicySet], policy_id: str) -> PolicySet:
    policy = policies.get(policy_id)
    if policy is None:
        raise ContractError(ErrorCode.UNKNOWN_POLICY, policy_id)
    return policy


def install_policy(policies: dict, policy_id: str, name: str, directives, created_by: str, tx_hash: bytes) -> PolicySet:
    """Create version 1 without an access check; used by genesis."""
    if not policy_id:
        raise ContractError(ErrorCode.INVALID_ARGUMENT, "empty policy id")
    if policy_id in policies:
        raise ContractError(ErrorCode.DUPLICATE_POLICY_ID, policy_id)
    policy = PolicySet(policy_id, str(name), normalize_directives(directives), created_by)
    policy.history.append({"txHash": tx_hash, "version": 1})
    policies[policy_id] = policy
    return policy


def create_policy(policies, accounts, caller: str, policy_id: str, name: str, directives, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.CREATE_POLICY)
    install_policy(policies, policy_id, name, directives, caller, tx_hash)
    return [("PolicyCreated", {"policyId": policy_id, "version": 1})]


def retrieve_policy(policies, accounts, caller: str, policy_id: str) -> PolicySet:
    require_access(accounts, caller, Function.RETRIEVE_POLICY)
    return copy.deepcopy(_policy(policies, policy_id))


def request_modification(policies, requests, accounts, caller: str, policy_id: str, proposed, tx_hash: bytes) -> list:
    require_access(accounts, caller, Function.REQUEST_MODIFICATION)
    policy = _policy(policies, policy_id)
    if policy.status is PolicyStatus.SUSPENDED:
        raise ContractError(ErrorCode.POLICY_SUSPENDED, policy_id)
    proposed = normalize_directives(proposed)
    request_id = request_id_for(tx_hash)
    if request_id in requests:
        raise ContractError(ErrorCode.INVALID_ARGUMENT, f"request id collision {request_id}")
    requests[request_id] = ModificationRequest(request_id, policy_id, proposed, caller)
    return [("ModificationRequested", {"policyId": policy_id, "requestId": request_id})]


def modify_policy(
    policies,
    accounts,
    caller: str,
    policy_id: str,
    tx_hash: bytes,
    directives=None,
    status: PolicyStatus | str | None = None,
) -> list:
    """Replace the directives or set the status; either way the version advances."""
    require_access(accounts, caller, Function.MODIFY_POLICY)
    policy = _policy(policies, policy_id)
    if (directives is None) == (status is None):
        raise ContractError(ErrorCode.INVALID_ARGUMENT, "give exactly one of directives or status")
    if directives is not None:
        new_directives = normalize_directives(directives)
        policy.directives = new_directives
    else:
        try:
            policy.status = PolicyStatus(status)
        except ValueError as exc:
            raise ContractError(ErrorCode.INVALID_ARGUMENT, f"bad status {status!r}") from exc
    policy._bump(tx_hash)
    return [("PolicyModified", {"policyId": policy_id, "version": policy.version})]


def evaluate_request(
    policies, requests, accounts, caller: str, request_id: str, approve: bool, rationale: str, tx_hash: bytes
) -> list:
    require_access(accounts, caller, Function.EVALUATE_REQUEST)
    request = requests.get(request_id)
    if request is None:
        raise ContractError(ErrorCode.UNKNOWN_REQUEST, request_id)
    if request.status is not RequestStatus.PENDING:
        raise ContractError(ErrorCode.REQUEST_ALREADY_EVALUATED, request_id)
    policy = _policy(policies, request.policy_id)
    request.evaluator = caller
    request.rationale = str(rationale)
    if not approve:
        request.status = RequestStatus.DENIED
        return [("RequestDenied", {"policyId": policy.policy_id, "requestId": request_id})]
    request.status = RequestStatus.APPROVED
    policy.directives = request.proposed_directives
    policy._bump(tx_hash)
    return [
        ("RequestApproved", {"policyId": policy.policy_id, "requestId": request_id}),
        ("PolicyModified", {"policyId": policy.policy_id, "version": policy.version}),
    ]
