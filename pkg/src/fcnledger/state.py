"""World state held by every replica and the contract dispatcher."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Mapping

from fcnledger import codec, pki, policy, rbac
from fcnledger.envelope import EncryptedEnvelope, authorized_key
from fcnledger.errors import ContractError, EnvelopeError, ErrorCode
from fcnledger.rbac import Account, Function

Event = tuple[str, dict]


@dataclass
class WorldState:
    chain_label: str = ""
    config_digest: bytes = b""
    accounts: dict[str, Account] = field(default_factory=dict)
    nonces: dict[str, int] = field(default_factory=dict)
    policies: dict[str, policy.PolicySet] = field(default_factory=dict)
    requests: dict[str, policy.ModificationRequest] = field(default_factory=dict)
    keys: dict[str, list[pki.KeyRecord]] = field(default_factory=dict)
    orders: dict[str, dict] = field(default_factory=dict)
    reports: dict[str, dict] = field(default_factory=dict)

    def copy(self) -> "WorldState":
        return copy.deepcopy(self)

    def key_directory(self) -> dict[str, pki.KeyRecord]:
        return pki.key_directory(self.keys)

    def to_record(self) -> dict:
        return {
            "accounts": {k: a.to_record() for k, a in self.accounts.items()},
            "chainLabel": self.chain_label,
            "configDigest": self.config_digest,
            "keys": {k: [r.to_record() for r in recs] for k, recs in self.keys.items()},
            "nonces": dict(self.nonces),
            "orders": {k: dict(v) for k, v in self.orders.items()},
            "policies": {k: p.to_record() for k, p in self.policies.items()},
            "reports": {k: dict(v) for k, v in self.reports.items()},
            "requests": {k: r.to_record() for k, r in self.requests.items()},
        }

    def serialize(self) -> bytes:
        return codec.encode(self.to_record())

    def digest(self) -> bytes:
        return codec.sha256(self.serialize())


def _arg(args: Mapping[str, Any], name: str, kind=str):
    if name not in args:
        raise ContractError(ErrorCode.MALFORMED_TRANSACTION, f"missing argument {name}")
    value = args[name]
    if kind is not None and not isinstance(value, kind):
        raise ContractError(ErrorCode.MALFORMED_TRANSACTION, f"argument {name} has wrong type")
    return value


def _require_authorized_recipients(state: WorldState, envelope: EncryptedEnvelope) -> None:
    directory = state.key_directory()
    for recipient in envelope.recipients:
        try:
            authorized_key(directory, recipient)
        except EnvelopeError as exc:
            raise ContractError(exc.code, exc.message) from exc


def execute(
    state: WorldState,
    caller: str,
    function: Function | str,
    args: Mapping[str, Any],
    payload: EncryptedEnvelope | None,
    tx_hash: bytes,
) -> list[Event]:
    """Apply one contract call to ``state`` in place.

    Raises ContractError before touching ``state`` when the call is
    refused, so a failed call leaves no trace.
    """
    try:
        function = Function(function)
    except ValueError as exc:
        raise ContractError(ErrorCode.MALFORMED_TRANSACTION, f"unknown function {function!r}") from exc
    accounts = state.accounts

    if function is Function.REGISTER_ACCOUNT:
        record = _arg(args, "account", dict)
        try:
            account = Account.from_record({**record, "active": True})
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(ErrorCode.MALFORMED_TRANSACTION, f"bad account record: {exc}") from exc
        return rbac.register_account(accounts, caller, account)
    if function is Function.DEACTIVATE_ACCOUNT:
        return rbac.deactivate_account(accounts, caller, _arg(args, "target"))

    if function is Function.CREATE_POLICY:
        return policy.create_policy(
            state.policies, accounts, caller, _arg(args, "policyId"), _arg(args, "name"),
            _arg(args, "directives", list), tx_hash,
        )
    if function is Function.RETRIEVE_POLICY:
        view = policy.retrieve_policy(state.policies, accounts, caller, _arg(args, "policyId"))
        return [("PolicyRetrieved", {"policyId": view.policy_id, "version": view.version})]
    if function is Function.REQUEST_MODIFICATION:
        return policy.request_modification(
            state.policies, state.requests, accounts, caller, _arg(args, "policyId"),
            _arg(args, "directives", list), tx_hash,
        )
    if function is Function.MODIFY_POLICY:
        return policy.modify_policy(
            state.policies, accounts, caller, _arg(args, "policyId"), tx_hash,
            directives=_arg(args, "directives", (list, type(None))),
            status=_arg(args, "status", (str, type(None))),
        )
    if function is Function.EVALUATE_REQUEST:
        decision = _arg(args, "decision")
        if decision not in ("approve", "deny"):
            raise ContractError(ErrorCode.INVALID_ARGUMENT, f"decision must be approve or deny, not {decision!r}")
        return policy.evaluate_request(
            state.policies, state.requests, accounts, caller, _arg(args, "requestId"),
            decision == "approve", _arg(args, "rationale"), tx_hash,
        )

    if function is Function.PUBLISH_KEY:
        return pki.publish_key(state.keys, accounts, caller, _arg(args, "keyBytes", bytes), tx_hash)
    if function is Function.UPDATE_KEY:
        return pki.update_key(state.keys, accounts, caller, _arg(args, "keyBytes", bytes), tx_hash)
    if function is Function.RETRIEVE_KEY:
        view = pki.retrieve_key(state.keys, accounts, caller, _arg(args, "owner"))
        return [("KeyRetrieved", {"owner": view.owner, "status": view.status.value})]
    if function is Function.REVOKE_KEY:
        return pki.revoke_key(state.keys, accounts, caller, _arg(args, "owner"), tx_hash)
    if function is Function.AUTHORIZE_KEY:
        return pki.authorize_key(state.keys, accounts, caller, _arg(args, "owner"), tx_hash)

    if function is Function.POST_ORDER:
        rbac.require_access(accounts, caller, Function.POST_ORDER)
        order_id = _arg(args, "orderId")
        if payload is None:
            raise ContractError(ErrorCode.MALFORMED_TRANSACTION, "mission order needs a confidential payload")
        if order_id in state.orders:
            raise ContractError(ErrorCode.DUPLICATE_RECORD, order_id)
        _require_authorized_recipients(state, payload)
        state.orders[order_id] = {"recipients": list(payload.recipients), "sender": caller, "txHash": tx_hash}
        return [("OrderPosted", {"orderId": order_id, "recipients": len(payload.recipients)})]
    if function is Function.FILE_REPORT:
        rbac.require_access(accounts, caller, Function.FILE_REPORT)
        report_id = _arg(args, "reportId")
        content_digest = _arg(args, "contentDigest", bytes)
        if payload is None:
            raise ContractError(ErrorCode.MALFORMED_TRANSACTION, "report needs a confidential payload")
        if len(content_digest) != codec.DIGEST_SIZE:
            raise ContractError(ErrorCode.INVALID_ARGUMENT, "content digest must be 32 bytes")
        if report_id in state.reports:
            raise ContractError(ErrorCode.DUPLICATE_RECORD, report_id)
        _require_authorized_recipients(state, payload)
        state.reports[report_id] = {"author": caller, "contentDigest": content_digest, "txHash": tx_hash}
        return [("ReportFiled", {"reportId": report_id})]

    raise ContractError(ErrorCode.MALFORMED_TRANSACTION, f"{function.value} is not callable here")


def query(state: WorldState, caller: str, function: Function | str, args: Mapping[str, Any]):
    """Read-only calls answered from a sealed snapshot."""
    function = Function(function)
    if function is Function.RETRIEVE_POLICY:
        return policy.retrieve_policy(state.policies, state.accounts, caller, _arg(args, "policyId"))
    if function is Function.RETRIEVE_KEY:
        return pki.retrieve_key(state.keys, state.accounts, caller, _arg(args, "owner"))
    raise ContractError(ErrorCode.INVALID_ARGUMENT, f"{function.value} is not a read function")
