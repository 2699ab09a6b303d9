"""Post-run audit of a simulation trace.

Checks, each reported under its own name:

``chain``
    the chain file verifies from genesis and every live node holds it.
``policy``
    each final policy equals a rebuild from its committed transactions.
``pki``
    every key status change seen while replaying is a permitted one.
``confidentiality``
    each order or report was sealed only to keys Authorized just before it,
    and report digests match the decrypted content when keys are known.
``expectations``
    every scripted outcome is the one the script expected.
``equivocation``
    no validator signed two blocks at one height.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from fcnledger import codec
from fcnledger.envelope import open_envelope
from fcnledger.errors import EnvelopeError, LedgerError
from fcnledger.genesis import Keyring
from fcnledger.keys import x25519_public
from fcnledger.ledger import ChainState, apply_transaction, load_chain, verify_chain_file
from fcnledger.pki import PERMITTED_TRANSITIONS, KeyStatus, current_record
from fcnledger.rbac import Function
from fcnledger.sim.simulator import SimulationTrace
from fcnledger.state import WorldState

CHECKS = ("chain", "policy", "pki", "confidentiality", "expectations", "equivocation")
_KEY_FUNCTIONS = {f.value for f in (Function.PUBLISH_KEY, Function.UPDATE_KEY, Function.REVOKE_KEY, Function.AUTHORIZE_KEY)}


@dataclass(frozen=True)
class Discrepancy:
    check: str
    where: str
    detail: str

    def line(self) -> str:
        return f"discrepancy check={self.check} at={self.where} {self.detail}"


@dataclass
class AuditReport:
    discrepancies: list[Discrepancy] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=lambda: dict.fromkeys(CHECKS, 0))

    @property
    def ok(self) -> bool:
        return not self.discrepancies

    def failed(self, check: str) -> list[Discrepancy]:
        return [d for d in self.discrepancies if d.check == check]

    def lines(self) -> list[str]:
        out = []
        for check in CHECKS:
            bad = len(self.failed(check))
            out.append(f"check {check} {'ok' if not bad else 'FAIL'} examined={self.counts[check]} discrepancies={bad}")
        out.extend(d.line() for d in self.discrepancies)
        out.append(f"audit {'CLEAN' if self.ok else 'DISCREPANCIES'}")
        return out

    def _add(self, check: str, where, detail: str) -> None:
        self.discrepancies.append(Discrepancy(check, str(where), detail))


def _policy_model(chain: ChainState) -> dict[str, dict]:
    """Rebuild policies straight from transaction arguments."""
    model: dict[str, dict] = {}
    pending_requests: dict[str, tuple[str, list]] = {}
    genesis_tx = chain.blocks[0].transactions[0]
    for p in genesis_tx.args["policies"]:
        model[p["policyId"]] = {
            "directives": sorted([list(d) for d in p["directives"]]), "status": "Active",
            "version": 1, "history": [genesis_tx.hash],
        }
    for block in chain.blocks[1:]:
        for tx in block.transactions:
            args = tx.args
            if tx.function == Function.CREATE_POLICY.value:
                model[args["policyId"]] = {
                    "directives": sorted([list(d) for d in args["directives"]]), "status": "Active",
                    "version": 1, "history": [tx.hash],
                }
            elif tx.function == Function.MODIFY_POLICY.value:
                entry = model[args["policyId"]]
                if args["directives"] is not None:
                    entry["directives"] = sorted([list(d) for d in args["directives"]])
                else:
                    entry["status"] = args["status"]
                entry["version"] += 1
                entry["history"].append(tx.hash)
            elif tx.function == Function.REQUEST_MODIFICATION.value:
                request_id = "req-" + tx.hash.hex()[:16]
                pending_requests[request_id] = (args["policyId"], sorted([list(d) for d in args["directives"]]))
            elif tx.function == Function.EVALUATE_REQUEST.value and args["decision"] == "approve":
                policy_id, directives = pending_requests.pop(args["requestId"])
                entry = model[policy_id]
                entry["directives"] = directives
                entry["version"] += 1
                entry["history"].append(tx.hash)
    return model


def _check_policies(report: AuditReport, chain: ChainState) -> None:
    model = _policy_model(chain)
    final = chain.state.policies
    if set(model) != set(final):
        report._add("policy", "final", f"policy ids differ: rebuilt={sorted(model)} state={sorted(final)}")
    for policy_id in sorted(set(model) & set(final)):
        report.counts["policy"] += 1
        want, have = model[policy_id], final[policy_id]
        rebuilt = (want["directives"], want["status"], want["version"], want["history"])
        stored = (
            [list(d) for d in have.directives], have.status.value, have.version,
            [bytes(h["txHash"]) for h in have.history],
        )
        if codec.encode(list(rebuilt)) != codec.encode(list(stored)):
            report._add("policy", policy_id, "final record differs from rebuild")


def _status(state: WorldState, owner: str) -> KeyStatus | None:
    record = current_record(state.keys, owner)
    return record.status if record else None


def _check_replay(report: AuditReport, chain: ChainState, keyring: Keyring | None) -> None:
    """Replay tx by tx for the key-lifecycle and confidentiality checks."""
    state = chain.state_at(0).copy()
    for block in chain.blocks[1:]:
        for tx in block.transactions:
            where = f"{block.height}:{tx.hash.hex()[:12]}"
            before = state.copy()
            if tx.function in (Function.POST_ORDER.value, Function.FILE_REPORT.value):
                _check_sealed(report, before, tx, where, keyring)
            try:
                apply_transaction(state, tx)
            except LedgerError as exc:
                report._add("chain", where, f"committed tx fails on replay: {exc.code.value}")
                return
            owners = set(before.keys) | set(state.keys)
            for owner in sorted(owners):
                old_records, new_records = before.keys.get(owner, []), state.keys.get(owner, [])
                if codec.encode([r.to_record() for r in old_records]) == codec.encode([r.to_record() for r in new_records]):
                    continue
                report.counts["pki"] += 1
                old = _status(before, owner)
                if old is KeyStatus.REVOKED and len(new_records) > len(old_records):
                    old = None
                new = _status(state, owner)
                if (old, new) not in PERMITTED_TRANSITIONS:
                    report._add("pki", where, f"{owner[:12]} {old} -> {new}")
                if tx.function not in _KEY_FUNCTIONS:
                    report._add("pki", where, f"key record changed by {tx.function}")
        if state.digest() != chain.state_at(block.height).digest():
            report._add("chain", block.height, "replayed state differs from recorded state")
    for owner, records in state.keys.items():
        for record in records:
            statuses = [None] + [KeyStatus(h["status"]) for h in record.history]
            for old, new in zip(statuses, statuses[1:]):
                if (old, new) not in PERMITTED_TRANSITIONS:
                    report._add("pki", owner[:12], f"history holds {old} -> {new}")


def _check_sealed(report: AuditReport, before: WorldState, tx, where: str, keyring: Keyring | None) -> None:
    report.counts["confidentiality"] += 1
    envelope = tx.confidential_payload
    if envelope is None:
        report._add("confidentiality", where, "sealed call without payload")
        return
    directory = before.key_directory()
    for recipient in envelope.recipients:
        record = directory.get(recipient)
        account = before.accounts.get(recipient)
        if record is None or record.status is not KeyStatus.AUTHORIZED:
            report._add("confidentiality", where, f"recipient {recipient[:12]} key not Authorized")
        if account is None or not account.active:
            report._add("confidentiality", where, f"recipient {recipient[:12]} not an active account")
    if keyring is None or tx.function != Function.FILE_REPORT.value:
        return
    for recipient in envelope.recipients:
        keys = keyring.by_id(recipient)
        record = directory.get(recipient)
        if keys is None or record is None:
            continue
        secret = next((s for s in keys.encryption_secrets if x25519_public(s) == record.key_bytes), None)
        if secret is None:
            continue
        try:
            content = open_envelope(envelope, recipient, secret)
        except EnvelopeError as exc:
            report._add("confidentiality", where, f"recipient cannot open report: {exc.code.value}")
            return
        if codec.sha256(content) != tx.args["contentDigest"]:
            report._add("confidentiality", where, "report content digest mismatch")
        return


def audit_trace(trace: SimulationTrace) -> AuditReport:
    report = AuditReport()

    verification = verify_chain_file(trace.chain_text)
    report.counts["chain"] = len(verification.blocks)
    for height in verification.failing_heights:
        report._add("chain", height, "block fails verification")
    reference = codec.sha256(trace.chain_text.encode("ascii")).hex()
    for node, (status, chain_digest) in trace.node_chain_digests().items():
        if status == "Live" and chain_digest != reference:
            report._add("chain", node, "live node holds a different chain")

    chain = None
    if verification.ok:
        try:
            chain = load_chain(trace.chain_text)
        except LedgerError as exc:
            report._add("chain", "load", exc.code.value)
    if chain is not None:
        _check_policies(report, chain)
        _check_replay(report, chain, trace.keyring)

    for outcome in trace.outcomes:
        report.counts["expectations"] += 1
        if not outcome.matches:
            report._add(
                "expectations", f"event{outcome.event}",
                f"{outcome.action} by {outcome.actor}: expected {outcome.expect}"
                + ("" if outcome.want == "-" else f" with {outcome.want}")
                + f", got {outcome.status}" + ("" if outcome.error == "-" else f":{outcome.error}")
                + ("" if outcome.detail == "-" else f" ({outcome.detail})"),
            )

    report.counts["equivocation"] = len(trace.consensus_log)
    for validator, height in trace.equivocations:
        report._add("equivocation", height, f"{validator} signed two blocks")
    return report
