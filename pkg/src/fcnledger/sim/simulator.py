"""Discrete-event simulation of a coalition ledger network.

Time is a logical tick. Inside a tick the simulator runs a fixed
sequence on a sub-tick clock:

1. scenario events for the tick (submissions are gossiped to validators),
2. one consensus round if any validator has pending work,
3. delivery of every message still in flight.

Each directed link has a delay drawn once from the run seed, so message
order, and therefore the whole trace, is a pure function of
(script, genesis, seed).
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable

from fcnledger import codec
from fcnledger.consensus import (
    ConsensusLogEntry,
    EquivocationDetector,
    ProposalRound,
    Refusal,
    Timeout,
    Validator,
    Vote,
    finalize,
)
from fcnledger.envelope import EncryptedEnvelope, seal_envelope
from fcnledger.errors import (
    BlockRejected,
    ConfigError,
    ConsensusError,
    ContractError,
    EnvelopeError,
    ErrorCode,
    ScenarioError,
)
from fcnledger.genesis import GenesisBundle, GenesisConfig, Keyring, build_genesis, parse_directives
from fcnledger.ledger import Block, ChainState, TransactionEnvelope, append_block, load_chain
from fcnledger.pki import KeyStatus
from fcnledger.rbac import Account, Function, Tier
from fcnledger.sim.scenario import EventKind, ScenarioEvent
from fcnledger.state import query

SUBTICKS = 100
MAX_LINK_DELAY = 5
ROUND_START = MAX_LINK_DELAY + 1
VOTE_DEADLINE = 2 * MAX_LINK_DELAY + 1
DRAIN_TICKS = 40

CHAIN_FILE = "chain.txt"
CONSENSUS_FILE = "consensus.log"
RECEIPTS_FILE = "receipts.txt"
NODES_FILE = "nodes.txt"
AUDIT_FILE = "audit.txt"
DIGEST_FILE = "trace.digest"
TRACE_FILES = (CHAIN_FILE, CONSENSUS_FILE, RECEIPTS_FILE, NODES_FILE)


class NodeStatus(str, Enum):
    LIVE = "Live"
    CRASHED = "Crashed"


@dataclass
class SimNode:
    node_id: str
    nation: str
    tier: Tier
    hosted_accounts: list[str]
    is_validator: bool
    chain: ChainState = field(repr=False)
    status: NodeStatus = NodeStatus.LIVE
    validator: Validator | None = field(default=None, repr=False)
    pool: dict[bytes, TransactionEnvelope] = field(default_factory=dict, repr=False)
    committed: set[bytes] = field(default_factory=set, repr=False)

    @property
    def live(self) -> bool:
        return self.status is NodeStatus.LIVE


# ---------------------------------------------------------------- messages


@dataclass(frozen=True)
class TxGossip:
    tx: TransactionEnvelope


@dataclass(frozen=True)
class Proposal:
    round: int
    sender: str
    block: Block


@dataclass(frozen=True)
class Ballot:
    vote: Vote | Refusal


@dataclass(frozen=True)
class Commit:
    block: Block


@dataclass(frozen=True)
class Drop:
    tx_hashes: tuple[bytes, ...]


class DeliveryQueue:
    """Timestamped message queue with fixed per-link delays."""

    def __init__(self, seed: int | str, node_ids: Iterable[str]) -> None:
        rng = random.Random(f"fcn-links:{seed}")
        node_ids = list(node_ids)
        self.delays = {
            (a, b): (0 if a == b else rng.randint(1, MAX_LINK_DELAY)) for a in node_ids for b in node_ids
        }
        self._heap: list = []
        self._seq = 0
        self.dropped = 0

    def send(self, now: int, src: str, dst: str, message: Any) -> None:
        heapq.heappush(self._heap, (now + self.delays[(src, dst)], self._seq, src, dst, message))
        self._seq += 1

    def pop_due(self, until: int):
        while self._heap and self._heap[0][0] <= until:
            yield heapq.heappop(self._heap)

    def drop_node(self, node_id: str) -> int:
        kept = [item for item in self._heap if node_id not in (item[2], item[3])]
        removed = len(self._heap) - len(kept)
        heapq.heapify(kept)
        self._heap = kept
        self.dropped += removed
        return removed


# ---------------------------------------------------------------- outcomes


def _expected(status: str, error: str) -> str:
    return status if error == "-" else f"{status}:{error}"


@dataclass
class EventOutcome:
    """What one scripted action did, and what the script said it should do."""

    event: int
    tick: int
    kind: str
    action: str
    actor: str
    status: str = "Pending"
    error: str = "-"
    height: int | None = None
    tx: str = "-"
    expect: str = "Accepted"
    want: str = "-"
    detail: str = "-"

    @property
    def matches(self) -> bool:
        expected_status, _, expected_error = self.expect.partition(":")
        if self.status != expected_status or (expected_error and self.error != expected_error):
            return False
        if self.want != "-":
            have = set(self.detail.split(","))
            return all(item in have for item in self.want.split(","))
        return True

    _FIELDS = ("event", "tick", "kind", "action", "actor", "status", "error", "height", "tx", "expect", "want", "detail")

    def to_line(self) -> str:
        values = {f: getattr(self, f) for f in self._FIELDS}
        values["height"] = "-" if self.height is None else self.height
        return " ".join(f"{k}={v}" for k, v in values.items()) + f" check={'ok' if self.matches else 'FAIL'}"

    @classmethod
    def from_line(cls, line: str) -> "EventOutcome":
        values = dict(token.split("=", 1) for token in line.split())
        values.pop("check", None)
        height = values.pop("height")
        return cls(
            event=int(values.pop("event")),
            tick=int(values.pop("tick")),
            height=None if height == "-" else int(height),
            **{k: values[k] for k in cls._FIELDS if k in values},
        )


# ---------------------------------------------------------------- trace


@dataclass
class SimulationTrace:
    chain_text: str
    consensus_log: list[str]
    outcomes: list[EventOutcome]
    nodes: list[str]
    keyring: Keyring | None = field(default=None, repr=False)
    orders: list[dict] = field(default_factory=list)
    equivocations: list[tuple[str, int]] = field(default_factory=list)

    @cached_property
    def chain(self) -> ChainState:
        return load_chain(self.chain_text)

    def files(self) -> dict[str, str]:
        return {
            CHAIN_FILE: self.chain_text,
            CONSENSUS_FILE: "".join(line + "\n" for line in self.consensus_log),
            RECEIPTS_FILE: "".join(o.to_line() + "\n" for o in self.outcomes),
            NODES_FILE: "".join(line + "\n" for line in self.nodes),
        }

    def digest(self) -> bytes:
        h = hashlib.sha256()
        for name, text in self.files().items():
            h.update(codec.encode([name, text.encode("utf-8")]))
        return h.digest()

    def node_chain_digests(self) -> dict[str, tuple[str, str]]:
        """node -> (status, chain digest hex)."""
        result = {}
        for line in self.nodes:
            values = dict(token.split("=", 1) for token in line.split())
            result[values["node"]] = (values["status"], values["chain"])
        return result

    def export(self, directory: str | Path, audit_lines: Iterable[str] | None = None) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, text in self.files().items():
            (directory / name).write_text(text)
        if audit_lines is not None:
            (directory / AUDIT_FILE).write_text("".join(line + "\n" for line in audit_lines))
        (directory / DIGEST_FILE).write_text(self.digest().hex() + "\n")
        return directory

    @classmethod
    def load(cls, directory: str | Path, keyring: Keyring | None = None) -> "SimulationTrace":
        directory = Path(directory)
        read = lambda name: (directory / name).read_text()  # noqa: E731
        return cls(
            chain_text=read(CHAIN_FILE),
            consensus_log=read(CONSENSUS_FILE).splitlines(),
            outcomes=[EventOutcome.from_line(line) for line in read(RECEIPTS_FILE).splitlines() if line.strip()],
            nodes=read(NODES_FILE).splitlines(),
            keyring=keyring,
        )


# ---------------------------------------------------------------- simulator

_LABEL_PARAMS = ("caller", "admin", "account", "author", "drone", "owner")
_TX_OPS = {
    EventKind.CONFIGURE_ASSET: {
        "createPolicy", "retrievePolicy", "requestModification", "modifyPolicy", "evaluateRequest",
    },
    EventKind.ENROLL_KEY: {"publishKey", "updateKey", "retrieveKey", "revokeKey", "authorizeKey"},
    EventKind.DEPLOY: {"registerAccount", "deactivateAccount"},
}


class Simulator:
    def __init__(self, bundle: GenesisBundle, events: Iterable[ScenarioEvent] = (), seed: int | str = 0) -> None:
        self.config: GenesisConfig = bundle.config
        self.keyring: Keyring = bundle.keyring
        self.seed = seed
        genesis_chain = bundle.chain
        self.validators = genesis_chain.validators

        self.nodes: dict[str, SimNode] = {}
        for spec in self.config.nodes:
            hosted = [self.keyring.accounts[a.label].account_id for a in self.config.accounts if a.node == spec.node_id]
            validator = None
            if spec.validator:
                validator = Validator(spec.validator, self.keyring.validators[spec.validator])
            self.nodes[spec.node_id] = SimNode(
                spec.node_id, spec.nation, spec.tier, hosted, validator is not None, genesis_chain, validator=validator,
            )
        self._validator_node = {n.validator.validator_id: n for n in self.nodes.values() if n.validator}

        self.schedule: list[ScenarioEvent] = sorted(events, key=lambda e: e.tick)
        self.queue = DeliveryQueue(seed, self.nodes)
        self._envelope_rng = random.Random(f"fcn-envelopes:{seed}")
        self.nonces = {a.label: genesis_chain.state.nonces.get(self.keyring.accounts[a.label].account_id, -1) + 1
                       for a in self.config.accounts}
        self.key_index = {a.label: 0 for a in self.config.accounts}
        self.refs: dict[str, str] = {}

        self.log: list[ConsensusLogEntry] = []
        self.outcomes: list[EventOutcome] = []
        self.orders: list[dict] = []
        self.detector = EquivocationDetector(self.validators)
        self._pending: dict[bytes, list[EventOutcome]] = {}
        self._ref_of: dict[bytes, str] = {}
        self._rejected: set[bytes] = set()
        self._seen_heights: set[int] = set()
        self._round_height = 1
        self._round = 0
        self._active: tuple[ProposalRound, Block, SimNode] | None = None
        self._now = 0

    # -- schedule -----------------------------------------------------

    def inject_fault(self, node_id: str, kind: str, tick: int) -> list[ScenarioEvent]:
        """Schedule ``Crash`` or ``Recover`` of ``node_id`` at ``tick``."""
        if node_id not in self.nodes:
            raise ScenarioError(ErrorCode.UNKNOWN_NODE, node_id)
        kinds = {"Crash": EventKind.NODE_CRASH, "Recover": EventKind.NODE_RECOVER}
        if kind not in kinds:
            raise ValueError(f"fault kind must be Crash or Recover, not {kind!r}")
        # injected faults take effect before the scripted events of their tick
        position = next((i for i, e in enumerate(self.schedule) if e.tick >= tick), len(self.schedule))
        while position < len(self.schedule) and self.schedule[position].tick == tick and self.schedule[position].line == 0:
            position += 1
        self.schedule.insert(position, ScenarioEvent(tick, kinds[kind], {"node": node_id}))
        return self.schedule

    def _validate_schedule(self) -> None:
        labels = {a.label for a in self.config.accounts}
        for event in self.schedule:
            where = f"line {event.line}" if event.line else f"tick {event.tick}"

            def bad(msg: str):
                raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"{where}: {msg}")

            for name in _LABEL_PARAMS:
                value = event.get(name)
                if value is not None and value not in labels:
                    bad(f"unknown account {value!r}")
            for name in ("node", "via"):
                value = event.get(name)
                if value is not None and value not in self.nodes:
                    bad(f"unknown node {value!r}")
            op = event.get("op")
            if event.kind in _TX_OPS and op is not None and op not in _TX_OPS[event.kind]:
                bad(f"{event.kind.value} cannot run op {op!r}")
            if event.kind in (EventKind.MISSION_ORDER, EventKind.FILE_REPORT):
                for token in event.get("to", "").split(","):
                    if token and not token.startswith("@") and token not in labels:
                        bad(f"unknown recipient {token!r}")
            try:
                if (event.get("directives") or "").strip():
                    parse_directives(event.get("directives"))
            except (ValueError, ContractError) as exc:
                bad(f"bad directives: {exc}")
            for name in ("key", "expect_version"):
                if event.get(name) is not None and not event.get(name).isdigit():
                    bad(f"{name} must be a non-negative integer")

    # -- helpers ------------------------------------------------------

    def _id(self, label: str) -> str:
        return self.keyring.accounts[label].account_id

    def _host(self, label: str) -> SimNode:
        return self.nodes[self.config.account(label).node]

    def _outcome(self, index: int, event: ScenarioEvent, action: str, actor: str, expect: str | None = None) -> EventOutcome:
        want = []
        if event.get("expect_status"):
            want.append(f"status:{event.get('expect_status')}")
        if event.get("expect_version"):
            want.append(f"version:{event.get('expect_version')}")
        outcome = EventOutcome(
            index, event.tick, event.kind.value, action, actor,
            expect=expect or event.get("expect", "Accepted"), want=",".join(want) or "-",
        )
        self.outcomes.append(outcome)
        return outcome

    def _entry(self, label: str, event: ScenarioEvent) -> SimNode:
        """Node a client talks to: ``via`` if given, else its host, else a live peer."""
        if event.get("via"):
            return self.nodes[event.get("via")]
        host = self._host(label)
        if host.live:
            return host
        peers = [n for n in self.nodes.values() if n.live]
        same_nation = [n for n in peers if n.nation == host.nation]
        return (same_nation or peers or [host])[0]

    def _submit(
        self, index: int, event: ScenarioEvent, label: str, function: Function, args: dict,
        payload: EncryptedEnvelope | None = None, expect: str | None = None, ref: str | None = None,
    ) -> EventOutcome:
        outcome = self._outcome(index, event, function.value, label, expect)
        node = self._entry(label, event)
        if not node.live:
            outcome.status, outcome.error = "Rejected", ErrorCode.NODE_UNAVAILABLE.value
            return outcome
        keys = self.keyring.accounts[label]
        tx = TransactionEnvelope.create(
            keys.signing, nonce=self.nonces[label], caller=keys.account_id, function=function,
            args=args, payload=payload, timestamp=event.tick,
        )
        self.nonces[label] += 1
        outcome.tx = tx.hash.hex()
        self._pending.setdefault(tx.hash, []).append(outcome)
        if ref:
            self._ref_of[tx.hash] = ref
        for target in self.nodes.values():
            if target.is_validator:
                self.queue.send(self._now, node.node_id, target.node_id, TxGossip(tx))
        return outcome

    def _query(self, index: int, event: ScenarioEvent, label: str, function: Function, args: dict) -> EventOutcome:
        outcome = self._outcome(index, event, function.value, label)
        node = self._entry(label, event)
        outcome.height = node.chain.height
        if not node.live:
            outcome.status, outcome.error = "Rejected", ErrorCode.NODE_UNAVAILABLE.value
            return outcome
        try:
            view = query(node.chain.state, self._id(label), function, args)
        except ContractError as exc:
            outcome.status, outcome.error = "Rejected", exc.code.value
            return outcome
        outcome.status = "Accepted"
        outcome.detail = f"status:{view.status.value},version:{view.version}"
        return outcome

    def _recipients(self, spec: str, sender: str, node: SimNode) -> list[str]:
        state = node.chain.state
        directory = state.key_directory()
        chosen: list[str] = []
        for token in spec.split(","):
            if not token:
                continue
            if not token.startswith("@"):
                chosen.append(self._id(token))
                continue
            group = token[1:]
            for account in state.accounts.values():
                record = directory.get(account.account_id)
                if (
                    account.account_id != self._id(sender)
                    and account.active
                    and (group == "all" or account.nation == group)
                    and record is not None
                    and record.status is KeyStatus.AUTHORIZED
                ):
                    chosen.append(account.account_id)
        return sorted(set(chosen))

    def _sealed_submit(
        self, index: int, event: ScenarioEvent, label: str, function: Function, args: dict, plaintext: bytes
    ) -> EventOutcome:
        node = self._entry(label, event)
        if not node.live:
            outcome = self._outcome(index, event, function.value, label)
            outcome.status, outcome.error = "Rejected", ErrorCode.NODE_UNAVAILABLE.value
            return outcome
        recipients = self._recipients(event.get("to"), label, node)
        try:
            if not recipients:
                raise EnvelopeError(ErrorCode.INVALID_ARGUMENT, "no recipients resolved")
            envelope = seal_envelope(plaintext, recipients, node.chain.state.key_directory(),
                                     randbytes=self._envelope_rng.randbytes)
        except EnvelopeError as exc:
            outcome = self._outcome(index, event, function.value, label)
            outcome.status, outcome.error, outcome.height = "Rejected", exc.code.value, node.chain.height
            return outcome
        outcome = self._submit(index, event, label, function, args, payload=envelope)
        outcome.detail = f"recipients:{len(recipients)}"
        self.orders.append({
            "event": index, "tick": event.tick, "function": function.value, "sender": self._id(label),
            "recipients": recipients, "tx": outcome.tx, "sealedAt": node.chain.height,
            "id": args.get("orderId") or args.get("reportId"),
        })
        return outcome

    # -- event handlers -----------------------------------------------

    def _handle(self, index: int, event: ScenarioEvent) -> None:
        kind = event.kind
        if kind is EventKind.NODE_CRASH:
            self._crash(index, event, event.get("node"))
        elif kind is EventKind.NODE_RECOVER:
            self._recover(index, event, event.get("node"))
        elif kind is EventKind.DEPLOY:
            self._deploy(index, event)
        elif kind is EventKind.CONFIGURE_ASSET:
            self._policy_op(index, event)
        elif kind is EventKind.ENROLL_KEY:
            self._key_op(index, event)
        elif kind is EventKind.MISSION_ORDER:
            order_id = event.get("order_id", f"ORD-{index:03d}")
            self._sealed_submit(index, event, event.get("caller"), Function.POST_ORDER,
                                {"orderId": order_id}, event.get("order").encode("utf-8"))
        elif kind is EventKind.FILE_REPORT:
            content = event.get("content").encode("utf-8")
            self._sealed_submit(index, event, event.get("author"), Function.FILE_REPORT,
                                {"contentDigest": codec.sha256(content), "reportId": event.get("report")}, content)
        elif kind is EventKind.DRONE_CRASH:
            drone, admin = event.get("drone"), event.get("admin")
            self._crash(index, event, self.config.account(drone).node)
            plain = replace(event, params={k: v for k, v in event.params.items() if k not in ("via", "expect")})
            self._submit(index, plain, admin, Function.REVOKE_KEY, {"owner": self._id(drone)})
            self._submit(index, plain, admin, Function.DEACTIVATE_ACCOUNT, {"target": self._id(drone)})

    def _deploy(self, index: int, event: ScenarioEvent) -> None:
        admin, label = event.get("admin"), event.get("account")
        if event.get("op", "registerAccount") == "deactivateAccount":
            self._submit(index, event, admin, Function.DEACTIVATE_ACCOUNT, {"target": self._id(label)})
            return
        spec = self.config.account(label)
        account = Account.from_key(self.keyring.accounts[label].signing.public, spec.role, spec.tier, spec.nation, label)
        self._submit(index, event, admin, Function.REGISTER_ACCOUNT, {"account": account.to_record()})

    def _policy_op(self, index: int, event: ScenarioEvent) -> None:
        op, caller = Function(event.get("op")), event.get("caller")

        def directives():
            text = event.get("directives", "")
            return [list(d) for d in parse_directives(text)] if text.strip() else []

        if op is Function.RETRIEVE_POLICY:
            self._query(index, event, caller, op, {"policyId": event.get("policy", "")})
        elif op is Function.CREATE_POLICY:
            self._submit(index, event, caller, op, {
                "directives": directives(), "name": event.get("name", event.get("policy", "")),
                "policyId": event.get("policy", ""),
            })
        elif op is Function.REQUEST_MODIFICATION:
            self._submit(index, event, caller, op, {"directives": directives(), "policyId": event.get("policy", "")},
                         ref=event.get("ref"))
        elif op is Function.MODIFY_POLICY:
            self._submit(index, event, caller, op, {
                "directives": directives() if event.get("directives") else None,
                "policyId": event.get("policy", ""),
                "status": event.get("status"),
            })
        elif op is Function.EVALUATE_REQUEST:
            request = event.get("request", "")
            if request.startswith("@"):
                request = self.refs.get(request[1:], request)
            self._submit(index, event, caller, op, {
                "decision": event.get("decision", "approve"), "rationale": event.get("rationale", ""),
                "requestId": request,
            })

    def _key_op(self, index: int, event: ScenarioEvent) -> None:
        op, caller = Function(event.get("op")), event.get("caller")
        if op in (Function.PUBLISH_KEY, Function.UPDATE_KEY):
            keys = self.keyring.accounts[caller]
            slot = int(event.get("key", self.key_index[caller]))
            if slot >= len(keys.encryption_secrets):
                raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"{caller} has no encryption key {slot}")
            self.key_index[caller] = slot + 1
            self._submit(index, event, caller, op, {"keyBytes": keys.encryption_public(slot)})
        elif op is Function.RETRIEVE_KEY:
            self._query(index, event, caller, op, {"owner": self._id(event.get("owner"))})
        else:
            self._submit(index, event, caller, op, {"owner": self._id(event.get("owner"))})

    def _crash(self, index: int, event: ScenarioEvent, node_id: str) -> None:
        outcome = self._outcome(index, event, "crash", node_id, expect="Done")
        node = self.nodes[node_id]
        if not node.live:
            outcome.status = "Noop"
            outcome.expect = event.get("expect", "Noop") if event.kind is EventKind.NODE_CRASH else "Noop"
            return
        node.status = NodeStatus.CRASHED
        dropped = self.queue.drop_node(node_id)
        outcome.status, outcome.detail = "Done", f"dropped:{dropped}"

    def _recover(self, index: int, event: ScenarioEvent, node_id: str) -> None:
        node = self.nodes[node_id]
        if node.live:
            self._outcome(index, event, "recover", node_id, expect=event.get("expect", "Noop")).status = "Noop"
            return
        outcome = self._outcome(index, event, "recover", node_id, expect=event.get("expect", "Done"))
        node.status = NodeStatus.LIVE
        peers = [n for n in self.nodes.values() if n.live and n is not node]
        synced = 0
        if peers:
            best = max(peers, key=lambda n: n.chain.height)
            for block in best.chain.blocks[node.chain.height + 1:]:
                self._apply_commit(node, block)
                synced += 1
            if node.is_validator:
                donors = [n for n in peers if n.is_validator]
                if donors:
                    donor = max(donors, key=lambda n: n.chain.height)
                    for h, tx in donor.pool.items():
                        if h not in node.committed:
                            node.pool.setdefault(h, tx)
                # learn the candidates peers signed while this node was down
                for peer in donors:
                    for height, candidates in peer.validator.seen.items():
                        if height > node.chain.height:
                            for block, signers in candidates.values():
                                node.validator.observe(block, signers)
        outcome.status, outcome.detail = "Done", f"synced:{synced}"

    # -- messages -----------------------------------------------------

    def _deliver_until(self, until: int) -> None:
        for when, _, src, dst, message in self.queue.pop_due(until):
            self._now = when
            node = self.nodes[dst]
            if not node.live or not self.nodes[src].live:
                self.queue.dropped += 1
                continue
            self._receive(node, src, message)
        self._now = max(self._now, until)

    def _broadcast(self, src: SimNode, message: Any, validators_only: bool = True) -> None:
        for target in self.nodes.values():
            if target.is_validator or not validators_only:
                self.queue.send(self._now, src.node_id, target.node_id, message)

    def _receive(self, node: SimNode, src: str, message: Any) -> None:
        if isinstance(message, TxGossip):
            if node.is_validator and message.tx.hash not in node.committed and message.tx.hash not in self._rejected:
                node.pool.setdefault(message.tx.hash, message.tx)
        elif isinstance(message, Proposal):
            if node.validator is None:
                return
            node.validator.observe(message.block)
            ballot = node.validator.review(node.chain, message.block, round=message.round, sender=message.sender)
            self._broadcast(node, Ballot(ballot))
        elif isinstance(message, Ballot):
            vote = message.vote
            if node.validator is None or not isinstance(vote, Vote):
                return
            node.validator.observe_vote(vote)
            self.detector.observe(vote)
            if self._active is not None:
                round_, block, proposer = self._active
                if node is proposer and vote.round == round_.round and vote.block_hash == block.hash:
                    round_.add(vote)
        elif isinstance(message, Commit):
            if message.block.height == node.chain.height + 1:
                self._apply_commit(node, message.block)
        elif isinstance(message, Drop):
            for h in message.tx_hashes:
                node.pool.pop(h, None)

    def _apply_commit(self, node: SimNode, block: Block) -> None:
        try:
            node.chain = append_block(node.chain, block)
        except BlockRejected:
            return
        for tx in block.transactions:
            node.committed.add(tx.hash)
            node.pool.pop(tx.hash, None)
        if block.height in self._seen_heights:
            return
        self._seen_heights.add(block.height)
        for receipt in node.chain.receipts[-1]:
            for outcome in self._pending.pop(receipt.tx_hash, []):
                outcome.status, outcome.height = "Accepted", block.height
                for name, attrs in receipt.events:
                    if name == "ModificationRequested" and receipt.tx_hash in self._ref_of:
                        self.refs[self._ref_of[receipt.tx_hash]] = attrs["requestId"]

    def _record_rejections(self, rejected, height: int) -> None:
        for tx, code in rejected:
            self._rejected.add(tx.hash)
            for outcome in self._pending.pop(tx.hash, []):
                outcome.status, outcome.error, outcome.height = "Rejected", code.value, height - 1

    # -- consensus ------------------------------------------------------

    def _consensus_round(self, tick: int) -> None:
        """Run rounds until one finalizes, at most one per validator."""
        for _ in self.validators.ids:
            if not self._attempt_round(tick):
                return

    def _attempt_round(self, tick: int) -> bool:
        """One proposal round; True when it timed out."""
        live = [n for n in self.nodes.values() if n.is_validator and n.live]
        if not live:
            return False
        height = max(n.chain.height for n in live) + 1
        if height != self._round_height:
            self._round_height, self._round = height, 0
        if not any(n.pool for n in live) and not any(n.validator.known_candidate(height) for n in live):
            return False
        round_no = self._round
        proposer_id = self.validators.designated_proposer(height, round_no)
        proposer = self._validator_node[proposer_id]
        if not proposer.live or proposer.chain.height != height - 1:
            self.log.append(ConsensusLogEntry(tick, height, round_no, proposer_id, (), "Timeout"))
            self._round += 1
            self._deliver_until(self._now + VOTE_DEADLINE)
            return True
        try:
            candidate = proposer.validator.build_proposal(
                proposer.chain, list(proposer.pool.values()), round=round_no, timestamp=tick
            )
        except ConsensusError as exc:
            rejected = getattr(exc, "rejected", ())
            self._record_rejections(rejected, height)
            self._broadcast(proposer, Drop(tuple(tx.hash for tx, _ in rejected)))
            return False
        if candidate.rejected:
            self._record_rejections(candidate.rejected, height)
            self._broadcast(proposer, Drop(tuple(tx.hash for tx, _ in candidate.rejected)))
        round_ = ProposalRound.open(self.validators, height, round_no)
        self._active = (round_, candidate.block, proposer)
        self._broadcast(proposer, Proposal(round_no, proposer_id, candidate.block))
        self._deliver_until(self._now + VOTE_DEADLINE)
        self._active = None
        result = finalize(round_, candidate.block, self.validators)
        if isinstance(result, Timeout):
            self.log.append(ConsensusLogEntry(tick, height, round_no, proposer_id, result.signers, "Timeout",
                                              candidate.block.hash))
            self._round += 1
            return True
        self.log.append(ConsensusLogEntry(tick, height, round_no, proposer_id, tuple(result.validator_signatures),
                                          "Finalized", result.hash))
        self._broadcast(proposer, Commit(result), validators_only=False)
        return False

    # -- main loop ------------------------------------------------------

    def run(self) -> SimulationTrace:
        self._validate_schedule()
        last_tick = max((e.tick for e in self.schedule), default=0)
        cursor, tick = 0, 0
        while True:
            base = tick * SUBTICKS
            self._deliver_until(base)
            while cursor < len(self.schedule) and self.schedule[cursor].tick == tick:
                self._handle(cursor, self.schedule[cursor])
                cursor += 1
            self._deliver_until(base + ROUND_START)
            self._consensus_round(tick)
            self._deliver_until(base + SUBTICKS - 1)
            if tick >= last_tick and (not self._pending or tick >= last_tick + DRAIN_TICKS):
                break
            tick += 1
        return self._trace()

    def _reference_node(self) -> SimNode:
        live = [n for n in self.nodes.values() if n.live] or list(self.nodes.values())
        return max(live, key=lambda n: n.chain.height)

    def _trace(self) -> SimulationTrace:
        reference = self._reference_node()
        nodes = [
            f"node={n.node_id} status={n.status.value} height={n.chain.height} "
            f"chain={codec.sha256(n.chain.serialize().encode('ascii')).hex()}"
            for n in self.nodes.values()
        ]
        trace = SimulationTrace(
            chain_text=reference.chain.serialize(),
            consensus_log=[entry.line() for entry in self.log],
            outcomes=self.outcomes,
            nodes=nodes,
            keyring=self.keyring,
            orders=self.orders,
            equivocations=self.detector.offenders(),
        )
        trace.__dict__["chain"] = reference.chain
        return trace


def run_scenario(
    script: Iterable[ScenarioEvent],
    genesis: GenesisBundle | GenesisConfig,
    seed: int | str = 0,
    faults: Iterable[tuple[str, str, int]] = (),
) -> SimulationTrace:
    """Run ``script`` on ``genesis``; ``faults`` are extra (node, Crash|Recover, tick).

    A bare GenesisConfig gets key material derived from ``seed``.
    """
    if isinstance(genesis, GenesisConfig):
        try:
            genesis.validate()
            keyring = Keyring.derive(genesis, seed)
            keyring.check_distinct()
            genesis = GenesisBundle(genesis, "", keyring, build_genesis(genesis, keyring))
        except (ConfigError, ValueError) as exc:
            raise ScenarioError(ErrorCode.GENESIS_INVALID, str(exc)) from exc
    sim = Simulator(genesis, script, seed)
    for node_id, kind, tick in faults:
        sim.inject_fault(node_id, kind, tick)
    return sim.run()
