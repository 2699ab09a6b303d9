from __future__ import annotations

from dataclasses import dataclass, field

import pytest

from fcnledger.fixtures import CANONICAL_SEED, canonical_bundle, canonical_events
from fcnledger.genesis import GenesisBundle
from fcnledger.ledger import Block, ChainState, TransactionEnvelope, append_block
from fcnledger.rbac import Account, Function
from fcnledger.sim import audit_trace, run_scenario


@dataclass
class Harness:
    """Builds fully signed blocks on top of the canonical genesis."""

    bundle: GenesisBundle
    chain: ChainState = None
    nonces: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.chain is None:
            self.chain = self.bundle.chain

    def id(self, label: str) -> str:
        return self.bundle.keyring.accounts[label].account_id

    def keys(self, label: str):
        return self.bundle.keyring.accounts[label]

    def tx(self, label, function, args=None, payload=None, nonce=None, timestamp=0) -> TransactionEnvelope:
        if nonce is None:
            nonce = self.nonces.get(label, self.chain.state.nonces.get(self.id(label), -1)) + 1
        self.nonces[label] = max(nonce, self.nonces.get(label, -1))
        return TransactionEnvelope.create(
            self.keys(label).signing, nonce=nonce, caller=self.id(label),
            function=Function(function), args=args or {}, payload=payload, timestamp=timestamp,
        )

    def block(self, txs, *, signers=None, timestamp=None) -> Block:
        height = self.chain.height + 1
        validators = self.chain.validators
        block = Block.build(height, self.chain.head.hash, list(txs), validators.designated_proposer(height),
                            height if timestamp is None else timestamp)
        signers = validators.ids if signers is None else signers
        return block.with_signatures({v: self.bundle.keyring.validators[v].sign(block.hash) for v in signers})

    def commit(self, *txs) -> ChainState:
        self.chain = append_block(self.chain, self.block(txs))
        return self.chain

    def register_tx(self, label: str, admin: str = "JFC-ADMIN") -> TransactionEnvelope:
        spec = self.bundle.config.account(label)
        account = Account.from_key(self.keys(label).signing.public, spec.role, spec.tier, spec.nation, label)
        return self.tx(admin, Function.REGISTER_ACCOUNT, {"account": account.to_record()})

    def enroll(self, *labels: str, key_index: int = 0) -> None:
        """Register (when needed), publish and authorize each label's key."""
        fresh = [label for label in labels if self.id(label) not in self.chain.state.accounts]
        if fresh:
            self.commit(*[self.register_tx(label) for label in fresh])
        self.commit(*[
            self.tx(label, Function.PUBLISH_KEY, {"keyBytes": self.keys(label).encryption_public(key_index)})
            for label in labels
        ])
        self.commit(*[self.tx("JFC-ADMIN", Function.AUTHORIZE_KEY, {"owner": self.id(label)}) for label in labels])


@pytest.fixture(scope="session")
def bundle() -> GenesisBundle:
    return canonical_bundle()


@pytest.fixture
def harness(bundle) -> Harness:
    return Harness(bundle)


@pytest.fixture(scope="session")
def canonical_trace(bundle):
    return run_scenario(canonical_events(), bundle, CANONICAL_SEED)


@pytest.fixture(scope="session")
def canonical_audit(canonical_trace):
    return audit_trace(canonical_trace)


# ------------------------------------------------------------ acceptance summary

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = getattr(item.function, "criterion", None)
    if number is not None and report.when == "call":
        title, detail = item.function.title, getattr(item.function, "detail", "")
        verdict = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES[number] = f"criterion {number} {verdict} {title}" + (f" ({detail})" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
