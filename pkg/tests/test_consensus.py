import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcnledger.consensus import (
    EquivocationDetector,
    ProposalRound,
    Refusal,
    Timeout,
    Validator,
    Vote,
    finalize,
    propose,
)
from fcnledger.errors import ConsensusError, ErrorCode
from fcnledger.genesis import init_genesis
from fcnledger.ledger import Block, TransactionEnvelope, append_block
from fcnledger.rbac import Function


def network_config(n: int) -> str:
    sections = ["[chain]\nlabel = net-%d\n" % n, "[node.JFC]\nnation = JFC\ntier = Coalition\nvalidator = V0\n"]
    for i in range(1, n):
        sections.append(f"[node.N{i}]\nnation = N{i}\ntier = National\nvalidator = V{i}\n")
    sections.append("[account.ADMIN]\nrole = Administrator\ntier = Coalition\nnation = JFC\nnode = JFC\n")
    sections.append("[account.USER]\nrole = AuthorizedUser\ntier = Coalition\nnation = JFC\nnode = JFC\n")
    return "\n".join(sections)


class Network:
    def __init__(self, n: int) -> None:
        self.bundle = init_genesis(network_config(n), seed=n)
        self.chain = self.bundle.chain
        self.validators = {v: Validator(v, self.bundle.keyring.validators[v]) for v in self.chain.validators.ids}
        self.nonce = {}

    def tx(self, label="ADMIN", function=Function.PUBLISH_KEY, args=None) -> TransactionEnvelope:
        keys = self.bundle.keyring.accounts[label]
        nonce = self.nonce[label] = self.nonce.get(label, 0) + 1
        if args is None:
            args = {"keyBytes": keys.encryption_public(0)}
        return TransactionEnvelope.create(keys.signing, nonce=nonce, caller=keys.account_id,
                                          function=function, args=args)

    def attempt(self, pending, crashed=frozenset(), round=0):
        """One round with the live validators; returns (Block | Timeout, votes, refusals)."""
        height = self.chain.height + 1
        state = ProposalRound.open(self.chain.validators, height, round)
        proposer = state.designated_proposer
        if proposer in crashed:
            return finalize(state, Block.build(height, self.chain.head.hash, [], proposer, 0),
                            self.chain.validators), [], []
        candidate = self.validators[proposer].build_proposal(self.chain, pending, round=round, timestamp=height)
        votes, refusals = [], []
        for v, validator in self.validators.items():
            if v in crashed:
                continue
            answer = validator.review(self.chain, candidate.block, round=round, sender=proposer)
            (votes if isinstance(answer, Vote) else refusals).append(answer)
            if isinstance(answer, Vote):
                state.add(answer)
        return finalize(state, candidate.block, self.chain.validators), votes, refusals

    def produce(self, pending, crashed=frozenset()):
        """Try every round of one height; append and return the block, or None."""
        for round in range(len(self.validators)):
            outcome, _, _ = self.attempt(pending, crashed, round)
            if isinstance(outcome, Block):
                self.chain = append_block(self.chain, outcome)
                return outcome
        return None


@pytest.mark.parametrize("n,quorum", [(1, 1), (3, 3), (4, 3), (7, 5)])
def test_quorum_table(n, quorum):
    assert Network(n).chain.validators.quorum == quorum


def test_three_of_four_finalizes_two_times_out():
    net = Network(4)
    block = propose(1, [net.tx()], net.chain, net.chain.validators.designated_proposer(1)).block
    keys = net.bundle.keyring.validators
    state = ProposalRound.open(net.chain.validators, 1)
    for v in ("V0", "V1"):
        state.add(Vote(v, 1, 0, block.hash, keys[v].sign(block.hash)))
    timeout = finalize(state, block, net.chain.validators)
    assert isinstance(timeout, Timeout)
    assert timeout.signers == ("V0", "V1")
    assert timeout.next_proposer == net.chain.validators.designated_proposer(1, 1)
    state.add(Vote("V2", 1, 0, block.hash, keys["V2"].sign(block.hash)))
    sealed = finalize(state, block, net.chain.validators)
    assert isinstance(sealed, Block)
    assert append_block(net.chain, sealed).height == 1


def test_single_validator_finalizes_alone():
    net = Network(1)
    assert net.produce([net.tx()]) is not None
    assert net.chain.height == 1


def test_forged_signature_does_not_count():
    net = Network(4)
    block = propose(1, [net.tx()], net.chain, net.chain.validators.designated_proposer(1)).block
    state = ProposalRound.open(net.chain.validators, 1)
    keys = net.bundle.keyring.validators
    state.add(Vote("V0", 1, 0, block.hash, keys["V0"].sign(block.hash)))
    state.add(Vote("V1", 1, 0, block.hash, keys["V1"].sign(block.hash)))
    state.add(Vote("V2", 1, 0, block.hash, keys["V0"].sign(block.hash)))
    assert isinstance(finalize(state, block, net.chain.validators), Timeout)


def test_only_the_designated_proposer_may_propose():
    net = Network(4)
    designated = net.chain.validators.designated_proposer(1)
    other = next(v for v in net.chain.validators.ids if v != designated)
    with pytest.raises(ConsensusError) as info:
        propose(1, [net.tx()], net.chain, other)
    assert info.value.code is ErrorCode.NOT_DESIGNATED_PROPOSER
    candidate = propose(1, [net.tx()], net.chain, designated).block
    refusal = net.validators["V0"].review(net.chain, candidate, round=0, sender=other)
    assert isinstance(refusal, Refusal) and refusal.reason == ErrorCode.NOT_DESIGNATED_PROPOSER.value


def test_nothing_to_propose():
    net = Network(4)
    with pytest.raises(ConsensusError) as info:
        propose(1, [], net.chain, net.chain.validators.designated_proposer(1))
    assert info.value.code is ErrorCode.NO_PENDING_TRANSACTIONS


@pytest.mark.parametrize("n", [1, 3, 4, 7])
def test_rotation_is_fair(n):
    validators = Network(n).chain.validators
    picks = [validators.designated_proposer(h) for h in range(1, 1 + 10 * n)]
    assert {v: picks.count(v) for v in validators.ids} == {v: 10 for v in validators.ids}
    assert {validators.designated_proposer(5, r) for r in range(n)} == set(validators.ids)


@pytest.mark.parametrize("n", [1, 3, 4, 7])
def test_liveness_iff_quorum_is_live(n):
    for f in range(n + 1):
        for crashed in itertools.combinations(sorted(Network(n).chain.validators.ids), f):
            net = Network(n)
            block = net.produce([net.tx()], frozenset(crashed))
            assert (block is not None) is (n - f >= net.chain.validators.quorum), (n, crashed)


def test_stalled_height_completes_after_recovery():
    net = Network(4)
    crashed = frozenset({"V2", "V3"})
    assert net.produce([net.tx()], crashed) is None
    # the locks taken while stalled are honoured: the same candidate finalizes
    locked = {v.locks[1].hash for v in net.validators.values() if 1 in v.locks}
    block = net.produce([net.tx()], frozenset({"V3"}))
    assert block is not None and {block.hash} == locked


def test_faulty_proposer_is_refused_then_bypassed():
    net = Network(4)
    good = net.tx()
    bad = net.tx("USER", Function.REVOKE_KEY, {"owner": net.bundle.keyring.accounts["ADMIN"].account_id})
    proposer = net.chain.validators.designated_proposer(1, 0)
    candidate = propose(1, [good, bad], net.chain, proposer, check=False).block
    state = ProposalRound.open(net.chain.validators, 1, 0)
    answers = [v.review(net.chain, candidate, round=0, sender=proposer) for v in net.validators.values()]
    assert all(isinstance(a, Refusal) and a.reason == ErrorCode.TX_REJECTED.value for a in answers)
    assert isinstance(finalize(state, candidate, net.chain.validators), Timeout)
    assert all(1 not in v.locks for v in net.validators.values())
    outcome, votes, _ = net.attempt([good, bad], round=1)
    assert isinstance(outcome, Block) and len(votes) == 4
    assert [tx.hash for tx in outcome.transactions] == [good.hash]


def test_equivocating_validator_is_detected_and_cannot_fork():
    net = Network(4)
    keys = net.bundle.keyring.validators
    proposer = net.chain.validators.designated_proposer(1)
    a = propose(1, [net.tx()], net.chain, proposer).block
    b = propose(1, [net.tx()], net.chain, proposer).block
    assert a.hash != b.hash
    honest = [v for v in net.chain.validators.ids if v != proposer]
    for split in range(len(honest) + 1):
        detector = EquivocationDetector(net.chain.validators)
        validators = {v: Validator(v, keys[v]) for v in honest}
        rounds = {a.hash: ProposalRound.open(net.chain.validators, 1), b.hash: ProposalRound.open(net.chain.validators, 1)}
        for block in (a, b):
            vote = Vote(proposer, 1, 0, block.hash, keys[proposer].sign(block.hash))
            rounds[block.hash].add(vote)
            detector.observe(vote)
        for i, v in enumerate(honest):
            first, second = (a, b) if i < split else (b, a)
            for block in (first, second):
                answer = validators[v].review(net.chain, block, round=0, sender=proposer)
                if isinstance(answer, Vote):
                    rounds[block.hash].add(answer)
                    detector.observe(answer)
        sealed = [blk for blk in (a, b) if isinstance(finalize(rounds[blk.hash], blk, net.chain.validators), Block)]
        assert len(sealed) <= 1
        assert detector.offenders() == [(proposer, 1)]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2)), min_size=1, max_size=12))
def test_honest_validator_signs_one_candidate_per_height(reviews):
    net = Network(4)
    proposer = net.chain.validators.designated_proposer(1)
    candidates = [propose(1, [net.tx()], net.chain, proposer).block for _ in range(3)]
    validators = {v: Validator(v, net.bundle.keyring.validators[v]) for v in net.chain.validators.ids}
    signed = {v: set() for v in validators}
    for who, which in reviews:
        v = net.chain.validators.ids[who]
        answer = validators[v].review(net.chain, candidates[which], round=0, sender=proposer)
        if isinstance(answer, Vote):
            signed[v].add(answer.block_hash)
    assert all(len(hashes) <= 1 for hashes in signed.values())
