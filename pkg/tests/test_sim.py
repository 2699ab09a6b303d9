import pytest

from fcnledger.errors import ErrorCode, ScenarioError
from fcnledger.fixtures import CANONICAL_SEED, canonical_config_text, canonical_events
from fcnledger.genesis import parse_config
from fcnledger.sim import EventKind, SimulationTrace, audit_trace, parse_script, run_scenario

FAULT_KINDS = (EventKind.NODE_CRASH, EventKind.NODE_RECOVER)


def without_faults():
    return [e for e in canonical_events() if e.kind not in FAULT_KINDS]


def finalized_heights(trace) -> dict[int, int]:
    """Tick -> chain height after that tick's rounds."""
    result, height = {}, 0
    for line in trace.consensus_log:
        values = dict(token.split("=", 1) for token in line.split())
        if values["outcome"] == "Finalized":
            height = int(values["height"])
        result[int(values["tick"])] = height
    return result


def by_action(trace, action, actor=None):
    return [o for o in trace.outcomes if o.action == action and (actor is None or o.actor == actor)]


def test_canonical_run_meets_every_expectation(canonical_trace, canonical_audit):
    assert [o.to_line() for o in canonical_trace.outcomes if not o.matches] == []
    assert canonical_audit.ok
    assert canonical_trace.chain.height > 20


def test_same_seed_same_trace(bundle, canonical_trace):
    again = run_scenario(canonical_events(), bundle, CANONICAL_SEED)
    assert again.digest() == canonical_trace.digest()
    assert again.files() == canonical_trace.files()


def test_different_seed_still_audits_clean(bundle, canonical_trace):
    other = run_scenario(canonical_events(), bundle, CANONICAL_SEED + 1)
    assert other.digest() != canonical_trace.digest()
    assert audit_trace(other).ok


def test_live_nodes_agree(canonical_trace):
    digests = canonical_trace.node_chain_digests()
    crashed = {node for node, (status, _) in digests.items() if status == "Crashed"}
    assert crashed == {"ESP-DRONE"}
    assert len({chain for node, (_, chain) in digests.items() if node not in crashed}) == 1


def test_drone_crash_revokes_and_later_orders_exclude_it(bundle, canonical_trace):
    drone = bundle.keyring.accounts["ESP-DRONE"].account_id
    revoke = by_action(canonical_trace, "revokeKey", "JFC-ADMIN")[0]
    assert revoke.kind == "DroneCrash" and revoke.status == "Accepted"
    check = [o for o in by_action(canonical_trace, "retrieveKey", "ESP-HQ") if o.tick == 31][0]
    assert "status:Revoked" in check.detail.split(",")
    later = [tx.confidential_payload.recipients for block in canonical_trace.chain.blocks[revoke.height + 1:]
             for tx in block.transactions if tx.function == "postOrder"]
    assert later and all(drone not in recipients for recipients in later)
    recover = [o for o in by_action(canonical_trace, "postOrder", "JFC-ADMIN") if o.tick == 32][0]
    assert (recover.status, recover.error) == ("Rejected", "RecipientKeyRevoked")


def test_recovering_a_live_node_is_a_noop(canonical_trace):
    recoveries = by_action(canonical_trace, "recover")
    assert [o.status for o in recoveries] == ["Done", "Noop"]


def test_crashing_a_non_validator_leaves_production_alone(bundle):
    baseline = run_scenario(without_faults(), bundle, CANONICAL_SEED)
    trace = run_scenario(without_faults(), bundle, CANONICAL_SEED, faults=[("ITA-DRONE", "Crash", 1)])
    assert not any("outcome=Timeout" in line for line in trace.consensus_log)
    assert trace.chain.height == baseline.chain.height
    assert audit_trace(trace).ok


def test_explicit_route_through_a_dead_node_fails(bundle):
    trace = run_scenario(without_faults(), bundle, CANONICAL_SEED, faults=[("ESP-UNIT", "Crash", 1)])
    failed = [o for o in trace.outcomes if not o.matches]
    assert failed and {o.error for o in failed} == {ErrorCode.NODE_UNAVAILABLE.value}
    assert not any("outcome=Timeout" in line for line in trace.consensus_log)


@pytest.mark.parametrize("node", ["JFC", "ESP", "ITA", "PRT"])
def test_one_crashed_validator_is_tolerated(bundle, node):
    trace = run_scenario(without_faults(), bundle, CANONICAL_SEED, faults=[(node, "Crash", 1)])
    assert audit_trace(trace).ok
    assert all(o.status != "Pending" for o in trace.outcomes)


def test_two_crashed_validators_halt_until_one_returns(bundle):
    faults = [("ESP", "Crash", 12), ("ITA", "Crash", 12), ("ESP", "Recover", 20)]
    trace = run_scenario(without_faults(), bundle, CANONICAL_SEED, faults=faults)
    heights = finalized_heights(trace)
    stalled = {heights[t] for t in heights if 12 <= t < 20}
    assert len(stalled) == 1
    assert max(heights.values()) > stalled.pop()
    assert audit_trace(trace).ok


def test_unknown_node_in_run(bundle):
    with pytest.raises(ScenarioError) as info:
        run_scenario(without_faults(), bundle, 1, faults=[("NOWHERE", "Crash", 3)])
    assert info.value.code is ErrorCode.UNKNOWN_NODE


@pytest.mark.parametrize("text", [
    "1 Teleport caller=ESP-HQ",
    "x MissionOrder caller=ESP-HQ",
    "1 MissionOrder caller=NOBODY to=@all order_id=O order=x",
    "1 EnrollKey op=juggle caller=ESP-HQ",
    "1 NodeCrash node=ATLANTIS",
])
def test_malformed_script(bundle, text):
    with pytest.raises(ScenarioError) as info:
        run_scenario(parse_script(text), bundle, 1)
    assert info.value.code is ErrorCode.MALFORMED_SCRIPT


def test_bare_config_derives_keys():
    config = parse_config(canonical_config_text())
    script = parse_script("1 EnrollKey op=publishKey caller=ESP-HQ\n")
    trace = run_scenario(script, config, 7)
    assert trace.chain.height == 1 and audit_trace(trace).ok


def test_export_and_load_round_trip(tmp_path, canonical_trace, canonical_audit):
    out = canonical_trace.export(tmp_path / "trace", canonical_audit.lines())
    loaded = SimulationTrace.load(out, canonical_trace.keyring)
    assert loaded.digest() == canonical_trace.digest()
    assert (out / "trace.digest").read_text().strip() == canonical_trace.digest().hex()
    assert audit_trace(loaded).ok
