"""Crash every subset of up to two validators and report liveness.

Usage: python3 scripts/fault_sweep.py [--seed N]

Single crashes start at tick 1 and last the whole run. Double crashes
start at --crash-tick and one of the two nodes comes back at
--recover-tick.
"""

from __future__ import annotations

import argparse
import itertools

from fcnledger.fixtures import CANONICAL_SEED, canonical_bundle, canonical_events
from fcnledger.sim import EventKind, audit_trace, run_scenario

FAULT_KINDS = (EventKind.NODE_CRASH, EventKind.NODE_RECOVER)


def without_faults(events):
    return [e for e in events if e.kind not in FAULT_KINDS]


def heights_by_tick(trace) -> dict[int, int]:
    """Chain height reached at the end of each tick that logged a round."""
    result, height = {}, 0
    for line in trace.consensus_log:
        values = dict(token.split("=", 1) for token in line.split())
        if values["outcome"] == "Finalized":
            height = int(values["height"])
        result[int(values["tick"])] = height
    return result


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=CANONICAL_SEED)
    parser.add_argument("--crash-tick", type=int, default=12)
    parser.add_argument("--recover-tick", type=int, default=20)
    args = parser.parse_args()

    bundle = canonical_bundle(args.seed)
    events = without_faults(canonical_events())
    validator_nodes = [n.node_id for n in bundle.config.nodes if n.validator]

    baseline = run_scenario(events, bundle, args.seed)
    print(f"f=0 height={baseline.chain.height} audit={'clean' if audit_trace(baseline).ok else 'FAIL'}")

    for node in validator_nodes:
        trace = run_scenario(events, bundle, args.seed, faults=[(node, "Crash", 1)])
        report = audit_trace(trace)
        pending = sum(o.status == "Pending" for o in trace.outcomes)
        timeouts = sum("outcome=Timeout" in line for line in trace.consensus_log)
        print(f"f=1 crashed={node} height={trace.chain.height} pending={pending} "
              f"timeouts={timeouts} audit={'clean' if report.ok else 'FAIL'}")

    for pair in itertools.combinations(validator_nodes, 2):
        faults = [(pair[0], "Crash", args.crash_tick), (pair[1], "Crash", args.crash_tick),
                  (pair[0], "Recover", args.recover_tick)]
        trace = run_scenario(events, bundle, args.seed, faults=faults)
        heights = heights_by_tick(trace)
        stalled = {heights[t] for t in heights if args.crash_tick < t < args.recover_tick}
        pending = sum(o.status == "Pending" for o in trace.outcomes)
        print(f"f=2 crashed={','.join(pair)} stalled_heights={sorted(stalled)} final={trace.chain.height} "
              f"pending={pending} audit={'clean' if audit_trace(trace).ok else 'FAIL'}")


if __name__ == "__main__":
    main()
