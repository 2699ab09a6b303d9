"""Run the canonical coalition scenario, audit it and export the trace.

Usage: python3 scripts/run_canonical.py [--seed N] [--out DIR] [--repeat K]

With --repeat the run is done K times and the trace digests compared.
"""

from __future__ import annotations

import argparse
import time
from collections import Counter

from fcnledger.fixtures import CANONICAL_SEED, canonical_bundle, canonical_events
from fcnledger.sim import audit_trace, run_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=CANONICAL_SEED)
    parser.add_argument("--out", default="fcn-out/canonical")
    parser.add_argument("--repeat", type=int, default=1)
    args = parser.parse_args()

    bundle = canonical_bundle(args.seed)
    digests = []
    for _ in range(args.repeat):
        started = time.perf_counter()
        trace = run_scenario(canonical_events(), bundle, args.seed)
        elapsed = time.perf_counter() - started
        digests.append(trace.digest().hex())

    report = audit_trace(trace)
    out = trace.export(args.out, report.lines())
    statuses = Counter(o.status for o in trace.outcomes)
    rounds = Counter(line.split("outcome=")[1].split()[0] for line in trace.consensus_log)
    print(f"seed {args.seed} height {trace.chain.height} head {trace.chain.head.hash.hex()}")
    print(f"outcomes {len(trace.outcomes)} " + " ".join(f"{k}={v}" for k, v in sorted(statuses.items())))
    print("rounds " + " ".join(f"{k}={v}" for k, v in sorted(rounds.items())))
    print(f"run time {elapsed:.2f} s")
    for line in report.lines():
        if line.startswith(("check ", "audit ", "discrepancy ")):
            print(line)
    print(f"trace digest {digests[-1]}")
    if args.repeat > 1:
        print(f"repeats {args.repeat} identical={len(set(digests)) == 1}")
    print(f"written {out}")


if __name__ == "__main__":
    main()
