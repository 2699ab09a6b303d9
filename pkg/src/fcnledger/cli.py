"""Operator command line: ``init``, ``run``, ``inspect`` and ``verify``.

Exit codes: 0 success, 1 a discrepancy was found (bad chain, failed audit,
tampered genesis), 2 usage or parse errors. ``FCN_OUT_DIR`` sets the
default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from fcnledger import codec
from fcnledger.envelope import open_envelope
from fcnledger.errors import ConfigError, EnvelopeError, ErrorCode, LedgerError, ScenarioError
from fcnledger.fixtures import CANONICAL_SEED, canonical_config_text, canonical_script_text
from fcnledger.genesis import AccountKeys, init_genesis, read_genesis_dir, write_genesis_dir
from fcnledger.ledger import load_chain, verify_chain_file
from fcnledger.sim import audit_trace, parse_script, run_scenario

EXIT_OK, EXIT_DISCREPANCY, EXIT_USAGE = 0, 1, 2


class _Fail(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.exit_code = code


def _out_root() -> Path:
    return Path(os.environ.get("FCN_OUT_DIR", "fcn-out"))


def _read_text(path: str | None, fallback) -> str:
    if path is None:
        return fallback()
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {exc.strerror}") from exc


def _render(value: Any) -> str:
    def plain(v):
        if isinstance(v, bytes):
            return v.hex()
        if isinstance(v, dict):
            return {k: plain(x) for k, x in v.items()}
        if isinstance(v, list):
            return [plain(x) for x in v]
        return v

    value = plain(value)
    if value is None:
        return "-"
    if isinstance(value, (dict, list)):
        return json.dumps(value, separators=(",", ":"), sort_keys=True)
    return str(value)


def cmd_init(args) -> int:
    text = _read_text(args.config, canonical_config_text)
    bundle = init_genesis(text, args.seed)
    out = write_genesis_dir(bundle, args.out or _out_root() / "genesis")
    print(f"genesis {bundle.block.hash.hex()}")
    print(f"height 0 prevHash {bundle.block.prev_hash.hex()}")
    print(f"validators {','.join(bundle.config.validator_ids)}")
    print(f"accounts {len(bundle.config.accounts)} keyfiles {out / 'keys'}")
    return EXIT_OK


def cmd_run(args) -> int:
    genesis_dir = Path(args.genesis) if args.genesis else _out_root() / "genesis"
    if not genesis_dir.is_dir():
        raise _Fail(EXIT_USAGE, f"genesis directory {genesis_dir} not found")
    try:
        bundle, problems = read_genesis_dir(genesis_dir)
    except (OSError, ValueError, KeyError) as exc:
        raise _Fail(EXIT_USAGE, f"{ErrorCode.GENESIS_INVALID.value}: {exc}") from exc
    if problems:
        for problem in problems:
            print(f"genesis {problem}")
        return EXIT_DISCREPANCY
    events = parse_script(_read_text(args.script, canonical_script_text))
    trace = run_scenario(events, bundle, args.seed)
    report = audit_trace(trace)
    out = trace.export(args.out or _out_root() / "trace", report.lines())
    print(f"blocks {trace.chain.height + 1} head {trace.chain.head.hash.hex()}")
    print(f"outcomes {len(trace.outcomes)} trace {trace.digest().hex()}")
    for line in report.lines():
        if not line.startswith("check ") or " FAIL " in line:
            print(line)
    print(f"written {out}")
    return EXIT_OK if report.ok else EXIT_DISCREPANCY


def _load_verified(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise _Fail(EXIT_USAGE, f"cannot read {path}: {exc.strerror}") from exc
    report = verify_chain_file(data)
    if not report.blocks:
        raise _Fail(EXIT_DISCREPANCY, f"{ErrorCode.CHAIN_INVALID.value}: empty chain file")
    return data, report


def cmd_verify(args) -> int:
    _, report = _load_verified(args.chain)
    for line in report.lines():
        print(line)
    if not report.ok:
        print(f"first failing height {report.first_failure}")
        return EXIT_DISCREPANCY
    return EXIT_OK


def _open_as(envelope, keys: AccountKeys) -> bytes | None:
    if keys.account_id not in envelope.recipient_wraps:
        return None
    for secret in keys.encryption_secrets:
        try:
            return open_envelope(envelope, keys.account_id, secret)
        except EnvelopeError:
            continue
    return None


def cmd_inspect(args) -> int:
    data, report = _load_verified(args.chain)
    if not report.ok:
        raise _Fail(EXIT_DISCREPANCY, f"{ErrorCode.CHAIN_INVALID.value}: first failing height {report.first_failure}")
    try:
        tx_hash = codec.parse_hex(args.txhash.lower(), codec.DIGEST_SIZE)
    except ValueError as exc:
        raise _Fail(EXIT_USAGE, f"bad transaction hash: {exc}") from exc
    keys = None
    if args.as_keyfile:
        try:
            keys = AccountKeys.from_json(json.loads(_read_text(args.as_keyfile, None)))
        except (ValueError, KeyError, TypeError) as exc:
            raise _Fail(EXIT_USAGE, f"bad key file: {exc}") from exc
    found = load_chain(data).find_transaction(tx_hash)
    if found is None:
        raise _Fail(EXIT_USAGE, f"{ErrorCode.TX_NOT_FOUND.value}: {tx_hash.hex()}")
    height, tx = found
    print(f"tx {tx.hash.hex()}")
    print(f"height {height}")
    print(f"function {tx.function}")
    print(f"caller {tx.caller}")
    print(f"nonce {tx.nonce}")
    print(f"timestamp {tx.timestamp}")
    for name, value in sorted(codec.decode(tx.public_fields).items()):
        if name != "function":
            print(f"public.{name} {_render(value)}")
    envelope = tx.confidential_payload
    if envelope is None:
        print("payload -")
        return EXIT_OK
    print(f"recipients {len(envelope.recipients)}")
    for recipient in envelope.recipients:
        print(f"recipient {recipient}")
    plaintext = _open_as(envelope, keys) if keys else None
    if plaintext is None:
        print("payload <encrypted>")
    else:
        try:
            print(f"payload {plaintext.decode('utf-8')}")
        except UnicodeDecodeError:
            print(f"payload hex:{plaintext.hex()}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcn-node", description="Coalition ledger node tooling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="derive keys and write a genesis directory")
    p.add_argument("--config", help="genesis config (default: bundled canonical config)")
    p.add_argument("--seed", default=CANONICAL_SEED, type=int)
    p.add_argument("--out", help="genesis directory (default: $FCN_OUT_DIR/genesis)")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="run a scenario and audit the trace")
    p.add_argument("--script", help="scenario script (default: bundled canonical script)")
    p.add_argument("--genesis", help="genesis directory (default: $FCN_OUT_DIR/genesis)")
    p.add_argument("--seed", default=CANONICAL_SEED, type=int)
    p.add_argument("--out", help="trace directory (default: $FCN_OUT_DIR/trace)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("inspect", help="show one transaction")
    p.add_argument("chain")
    p.add_argument("txhash")
    p.add_argument("--as", dest="as_keyfile", help="account key file used to open the payload")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="verify a chain file from genesis")
    p.add_argument("chain")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ConfigError, ScenarioError) as exc:
        print(f"error: {exc.code.value}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except LedgerError as exc:
        print(f"error: {exc.code.value}: {exc.message}", file=sys.stderr)
        return EXIT_DISCREPANCY


if __name__ == "__main__":
    sys.exit(main())
