"""Genesis configuration, deterministic key material and the genesis block.

Config files are INI text::

    [chain]
    label = coalition-demo

    [node.JFC]
    nation = JFC
    tier = Coalition
    validator = JFC-V          # optional, makes the node a validator

    [account.JFC-ADMIN]
    role = Administrator
    tier = Coalition
    nation = JFC
    node = JFC
    genesis = yes              # "no": key material only, registered later

    [policy.comms-baseline]
    name = Communications baseline
    directives = crypto.suite=x25519; radio.emcon=2

Validator order is the order of the validator nodes in the file.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path

from fcnledger import codec
from fcnledger.errors import ConfigError, ErrorCode, LedgerError
from fcnledger.keys import SigningKey, account_id_for, derive_secret, x25519_public
from fcnledger.ledger import Block, ChainState, genesis_transaction
from fcnledger.policy import normalize_directives
from fcnledger.rbac import COALITION_NATION, Account, Role, Tier
from fcnledger.validators import ValidatorInfo, ValidatorSet

ENCRYPTION_KEYS_PER_ACCOUNT = 8

GENESIS_CHAIN = "genesis.chain"
GENESIS_DIGEST = "genesis.digest"
CONFIG_FILE = "config.ini"
KEY_DIR = "keys"


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    nation: str
    tier: Tier
    validator: str | None = None


@dataclass(frozen=True)
class AccountSpec:
    label: str
    role: Role
    tier: Tier
    nation: str
    node: str
    genesis: bool = True


@dataclass(frozen=True)
class PolicySpec:
    policy_id: str
    name: str
    directives: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class GenesisConfig:
    chain_label: str
    nodes: tuple[NodeSpec, ...]
    accounts: tuple[AccountSpec, ...]
    policies: tuple[PolicySpec, ...] = ()

    @property
    def validator_ids(self) -> tuple[str, ...]:
        return tuple(n.validator for n in self.nodes if n.validator)

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def account(self, label: str) -> AccountSpec:
        for a in self.accounts:
            if a.label == label:
                return a
        raise KeyError(label)

    def to_record(self) -> dict:
        return {
            "accounts": [
                {"genesis": a.genesis, "label": a.label, "nation": a.nation, "node": a.node,
                 "role": a.role.value, "tier": a.tier.value}
                for a in self.accounts
            ],
            "chainLabel": self.chain_label,
            "nodes": [
                {"nation": n.nation, "nodeId": n.node_id, "tier": n.tier.value, "validator": n.validator}
                for n in self.nodes
            ],
            "policies": [
                {"directives": [list(d) for d in p.directives], "name": p.name, "policyId": p.policy_id}
                for p in self.policies
            ],
        }

    def digest(self) -> bytes:
        return codec.digest(["fcn-genesis-config", self.to_record()])

    def validate(self) -> None:
        def invalid(msg: str):
            raise ConfigError(ErrorCode.CONFIG_INVALID, msg)

        if not self.chain_label:
            invalid("chain label missing")
        node_ids = [n.node_id for n in self.nodes]
        if len(set(node_ids)) != len(node_ids):
            invalid("duplicate node id")
        if not self.validator_ids:
            invalid("no validator nodes")
        if len(set(self.validator_ids)) != len(self.validator_ids):
            invalid("duplicate validator id")
        labels = [a.label for a in self.accounts]
        if len(set(labels)) != len(labels):
            invalid("duplicate account label")
        for a in self.accounts:
            if a.node not in node_ids:
                invalid(f"account {a.label} hosted on unknown node {a.node}")
            if a.tier is Tier.COALITION and a.nation != COALITION_NATION:
                invalid(f"coalition account {a.label} must have nation {COALITION_NATION}")
        for n in self.nodes:
            if n.tier is Tier.COALITION and n.nation != COALITION_NATION:
                invalid(f"coalition node {n.node_id} must have nation {COALITION_NATION}")
        if not any(a.role is Role.ADMINISTRATOR and a.genesis for a in self.accounts):
            invalid("at least one genesis Administrator account is required")
        policy_ids = [p.policy_id for p in self.policies]
        if len(set(policy_ids)) != len(policy_ids):
            invalid("duplicate policy id")

    @property
    def genesis_admin(self) -> AccountSpec:
        return next(a for a in self.accounts if a.role is Role.ADMINISTRATOR and a.genesis)


def _yes(value: str) -> bool:
    value = value.strip().lower()
    if value in ("yes", "true", "1", "on"):
        return True
    if value in ("no", "false", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_directives(text: str) -> tuple[tuple[str, str], ...]:
    """``"a=1; b=2"`` -> ``(("a", "1"), ("b", "2"))``, key-sorted."""
    pairs = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"directive {item!r} lacks '='")
        pairs.append((key.strip(), value.strip()))
    return normalize_directives(pairs)


def parse_config(text: str) -> GenesisConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(ErrorCode.CONFIG_PARSE_ERROR, str(exc)) from exc

    nodes, accounts, policies = [], [], []
    label = ""
    try:
        for section in parser.sections():
            body = parser[section]
            kind, _, name = section.partition(".")
            if section == "chain":
                label = body["label"].strip()
            elif kind == "node" and name:
                nodes.append(NodeSpec(name, body["nation"].strip(), Tier(body["tier"].strip()),
                                      body.get("validator", "").strip() or None))
            elif kind == "account" and name:
                accounts.append(AccountSpec(
                    name, Role(body["role"].strip()), Tier(body["tier"].strip()), body["nation"].strip(),
                    body["node"].strip(), _yes(body.get("genesis", "yes")),
                ))
            elif kind == "policy" and name:
                policies.append(PolicySpec(name, body.get("name", name).strip(), parse_directives(body["directives"])))
            else:
                raise ValueError(f"unknown section [{section}]")
    except (KeyError, ValueError, LedgerError) as exc:
        raise ConfigError(ErrorCode.CONFIG_PARSE_ERROR, f"{type(exc).__name__}: {exc}") from exc
    config = GenesisConfig(label, tuple(nodes), tuple(accounts), tuple(policies))
    config.validate()
    return config


def load_config(path: str | Path) -> GenesisConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(ErrorCode.CONFIG_PARSE_ERROR, str(exc)) from exc
    return parse_config(text)


# ---------------------------------------------------------------- key material


@dataclass(frozen=True)
class AccountKeys:
    label: str
    signing: SigningKey
    encryption_secrets: tuple[bytes, ...] = field(repr=False)

    @property
    def account_id(self) -> str:
        return account_id_for(self.signing.public)

    def encryption_public(self, index: int) -> bytes:
        return x25519_public(self.encryption_secrets[index])

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "accountId": self.account_id,
            "signingSecret": self.signing.secret.hex(),
            "encryptionSecrets": [s.hex() for s in self.encryption_secrets],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "AccountKeys":
        keys = cls(obj["label"], SigningKey(codec.parse_hex(obj["signingSecret"], 32)),
                   tuple(codec.parse_hex(s, 32) for s in obj["encryptionSecrets"]))
        if keys.account_id != obj["accountId"]:
            raise ValueError(f"key file for {obj['label']} has inconsistent account id")
        return keys


@dataclass
class Keyring:
    accounts: dict[str, AccountKeys]
    validators: dict[str, SigningKey]

    @classmethod
    def derive(cls, config: GenesisConfig, seed: int | str = 0) -> "Keyring":
        accounts = {
            a.label: AccountKeys(
                a.label,
                SigningKey(derive_secret(seed, a.label, "account-signing")),
                tuple(derive_secret(seed, a.label, "account-encryption", i) for i in range(ENCRYPTION_KEYS_PER_ACCOUNT)),
            )
            for a in config.accounts
        }
        validators = {v: SigningKey(derive_secret(seed, v, "validator-signing")) for v in config.validator_ids}
        ring = cls(accounts, validators)
        ring.check_distinct()
        return ring

    def check_distinct(self) -> None:
        validator_keys = {k.public for k in self.validators.values()}
        encryption = {x25519_public(s) for a in self.accounts.values() for s in a.encryption_secrets}
        signing = {a.signing.public for a in self.accounts.values()}
        if validator_keys & (encryption | signing) or len(signing) != len(self.accounts):
            raise ConfigError(ErrorCode.CONFIG_INVALID, "key material collides")

    def by_id(self, account_id: str) -> AccountKeys | None:
        for keys in self.accounts.values():
            if keys.account_id == account_id:
                return keys
        return None

    def label_of(self, account_id: str) -> str:
        keys = self.by_id(account_id)
        return keys.label if keys else account_id[:12]

    def write(self, directory: Path) -> None:
        (directory / "validators").mkdir(parents=True, exist_ok=True)
        for label, keys in sorted(self.accounts.items()):
            (directory / f"{label}.json").write_text(json.dumps(keys.to_json(), indent=2) + "\n")
        for vid, key in sorted(self.validators.items()):
            record = {"validator": vid, "signingSecret": key.secret.hex()}
            (directory / "validators" / f"{vid}.json").write_text(json.dumps(record, indent=2) + "\n")

    @classmethod
    def read(cls, directory: Path) -> "Keyring":
        accounts = {}
        for path in sorted(directory.glob("*.json")):
            keys = AccountKeys.from_json(json.loads(path.read_text()))
            accounts[keys.label] = keys
        validators = {}
        for path in sorted((directory / "validators").glob("*.json")):
            record = json.loads(path.read_text())
            validators[record["validator"]] = SigningKey(codec.parse_hex(record["signingSecret"], 32))
        return cls(accounts, validators)


def genesis_accounts(config: GenesisConfig, keyring: Keyring) -> list[Account]:
    return [
        Account.from_key(keyring.accounts[a.label].signing.public, a.role, a.tier, a.nation, a.label)
        for a in config.accounts
        if a.genesis
    ]


def validator_set(config: GenesisConfig, keyring: Keyring) -> ValidatorSet:
    return ValidatorSet(tuple(ValidatorInfo(v, keyring.validators[v].public) for v in config.validator_ids))


def build_genesis(config: GenesisConfig, keyring: Keyring) -> Block:
    """Block 0: one genesis transaction signed by the first administrator,
    sealed by every validator."""
    validators = validator_set(config, keyring)
    admin = config.genesis_admin
    accounts = genesis_accounts(config, keyring)
    admin_id = keyring.accounts[admin.label].account_id
    tx = genesis_transaction(
        keyring.accounts[admin.label].signing,
        chain_label=config.chain_label,
        config_digest=config.digest(),
        validators=validators,
        accounts=accounts,
        policies=[
            {"createdBy": admin_id, "directives": [list(d) for d in p.directives], "name": p.name, "policyId": p.policy_id}
            for p in config.policies
        ],
    )
    block = Block.build(0, codec.ZERO_DIGEST, [tx], validators.ids[0], 0)
    return block.with_signatures({v: keyring.validators[v].sign(block.hash) for v in validators.ids})


@dataclass
class GenesisBundle:
    config: GenesisConfig
    config_text: str
    keyring: Keyring
    block: Block

    @property
    def chain(self) -> ChainState:
        return ChainState.from_genesis(self.block)


def init_genesis(config_text: str, seed: int | str = 0) -> GenesisBundle:
    config = parse_config(config_text)
    keyring = Keyring.derive(config, seed)
    return GenesisBundle(config, config_text, keyring, build_genesis(config, keyring))


def write_genesis_dir(bundle: GenesisBundle, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_FILE).write_text(bundle.config_text)
    (out / GENESIS_CHAIN).write_text(bundle.block.to_line() + "\n")
    (out / GENESIS_DIGEST).write_text(bundle.block.hash.hex() + "\n")
    bundle.keyring.write(out / KEY_DIR)
    return out


def read_genesis_dir(directory: str | Path) -> tuple[GenesisBundle, list[str]]:
    """Load a genesis directory and list every inconsistency found in it.

    The stored genesis block must parse, must be the block the stored
    config and keys derive, and must hash to the recorded digest.
    Problems are returned rather than raised so callers can report them.
    """
    directory = Path(directory)
    problems: list[str] = []
    config_text = (directory / CONFIG_FILE).read_text()
    config = parse_config(config_text)
    keyring = Keyring.read(directory / KEY_DIR)
    expected = build_genesis(config, keyring)
    try:
        block = Block.from_line((directory / GENESIS_CHAIN).read_bytes().rstrip(b"\n"))
    except (ValueError, UnicodeDecodeError) as exc:
        problems.append(f"{ErrorCode.CHAIN_INVALID.value}: genesis block unreadable ({exc})")
        block = expected
    anchor = (directory / GENESIS_DIGEST).read_text().strip()
    if block.hash.hex() != anchor or expected.hash.hex() != anchor:
        problems.append(f"{ErrorCode.BAD_PREV_HASH.value}: genesis hash does not match anchored digest {anchor[:16]}")
    if block.to_line() != expected.to_line():
        problems.append(f"{ErrorCode.GENESIS_INVALID.value}: genesis block differs from the one derived from config and keys")
    return GenesisBundle(config, config_text, keyring, block), problems
