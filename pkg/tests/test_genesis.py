import pytest

from fcnledger import codec
from fcnledger.errors import ConfigError, ErrorCode
from fcnledger.fixtures import canonical_config_text
from fcnledger.genesis import init_genesis, parse_config, read_genesis_dir, write_genesis_dir
from fcnledger.rbac import Role


def test_canonical_config(bundle):
    config = bundle.config
    assert config.validator_ids == ("JFC-V", "ESP-V", "ITA-V", "PRT-V")
    assert bundle.chain.validators.quorum == 3
    assert config.genesis_admin.label == "JFC-ADMIN"
    assert [p.policy_id for p in config.policies] == ["comms-baseline"]
    admins = [a for a in config.accounts if a.role is Role.ADMINISTRATOR]
    assert len(admins) == 1


def test_genesis_block(bundle):
    block = bundle.block
    assert block.height == 0 and block.prev_hash == codec.ZERO_DIGEST
    tx = block.transactions[0]
    assert tx.function == "genesis"
    assert tx.args["configDigest"] == bundle.config.digest()
    state = bundle.chain.state
    assert {a.label for a in state.accounts.values()} == {a.label for a in bundle.config.accounts if a.genesis}
    assert state.policies["comms-baseline"].version == 1


def test_same_config_and_seed_same_genesis():
    a = init_genesis(canonical_config_text(), 5)
    b = init_genesis(canonical_config_text(), 5)
    c = init_genesis(canonical_config_text(), 6)
    assert a.block.hash == b.block.hash
    assert a.block.hash != c.block.hash


def test_zero_administrators_is_invalid():
    text = canonical_config_text().replace("role = Administrator", "role = AuthorizedUser")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.code is ErrorCode.CONFIG_INVALID


@pytest.mark.parametrize("text", [
    "[chain\nlabel = x\n",
    "[chain]\nlabel = x\n[gadget.Y]\nfoo = 1\n",
    "[chain]\nlabel = x\n[node.A]\nnation = JFC\ntier = Galactic\n",
])
def test_unparseable_config(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.code is ErrorCode.CONFIG_PARSE_ERROR


def test_validator_keys_are_distinct_from_account_keys(bundle):
    bundle.keyring.check_distinct()
    validator_keys = {k.public for k in bundle.keyring.validators.values()}
    account_keys = {k.signing.public for k in bundle.keyring.accounts.values()}
    assert not validator_keys & account_keys


def test_genesis_dir_round_trip(tmp_path, bundle):
    write_genesis_dir(bundle, tmp_path)
    loaded, problems = read_genesis_dir(tmp_path)
    assert problems == []
    assert loaded.block.hash == bundle.block.hash


def test_tampered_genesis_dir(tmp_path, bundle):
    write_genesis_dir(bundle, tmp_path)
    chain_file = tmp_path / "genesis.chain"
    chain_file.write_text(chain_file.read_text().replace('"timestamp":0', '"timestamp":1', 1))
    _, problems = read_genesis_dir(tmp_path)
    assert any(p.startswith("BadPrevHash") for p in problems)
