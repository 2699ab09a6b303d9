import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcnledger.errors import ContractError, ErrorCode
from fcnledger.keys import SigningKey
from fcnledger.rbac import (
    CONTRACT_FUNCTIONS,
    AccessReason,
    Account,
    Function,
    Role,
    Tier,
    check_access,
    deactivate_account,
    register_account,
)
from fcnledger.state import WorldState, execute

G, R, U = AccessReason.GRANTED, AccessReason.ROLE_INSUFFICIENT, AccessReason.UNKNOWN_ACCOUNT

# function: (administrator, authorized user, unregistered)
ROLE_MATRIX = {
    "createPolicy": (G, R, U),
    "retrievePolicy": (G, G, U),
    "requestModification": (G, G, U),
    "modifyPolicy": (G, R, U),
    "evaluateRequest": (G, R, U),
    "publishKey": (G, G, U),
    "updateKey": (G, G, U),
    "retrieveKey": (G, G, U),
    "revokeKey": (G, R, U),
    "authorizeKey": (G, R, U),
}


def make_account(seed: int, role=Role.AUTHORIZED_USER, tier=Tier.TACTICAL, nation="ESP", label="") -> Account:
    return Account.from_key(SigningKey(bytes([seed]) * 32).public, role, tier, nation, label)


@pytest.fixture
def registry():
    admin = make_account(1, Role.ADMINISTRATOR, Tier.COALITION, "JFC", "admin")
    user = make_account(2, label="user")
    return {admin.account_id: admin, user.account_id: user}, admin.account_id, user.account_id


def test_matrix_covers_the_ten_contract_functions():
    assert sorted(ROLE_MATRIX) == sorted(f.value for f in CONTRACT_FUNCTIONS)


@pytest.mark.parametrize("function", sorted(ROLE_MATRIX))
@pytest.mark.parametrize("caller_class", [0, 1, 2], ids=["admin", "user", "unregistered"])
def test_role_matrix(registry, function, caller_class):
    accounts, admin, user = registry
    caller = (admin, user, "f" * 64)[caller_class]
    decision = check_access(accounts, caller, Function(function))
    expected = ROLE_MATRIX[function][caller_class]
    assert decision.reason is expected
    assert decision.allowed is (expected is G)


def test_error_codes_distinguish_unknown_from_inactive(registry):
    accounts, admin, user = registry
    assert check_access(accounts, "f" * 64, Function.PUBLISH_KEY).error_code is ErrorCode.UNAUTHORIZED
    assert check_access(accounts, user, Function.REVOKE_KEY).error_code is ErrorCode.UNAUTHORIZED
    deactivate_account(accounts, admin, user)
    decision = check_access(accounts, user, Function.RETRIEVE_POLICY)
    assert decision.reason is AccessReason.ACCOUNT_INACTIVE
    assert decision.error_code is ErrorCode.ACCOUNT_INACTIVE


def test_register_account(registry):
    accounts, admin, user = registry
    unit = make_account(3, label="esp-unit")
    register_account(accounts, admin, unit)
    assert accounts[unit.account_id].active
    with pytest.raises(ContractError) as info:
        register_account(accounts, admin, unit)
    assert info.value.code is ErrorCode.DUPLICATE_ACCOUNT
    with pytest.raises(ContractError) as info:
        register_account(accounts, user, make_account(4))
    assert info.value.code is ErrorCode.UNAUTHORIZED


def test_deactivate_account(registry):
    accounts, admin, user = registry
    with pytest.raises(ContractError) as info:
        deactivate_account(accounts, user, admin)
    assert info.value.code is ErrorCode.UNAUTHORIZED
    deactivate_account(accounts, admin, user)
    with pytest.raises(ContractError) as info:
        deactivate_account(accounts, admin, user)
    assert info.value.code is ErrorCode.ALREADY_INACTIVE


def test_inactive_account_rejected_by_every_contract_function(registry):
    accounts, admin, user = registry
    deactivate_account(accounts, admin, user)
    for function in CONTRACT_FUNCTIONS:
        assert check_access(accounts, user, function).reason is AccessReason.ACCOUNT_INACTIVE


def test_account_invariants():
    with pytest.raises(ValueError):
        make_account(5, tier=Tier.COALITION, nation="ESP")
    a, b = make_account(6), make_account(6)
    assert a.account_id == b.account_id
    assert Account.from_record(a.to_record()) == a


def test_access_is_pure(registry):
    accounts, admin, user = registry
    snapshot = {k: v.to_record() for k, v in accounts.items()}
    for _ in range(3):
        assert check_access(accounts, user, Function.MODIFY_POLICY).reason is R
    assert {k: v.to_record() for k, v in accounts.items()} == snapshot


NON_ADMIN_CALLS = st.sampled_from([
    (Function.REGISTER_ACCOUNT, "register"),
    (Function.DEACTIVATE_ACCOUNT, "deactivate"),
    (Function.PUBLISH_KEY, "publish"),
    (Function.UPDATE_KEY, "update"),
    (Function.REQUEST_MODIFICATION, "request"),
])


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from(["user", "dead"]), NON_ADMIN_CALLS), max_size=8))
def test_deactivation_is_monotone(calls):
    admin = make_account(1, Role.ADMINISTRATOR, Tier.COALITION, "JFC")
    user, dead = make_account(2), make_account(3)
    state = WorldState(accounts={a.account_id: a for a in (admin, user, dead)})
    deactivate_account(state.accounts, admin.account_id, dead.account_id)
    for n, (who, (function, kind)) in enumerate(calls):
        caller = (user if who == "user" else dead).account_id
        args = {
            "register": {"account": {**dead.to_record(), "active": True}},
            "deactivate": {"target": dead.account_id},
            "publish": {"keyBytes": bytes(32)},
            "update": {"keyBytes": bytes([n]) * 32},
            "request": {"policyId": "p", "directives": [["a", "1"]]},
        }[kind]
        try:
            execute(state, caller, function, args, None, bytes([n]) * 32)
        except ContractError:
            pass
        assert not state.accounts[dead.account_id].active
