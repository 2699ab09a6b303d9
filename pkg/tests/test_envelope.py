import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcnledger.envelope import WRAP_SIZE, EncryptedEnvelope, open_envelope, seal_envelope
from fcnledger.errors import EnvelopeError, ErrorCode
from fcnledger.keys import x25519_public
from fcnledger.pki import KeyRecord, KeyStatus

LABELS = ["ESP-HQ", "ITA-UNIT", "PRT-HQ", "JFC-ANALYST", "ESP-DRONE"]


@pytest.fixture(scope="module")
def secrets():
    rng = random.Random(7)
    return {label: rng.randbytes(32) for label in LABELS}


def directory(secrets, status=KeyStatus.AUTHORIZED, **overrides):
    return {
        label: KeyRecord(label, x25519_public(secret), overrides.get(label, status))
        for label, secret in secrets.items()
    }


def test_round_trip(secrets):
    env = seal_envelope(b"hold the bridge", ["ESP-HQ"], directory(secrets))
    assert open_envelope(env, "ESP-HQ", secrets["ESP-HQ"]) == b"hold the bridge"
    assert len(env.recipient_wraps["ESP-HQ"]) == WRAP_SIZE


def test_non_recipient_is_excluded(secrets):
    env = seal_envelope(b"hold the bridge", ["ESP-HQ"], directory(secrets))
    with pytest.raises(EnvelopeError) as info:
        open_envelope(env, "ITA-UNIT", secrets["ITA-UNIT"])
    assert info.value.code is ErrorCode.NOT_A_RECIPIENT


def test_wrong_private_key_fails_integrity(secrets):
    env = seal_envelope(b"x", ["ESP-HQ"], directory(secrets))
    with pytest.raises(EnvelopeError) as info:
        open_envelope(env, "ESP-HQ", secrets["ITA-UNIT"])
    assert info.value.code is ErrorCode.INTEGRITY_FAILURE


def test_flipped_ciphertext_bit_fails(secrets):
    env = seal_envelope(b"hold the bridge", ["ESP-HQ", "PRT-HQ"], directory(secrets))
    flipped = bytes([env.ciphertext[0] ^ 1]) + env.ciphertext[1:]
    bad = EncryptedEnvelope(env.recipient_wraps, flipped, env.auth_tag)
    with pytest.raises(EnvelopeError) as info:
        open_envelope(bad, "ESP-HQ", secrets["ESP-HQ"])
    assert info.value.code is ErrorCode.INTEGRITY_FAILURE


def test_recipient_set_is_authenticated(secrets):
    env = seal_envelope(b"x", ["ESP-HQ", "PRT-HQ"], directory(secrets))
    trimmed = EncryptedEnvelope({"ESP-HQ": env.recipient_wraps["ESP-HQ"]}, env.ciphertext, env.auth_tag)
    with pytest.raises(EnvelopeError):
        open_envelope(trimmed, "ESP-HQ", secrets["ESP-HQ"])


@pytest.mark.parametrize(
    "status,code",
    [(KeyStatus.REVOKED, ErrorCode.RECIPIENT_KEY_REVOKED), (KeyStatus.PUBLISHED, ErrorCode.RECIPIENT_KEY_NOT_AUTHORIZED)],
)
def test_untrusted_recipient_refused(secrets, status, code):
    with pytest.raises(EnvelopeError) as info:
        seal_envelope(b"x", ["ESP-HQ", "ESP-DRONE"], directory(secrets, **{"ESP-DRONE": status}))
    assert info.value.code is code


def test_unknown_recipient_refused(secrets):
    with pytest.raises(EnvelopeError) as info:
        seal_envelope(b"x", ["NOBODY"], directory(secrets))
    assert info.value.code is ErrorCode.RECIPIENT_KEY_NOT_AUTHORIZED


def test_seeded_randomness_is_reproducible(secrets):
    a = seal_envelope(b"x", LABELS, directory(secrets), randbytes=random.Random(1).randbytes)
    b = seal_envelope(b"x", LABELS, directory(secrets), randbytes=random.Random(1).randbytes)
    assert a == b
    assert EncryptedEnvelope.from_record(a.to_record()) == a


@settings(max_examples=40, deadline=None)
@given(st.sets(st.sampled_from(LABELS), min_size=1), st.binary(max_size=64), st.integers(0, 2**32))
def test_only_recipients_can_open(secrets, recipients, plaintext, seed):
    env = seal_envelope(plaintext, recipients, directory(secrets), randbytes=random.Random(seed).randbytes)
    for label in LABELS:
        if label in recipients:
            assert open_envelope(env, label, secrets[label]) == plaintext
        else:
            with pytest.raises(EnvelopeError):
                open_envelope(env, label, secrets[label])
