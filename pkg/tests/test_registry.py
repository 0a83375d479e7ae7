import json

import pytest

from ewallet import Platform, Config
from ewallet.errors import EWalletError
from ewallet.ledger import AccountId
from ewallet.registry import Channel, SubscriberStatus, verify_secret

from conftest import (
    SENDER,
    SENDER_BANK,
    WIFE,
    assert_oracle_equivalence,
    journal_fold,
    make_platform,
    register_cast,
    sms_bodies,
)


def test_register_opens_wallet_and_sms_credentials(cast_platform):
    sub = cast_platform.registry.get(SENDER)
    assert sub.status is SubscriberStatus.ACTIVE
    assert sub.password_temporary is True
    assert cast_platform.ledger.balance(AccountId.wallet(SENDER)).amount_minor == 0
    welcome = sms_bodies(cast_platform, SENDER)[0]
    assert f"login ID is {SENDER}" in welcome
    assert "temporary password is" in welcome


def test_register_unknown_msisdn(platform):
    with pytest.raises(EWalletError) as err:
        platform.registry.register(
            {"msisdn": "27829999999", "pin": "1234", "secret_question": "q", "secret_answer": "a"}
        )
    assert err.value.code == "UNKNOWN_MSISDN"


def test_register_unknown_bank_account(platform):
    with pytest.raises(EWalletError) as err:
        platform.registry.register(
            {
                "msisdn": SENDER,
                "pin": "1234",
                "secret_question": "q",
                "secret_answer": "a",
                "bank_account": "00000",
            }
        )
    assert err.value.code == "UNKNOWN_BANK_ACCOUNT"


def test_register_twice_is_duplicate(cast_platform):
    with pytest.raises(EWalletError) as err:
        cast_platform.registry.register(
            {"msisdn": SENDER, "pin": "1234", "secret_question": "q", "secret_answer": "a"}
        )
    assert err.value.code == "DUPLICATE_REGISTRATION"


def test_login_ussd_pin_and_web_password(cast_platform):
    registry = cast_platform.registry
    sub = registry.login(Channel.USSD, SENDER, "1234")
    assert sub.msisdn == SENDER
    with pytest.raises(EWalletError) as err:
        registry.login(Channel.WEB, SENDER, "wrong-password")
    assert err.value.code == "INVALID_LOGIN"
    assert err.value.message == "Invalid login details"


def test_lock_after_three_failures_then_admin_unlock(cast_platform):
    registry = cast_platform.registry
    for _ in range(2):
        with pytest.raises(EWalletError):
            registry.login(Channel.USSD, SENDER, "0000")
    with pytest.raises(EWalletError) as err:
        registry.login(Channel.USSD, SENDER, "0000")
    assert err.value.code == "ACCOUNT_LOCKED"
    with pytest.raises(EWalletError):
        registry.login(Channel.USSD, SENDER, "1234")  # even the right pin now fails
    assert registry.unlock(SENDER)["changed"] is True
    assert registry.login(Channel.USSD, SENDER, "1234").msisdn == SENDER
    assert registry.unlock(SENDER)["changed"] is False


def test_successful_login_resets_counter(cast_platform):
    registry = cast_platform.registry
    with pytest.raises(EWalletError):
        registry.login(Channel.USSD, SENDER, "0000")
    registry.login(Channel.USSD, SENDER, "1234")
    assert registry.get(SENDER).failed_attempts == 0


def test_retrieve_pin_rotates_secret(cast_platform):
    registry = cast_platform.registry
    result = registry.retrieve_pin(SENDER, "  KANANGA ")  # case/whitespace folded
    assert result["delivery"] == "SMS"
    new_pin_sms = [b for b in sms_bodies(cast_platform, SENDER) if "new eWallet pin" in b]
    assert len(new_pin_sms) == 1
    new_pin = new_pin_sms[0].split()[-1].rstrip(".")
    with pytest.raises(EWalletError):
        registry.login(Channel.USSD, SENDER, "1234")  # old pin no longer works
    assert registry.login(Channel.USSD, SENDER, new_pin).msisdn == SENDER


def test_retrieve_pin_wrong_answer(cast_platform):
    with pytest.raises(EWalletError) as err:
        cast_platform.registry.retrieve_pin(SENDER, "wrong")
    assert err.value.code == "INVALID_ANSWER"
    assert err.value.message == "Invalid Answer"


def test_update_details_ussd_restricted_to_pin_and_msisdn(cast_platform):
    registry = cast_platform.registry
    with pytest.raises(EWalletError) as err:
        registry.update_details(Channel.USSD, SENDER, {"bank_account": "62000000009"})
    assert err.value.code == "FORBIDDEN_FIELD_FOR_CHANNEL"
    result = registry.update_details(Channel.USSD, SENDER, {"pin": "5555"})
    assert result["changed"] == ["pin"]
    assert registry.login(Channel.USSD, SENDER, "5555").msisdn == SENDER
    assert any("changed successfully" in b for b in sms_bodies(cast_platform, SENDER))


def test_update_details_validation_failures(cast_platform):
    registry = cast_platform.registry
    with pytest.raises(EWalletError) as err:
        registry.update_details(Channel.WEB, SENDER, {"msisdn": "27829999999"})
    assert err.value.code == "VALIDATION_FAILED"
    with pytest.raises(EWalletError):
        registry.update_details(Channel.USSD, SENDER, {"pin": "12"})


def test_update_msisdn_moves_wallet_balance(cast_platform):
    platform = cast_platform
    platform.engine.recharge(SENDER, 10000, "k1")
    platform.registry.update_details(Channel.WEB, SENDER, {"msisdn": "27820000005"})
    assert platform.registry.get(SENDER) is None
    assert platform.ledger.balance(AccountId.wallet("27820000005")).amount_minor == 10000
    assert platform.ledger.balance(AccountId.wallet(SENDER)).amount_minor == 0
    assert_oracle_equivalence(platform)


def test_deregister_needs_confirmation(cast_platform):
    result = cast_platform.registry.deregister(SENDER, confirmation=False)
    assert result["closed"] is False
    assert cast_platform.registry.get(SENDER).status is SubscriberStatus.ACTIVE


def test_deregister_zero_balance_closes_and_sms(cast_platform):
    result = cast_platform.registry.deregister(SENDER, confirmation=True)
    assert result["closed"] is True
    assert cast_platform.registry.get(SENDER).status is SubscriberStatus.CLOSED
    assert any("has been closed" in b for b in sms_bodies(cast_platform, SENDER))
    with pytest.raises(EWalletError) as err:
        cast_platform.registry.login(Channel.USSD, SENDER, "1234")
    assert err.value.code == "ACCOUNT_CLOSED"


def test_deregister_residual_without_bank_blocked(cast_platform):
    platform = cast_platform
    platform.engine.recharge(SENDER, 5000, "k1")
    platform.engine.transfer_wallet_to_wallet(SENDER, "27820000004", 1000, "k2")
    with pytest.raises(EWalletError) as err:
        platform.registry.deregister("27820000004", confirmation=True)
    assert err.value.code == "RESIDUAL_BALANCE_NO_BANK"
    assert platform.ledger.balance(AccountId.wallet("27820000004")).amount_minor == 1000
    assert_oracle_equivalence(platform)


def test_deregister_sweeps_residue_to_bank(cast_platform):
    platform = cast_platform
    platform.engine.recharge(SENDER, 5000, "k1")
    bank_before = platform.bank.balance(SENDER_BANK)
    result = platform.registry.deregister(SENDER, confirmation=True)
    assert result["closed"] is True
    assert platform.ledger.balance(AccountId.wallet(SENDER)).amount_minor == 0
    assert platform.bank.balance(SENDER_BANK) == bank_before + 5000
    assert_oracle_equivalence(platform)


def test_closed_msisdn_can_reregister(cast_platform):
    platform = cast_platform
    platform.registry.deregister(SENDER, confirmation=True)
    result = platform.registry.register(
        {"msisdn": SENDER, "pin": "4321", "secret_question": "q", "secret_answer": "a"}
    )
    assert result["login_id"] == SENDER
    assert platform.registry.get(SENDER).status is SubscriberStatus.ACTIVE


def test_registry_rebuilds_from_journal(cast_platform, tmp_path):
    platform = cast_platform
    platform.registry.update_details(Channel.USSD, SENDER, {"pin": "7777"})
    reborn = Platform(Config(journal_path=platform.config.journal_path))
    reborn.seed({"msisdns": [{"msisdn": SENDER, "carrier": "Vodacom"}], "bank_accounts": []})
    sub = reborn.registry.get(SENDER)
    assert sub is not None and sub.status is SubscriberStatus.ACTIVE
    assert reborn.registry.login(Channel.USSD, SENDER, "7777").msisdn == SENDER


def test_no_clear_secrets_in_any_persisted_record(cast_platform, tmp_path):
    """Scan journal, snapshot and SMS metadata for the secrets used above."""
    platform = cast_platform
    platform.registry.retrieve_pin(SENDER, "Kananga")
    secrets = ["1234", "9876", "Kananga", "kananga"]
    journal_text = open(platform.config.journal_path).read()
    snapshot_text = open(platform.config.registry_snapshot_path).read()
    for secret in secrets:
        for blob, name in ((journal_text, "journal"), (snapshot_text, "snapshot")):
            for line in blob.splitlines():
                assert secret not in line, f"clear secret {secret!r} leaked into {name}"
    # SMS metadata (recipient, timestamps, state) also stays clean; bodies are
    # the delivery channel and legitimately carry freshly issued credentials
    for messages in platform.sms.outbox.values():
        for message in messages:
            assert "1234" not in message.to
            assert message.delivery_state in ("QUEUED", "DELIVERED")


def test_digest_roundtrip():
    from ewallet.registry import digest_secret

    stored = digest_secret("1234")
    assert stored != "1234"
    assert verify_secret("1234", stored)
    assert not verify_secret("4321", stored)
