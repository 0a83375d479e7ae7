import re

import pytest
from fastapi.testclient import TestClient

from ewallet.gateway import create_app

from conftest import (
    SELLER,
    SENDER,
    SENDER_BANK,
    WIFE,
    journal_fold,
    make_platform,
    register_cast,
    sms_bodies,
)


@pytest.fixture
def client(cast_platform):
    app = create_app(cast_platform)
    with TestClient(app) as c:
        c.platform = cast_platform
        yield c


def temp_password(platform, msisdn) -> str:
    for body in sms_bodies(platform, msisdn):
        found = re.search(r"temporary password is (\w{10})", body)
        if found:
            return found.group(1)
    raise AssertionError("no temporary password SMS")


def web_token(client, msisdn, password=None, settle=True) -> str:
    password = password or temp_password(client.platform, msisdn)
    response = client.post("/login", json={"principal": msisdn, "secret": password})
    assert response.status_code == 200, response.text
    token = response.json()["token"]
    if settle and response.json()["must_change_password"]:
        done = client.post(
            "/password/change",
            json={"new_password": "hunter2hunter2"},
            headers={"Authorization": f"Bearer {token}"},
        )
        assert done.status_code == 200
    return token


def auth(token) -> dict:
    return {"Authorization": f"Bearer {token}"}


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"
    assert all(p["ok"] for p in body["providers"])


def test_register_endpoint_and_duplicate(client):
    response = client.post(
        "/register",
        json={
            "msisdn": WIFE,
            "full_name": "Mrs K",
            "pin": "2222",
            "secret_question": "q",
            "secret_answer": "a",
        },
    )
    assert response.status_code == 201
    assert response.json()["login_id"] == WIFE
    dup = client.post(
        "/register",
        json={"msisdn": WIFE, "pin": "2222", "secret_question": "q", "secret_answer": "a"},
    )
    assert dup.status_code == 409
    assert dup.json()["error"]["code"] == "DUPLICATE_REGISTRATION"


def test_login_bad_password_is_api_error(client):
    response = client.post("/login", json={"principal": SENDER, "secret": "nope"})
    assert response.status_code == 401
    assert response.json() == {
        "error": {"code": "INVALID_LOGIN", "message": "Invalid login details"}
    }


def test_temporary_password_forces_change(client):
    password = temp_password(client.platform, SENDER)
    token = web_token(client, SENDER, password, settle=False)
    blocked = client.get(f"/wallets/{SENDER}/balance", headers=auth(token))
    assert blocked.status_code == 403
    assert blocked.json()["error"]["code"] == "PASSWORD_CHANGE_REQUIRED"
    client.post(
        "/password/change", json={"new_password": "longenough1"}, headers=auth(token)
    )
    ok = client.get(f"/wallets/{SENDER}/balance", headers=auth(token))
    assert ok.status_code == 200


def test_balance_requires_matching_principal(client):
    token = web_token(client, SENDER)
    other = client.get(f"/wallets/{SELLER}/balance", headers=auth(token))
    assert other.status_code == 403
    assert other.json()["error"]["code"] == "FORBIDDEN_PRINCIPAL"
    missing = client.get(f"/wallets/{SENDER}/balance")
    assert missing.status_code == 401


def test_pin_retrieve_endpoint(client):
    bad = client.post("/pin/retrieve", json={"msisdn": SENDER, "answer": "wrong"})
    assert bad.status_code == 403
    assert bad.json()["error"]["message"] == "Invalid Answer"
    good = client.post("/pin/retrieve", json={"msisdn": SENDER, "answer": "kananga"})
    assert good.status_code == 200
    assert any("new eWallet pin" in b for b in sms_bodies(client.platform, SENDER))


def test_transfer_wallet_endpoint_with_oracle(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    response = client.post(
        "/transfers/wallet",
        json={"recipient_msisdn": SELLER, "amount_minor": 55000},
        headers=auth(token),
    )
    assert response.status_code == 200
    body = response.json()
    assert body["state"] == "NOTIFIED" and body["fee_minor"] == 0
    folded = journal_fold(client.platform.config.journal_path)
    assert folded[f"WALLET:{SELLER}"] == 55000
    assert folded[f"WALLET:{SENDER}"] == 45000


def test_transfer_bank_endpoint(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    response = client.post(
        "/transfers/bank",
        json={"recipient_bank_account": "62000000009", "amount_minor": 30000},
        headers=auth(token),
    )
    assert response.status_code == 200
    assert client.platform.bank.balance("62000000009") == 250000 + 30000


def test_transfer_bank_to_bank_endpoint(client):
    token = web_token(client, SENDER)
    response = client.post(
        "/transfers/bank-to-bank",
        json={"recipient_bank_account": "62000000009", "amount_minor": 10000},
        headers=auth(token),
    )
    assert response.status_code == 200
    folded = journal_fold(client.platform.config.journal_path)
    assert folded[f"BANK_MIRROR:{SENDER_BANK}"] == -10000
    assert folded["BANK_MIRROR:62000000009"] == 10000


def test_withdrawals_and_atm_redeem_endpoints(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    response = client.post(
        "/withdrawals", json={"amount_minor": 55000}, headers=auth(token)
    )
    assert response.status_code == 200
    code = re.search(
        r"access code is (\d{8})", sms_bodies(client.platform, SENDER)[-1]
    ).group(1)
    receipt = client.post(
        "/atm/redeem", json={"code": code, "msisdn": SENDER, "amount_minor": 27500}
    )
    assert receipt.status_code == 200
    assert receipt.json()["remaining_minor"] == 27500
    expired = client.post(
        "/atm/redeem", json={"code": "00000000", "msisdn": SENDER, "amount_minor": 1}
    )
    assert expired.status_code == 404
    assert expired.json()["error"]["code"] == "CODE_UNKNOWN"


def test_pos_charge_endpoint(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    client.post(
        "/transfers/wallet",
        json={"recipient_msisdn": WIFE, "amount_minor": 55000},
        headers=auth(token),
    )
    code = re.search(
        r"access code is (\d{8})", sms_bodies(client.platform, WIFE)[-1]
    ).group(1)
    response = client.post(
        "/pos/charge",
        json={
            "seller_msisdn": SELLER,
            "buyer_msisdn": WIFE,
            "amount_minor": 30000,
            "code": code,
        },
    )
    assert response.status_code == 200
    assert journal_fold(client.platform.config.journal_path)[f"WALLET:{SELLER}"] == 30000


def test_ussd_endpoint_round_trip(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    begin = client.post(
        "/ussd", json={"session_id": "u1", "msisdn": SENDER, "input": "#555*"}
    )
    assert begin.json() == {"text": "Enter your secret pin", "end_session": False}
    root = client.post("/ussd", json={"session_id": "u1", "msisdn": SENDER, "input": "1234"})
    assert root.json()["text"].startswith("1. Transfer money")
    for key in ("4",):
        final = client.post(
            "/ussd", json={"session_id": "u1", "msisdn": SENDER, "input": key}
        )
    assert final.json() == {"text": "Your eWallet balance is R1000", "end_session": True}


def test_ussd_session_owner_enforced(client):
    client.post("/ussd", json={"session_id": "u1", "msisdn": SENDER, "input": "#555*"})
    stolen = client.post(
        "/ussd", json={"session_id": "u1", "msisdn": SELLER, "input": "1234"}
    )
    assert stolen.status_code == 403


def test_ussd_wrong_service_code(client):
    response = client.post(
        "/ussd", json={"session_id": "u2", "msisdn": SENDER, "input": "#999*"}
    )
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "WRONG_SERVICE_CODE"


def test_statement_endpoint(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 100000}, headers=auth(token))
    response = client.get(f"/wallets/{SENDER}/statement", headers=auth(token))
    entries = response.json()["entries"]
    assert len(entries) == 1 and entries[0]["type"] == "RECHARGE"


def test_sms_outbox_poll_is_idempotent_and_ack_marks(client):
    outbox = client.get(f"/sms/outbox/{SENDER}").json()["messages"]
    assert outbox, "registration SMS expected"
    again = client.get(f"/sms/outbox/{SENDER}").json()["messages"]
    assert [m["id"] for m in outbox] == [m["id"] for m in again]
    acked = client.post(
        "/sms/ack", json={"msisdn": SENDER, "through_id": outbox[-1]["id"]}
    ).json()
    assert acked["acked"] == len(outbox)
    final = client.get(f"/sms/outbox/{SENDER}").json()["messages"]
    assert all(m["delivery_state"] == "DELIVERED" for m in final)


def test_details_endpoint_web_channel(client):
    token = web_token(client, SENDER)
    response = client.post(
        "/details", json={"changes": {"full_name": "K K T"}}, headers=auth(token)
    )
    assert response.status_code == 200
    assert client.platform.registry.get(SENDER).full_name == "K K T"


def test_deregister_endpoint(client):
    token = web_token(client, SELLER)
    unconfirmed = client.post("/deregister", json={"confirm": False}, headers=auth(token))
    assert unconfirmed.json()["closed"] is False
    confirmed = client.post("/deregister", json={"confirm": True}, headers=auth(token))
    assert confirmed.json()["closed"] is True


def test_admin_endpoints(client):
    seeded = client.post(
        "/admin/seed",
        json={"msisdns": [{"msisdn": "27820000099", "carrier": "CCT"}], "bank_accounts": []},
    )
    assert seeded.json()["msisdns"] == 1
    journal = client.get("/admin/journal").json()["entries"]
    assert journal and journal[0]["seq"] == 1
    balances = client.get("/admin/balances").json()["balances"]
    assert sum(balances.values()) == 0
    cast = client.get("/admin/cast").json()
    assert cast["service_code"] == "#555*"
    assert any(m["msisdn"] == "27820000099" for m in cast["msisdns"])
    unlock = client.post("/admin/unlock", json={"msisdn": SENDER}).json()
    assert unlock["changed"] is False
    sweep = client.post("/admin/expire", json={}).json()
    assert sweep == {"codes_expired": 0, "sessions_expired": 0}


def test_validation_error_is_api_error_shape(client):
    response = client.post("/register", json={"msisdn": SENDER})
    assert response.status_code == 400
    body = response.json()
    assert body["error"]["code"] == "VALIDATION_FAILED"


def test_unknown_route_is_api_error_shape(client):
    response = client.get("/nope")
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "NOT_FOUND"


def test_amount_invalid_maps_to_400(client):
    token = web_token(client, SENDER)
    response = client.post(
        "/transfers/wallet",
        json={"recipient_msisdn": SELLER, "amount_minor": 0},
        headers=auth(token),
    )
    assert response.status_code == 400
    assert response.json()["error"]["code"] == "AMOUNT_INVALID"


def test_provider_unavailable_maps_to_503(client):
    token = web_token(client, SENDER)
    client.post("/recharge", json={"amount_minor": 10000}, headers=auth(token))
    client.platform.bank.fail_next(1)
    response = client.post(
        "/transfers/bank",
        json={"recipient_bank_account": "62000000009", "amount_minor": 100},
        headers=auth(token),
    )
    assert response.status_code == 503
    assert response.json()["error"]["code"] == "PROVIDER_UNAVAILABLE"
