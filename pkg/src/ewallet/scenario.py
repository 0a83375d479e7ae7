"""Scripted end-to-end walkthrough against a live service.

A banked sender recharges his wallet from his bank account and sends money to
his wife's cellphone.  The wife, who has no account, forwards part of it to
the parents and spends the rest at a seller's point of sale using her access
code; a parent withdraws the forwarded money at the ATM.  Every screen and
receipt is printed, and the run ends with an independent fold over the
journal to confirm conservation and the expected balances.
"""

from __future__ import annotations

import json
import re
import uuid

import httpx

SENDER = "27820000001"
WIFE = "27820000002"
PARENT = "27820000003"
SELLER = "27820000004"
SENDER_BANK = "62000000001"

RECHARGE_MINOR = 100000  # R1000
SEND_WIFE_MINOR = 55000  # R550
FORWARD_PARENT_MINOR = 25000  # R250
POS_SPEND_MINOR = 30000  # R300


class ScenarioError(Exception):
    pass


class ScenarioRunner:
    def __init__(self, base_url: str, out=print):
        self.base_url = base_url.rstrip("/")
        self.client = httpx.Client(base_url=self.base_url, timeout=10.0)
        self.out = out

    # -- plumbing --------------------------------------------------------------

    def _check(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            raise ScenarioError(f"{response.request.url} -> {response.status_code} {response.text}")
        return response.json()

    def post(self, path: str, payload: dict) -> dict:
        return self._check(self.client.post(path, json=payload))

    def get(self, path: str) -> dict:
        return self._check(self.client.get(path))

    def dial(self, msisdn: str, label: str) -> str:
        session_id = f"scn-{uuid.uuid4().hex[:12]}"
        body = self.post("/ussd", {"session_id": session_id, "msisdn": msisdn, "input": "#555*"})
        self.out(f"\n[{label}] dials #555*")
        self.out(self._indent(body["text"]))
        self._last = body
        return session_id

    def press(self, session_id: str, msisdn: str, text: str, label: str) -> dict:
        body = self.post("/ussd", {"session_id": session_id, "msisdn": msisdn, "input": text})
        self.out(f"[{label}] > {text}")
        self.out(self._indent(body["text"]))
        self._last = body
        return body

    @staticmethod
    def _indent(text: str) -> str:
        return "\n".join("    | " + line for line in text.split("\n"))

    def latest_sms(self, msisdn: str) -> list[str]:
        return [m["body"] for m in self.get(f"/sms/outbox/{msisdn}")["messages"]]

    def extract_code(self, msisdn: str) -> str:
        for body in reversed(self.latest_sms(msisdn)):
            found = re.search(r"access code is (\d{8})", body)
            if found:
                return found.group(1)
        raise ScenarioError(f"no access code SMS found for {msisdn}")

    def expect(self, condition: bool, what: str) -> None:
        if not condition:
            raise ScenarioError(f"expectation failed: {what}")
        self.out(f"  [ok] {what}")

    # -- the walkthrough -----------------------------------------------------------

    def run(self) -> None:
        self.out("== eWallet scenario walkthrough ==")
        self.post("/admin/seed", self._default_fixture())

        self.out("\n-- registrations --")
        self.post(
            "/register",
            {
                "msisdn": SENDER,
                "full_name": "Kayembe Ka Tshitupa",
                "pin": "1234",
                "secret_question": "Home town?",
                "secret_answer": "Kananga",
                "bank_account": SENDER_BANK,
            },
        )
        self.out(f"registered sender {SENDER} (bank {SENDER_BANK})")
        self.post(
            "/register",
            {
                "msisdn": SELLER,
                "full_name": "Corner Store",
                "pin": "9876",
                "secret_question": "First stock item?",
                "secret_answer": "maize",
            },
        )
        self.out(f"registered seller {SELLER}")

        # sender recharges the wallet from his bank account
        s = self.dial(SENDER, "sender")
        self.press(s, SENDER, "1234", "sender")
        self.press(s, SENDER, "1", "sender")
        self.press(s, SENDER, "1", "sender")
        self.press(s, SENDER, "1000", "sender")
        done = self.press(s, SENDER, "1", "sender")
        self.expect(done["text"] == "transaction successful", "recharge posted")

        # sender sends R550 to his wife, choosing the eWallet as the source
        s = self.dial(SENDER, "sender")
        self.press(s, SENDER, "1234", "sender")
        self.press(s, SENDER, "1", "sender")
        self.press(s, SENDER, "2", "sender")
        self.press(s, SENDER, WIFE, "sender")
        source = self.press(s, SENDER, "550", "sender")
        self.expect(
            source["text"] == "1. Bank account\n2. eWallet account",
            "source selection offered",
        )
        self.press(s, SENDER, "2", "sender")
        done = self.press(s, SENDER, "1", "sender")
        self.expect(done["text"] == "transaction successful", "wallet-to-wallet posted")

        wife_code = self.extract_code(WIFE)
        self.out(f"\nwife received access code {wife_code} by SMS")

        # wife forwards R250 to the parents from her incoming money
        s = self.dial(WIFE, "wife")
        self.expect(
            self._last["text"].startswith("You have an incoming R550"),
            "incoming funds screen shown",
        )
        self.press(s, WIFE, "1", "wife")
        self.press(s, WIFE, "3", "wife")
        self.press(s, WIFE, PARENT, "wife")
        self.press(s, WIFE, "250", "wife")
        done = self.press(s, WIFE, "1", "wife")
        self.expect(done["text"] == "transaction successful", "forward to parents posted")
        parent_code = self.extract_code(PARENT)
        self.out(f"parent received access code {parent_code} by SMS")

        # wife buys from the seller; the seller keys in her code to verify
        self.out("\n-- point of sale --")
        receipt = self.post(
            "/pos/charge",
            {
                "seller_msisdn": SELLER,
                "buyer_msisdn": WIFE,
                "amount_minor": POS_SPEND_MINOR,
                "code": wife_code,
            },
        )
        self.out(f"POS charge receipt: {json.dumps(receipt, sort_keys=True)}")
        self.expect(receipt["state"] == "NOTIFIED", "merchant payment notified")

        # a parent withdraws the forwarded amount at the ATM
        self.out("\n-- atm withdrawal --")
        receipt = self.post(
            "/atm/redeem",
            {"code": parent_code, "msisdn": PARENT, "amount_minor": FORWARD_PARENT_MINOR},
        )
        self.out(f"ATM receipt: {json.dumps(receipt, sort_keys=True)}")
        self.expect(receipt["remaining_minor"] == 0, "parent code fully redeemed")

        self._verify_books()
        self.out("\n== scenario complete: all invariants hold ==")

    def _verify_books(self) -> None:
        self.out("\n-- verification --")
        entries = self.get("/admin/journal")["entries"]
        folded: dict[str, int] = {}
        for entry in entries:
            for posting in entry["postings"]:
                folded[posting["account"]] = (
                    folded.get(posting["account"], 0) + posting["delta_minor"]
                )
        self.expect(sum(folded.values()) == 0, "journal fold sums to zero")

        balances = self.get("/admin/balances")["balances"]
        for account, amount in folded.items():
            self.expect(
                balances.get(account, 0) == amount,
                f"live balance matches fold for {account}",
            )
        self.expect(
            balances.get("SUSPENSE:MAIN", 0) == 0, "suspense fully drained"
        )
        self.expect(
            balances.get(f"WALLET:{SELLER}", 0) == POS_SPEND_MINOR,
            "seller credited the purchase",
        )
        self.expect(
            balances.get(f"WALLET:{SENDER}", 0) == RECHARGE_MINOR - SEND_WIFE_MINOR,
            "sender wallet holds the remainder",
        )

    @staticmethod
    def _default_fixture() -> dict:
        from .service import default_fixture

        return default_fixture()


def run_scenario(base_url: str, out=print) -> int:
    runner = ScenarioRunner(base_url, out=out)
    try:
        runner.run()
    except ScenarioError as exc:
        out(f"scenario FAILED: {exc}")
        return 1
    return 0
