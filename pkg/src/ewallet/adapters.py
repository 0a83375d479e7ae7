"""Simulated providers: telco MSISDN registry, bank with EFT, SMS gateway.

All three are synchronous in-process stand-ins for external systems.  Each
serializes its own mutations and exposes a health() call.  The bank supports
fault injection (fail the next N calls) so the engine's failure handling can
be driven from tests.
"""

from __future__ import annotations

import itertools
import re
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Optional

from .errors import error

_MSISDN_RE = re.compile(r"^\d{7,15}$")


def normalize_msisdn(raw: str) -> str:
    """Canonical digit-only form: strips +, spaces, dashes and parentheses."""
    return re.sub(r"[+\s\-()]", "", raw or "")


def msisdn_is_wellformed(msisdn: str) -> bool:
    return bool(_MSISDN_RE.match(msisdn))


class TelcoRegistry:
    """Active MSISDN lookup across the seeded carriers."""

    def __init__(self):
        self._lock = threading.Lock()
        self.active_msisdns: dict[str, str] = {}

    def seed(self, msisdn: str, carrier: str) -> None:
        with self._lock:
            self.active_msisdns[normalize_msisdn(msisdn)] = carrier

    def validate_msisdn(self, msisdn: str) -> dict:
        msisdn = normalize_msisdn(msisdn)
        if not msisdn_is_wellformed(msisdn):
            return {"valid": False, "carrier": None}
        carrier = self.active_msisdns.get(msisdn)
        return {"valid": carrier is not None, "carrier": carrier}

    @property
    def carriers(self) -> set[str]:
        return set(self.active_msisdns.values())

    def health(self) -> dict:
        return {"name": "telco", "ok": True, "msisdns": len(self.active_msisdns)}


@dataclass
class EftRecord:
    direction: str
    account: str
    amount_minor: int
    ref: str
    ts: str


class SimulatedBank:
    """Account lookup, funds check and EFT debit/credit with an audit log."""

    def __init__(self, clock: Callable[[], datetime] | None = None):
        self._lock = threading.Lock()
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.accounts: dict[str, dict] = {}
        self.eft_log: list[EftRecord] = []
        self._fail_next = 0
        self.latency_s = 0.0

    def seed(self, number: str, holder: str, balance_minor: int) -> None:
        with self._lock:
            self.accounts[number] = {"holder_name": holder, "balance_minor": balance_minor}

    def fail_next(self, n: int) -> None:
        with self._lock:
            self._fail_next = n

    def _maybe_fault(self) -> None:
        if self.latency_s:
            time.sleep(self.latency_s)
        if self._fail_next > 0:
            self._fail_next -= 1
            raise error("PROVIDER_UNAVAILABLE", "Bank provider is temporarily unavailable")

    def validate_bank_account(self, account_number: str) -> dict:
        with self._lock:
            self._maybe_fault()
            acct = self.accounts.get(account_number)
            if acct is None:
                return {"valid": False, "holder": None}
            return {"valid": True, "holder": acct["holder_name"]}

    def balance(self, account_number: str) -> int:
        with self._lock:
            acct = self.accounts.get(account_number)
            if acct is None:
                raise error("UNKNOWN_BANK_ACCOUNT")
            return acct["balance_minor"]

    def eft(self, direction: str, account_number: str, amount_minor: int, ref: str) -> dict:
        if direction not in ("DEBIT", "CREDIT"):
            raise error("BAD_REQUEST", f"Unknown EFT direction {direction!r}")
        with self._lock:
            self._maybe_fault()
            acct = self.accounts.get(account_number)
            if acct is None:
                raise error("UNKNOWN_BANK_ACCOUNT")
            if direction == "DEBIT":
                if acct["balance_minor"] < amount_minor:
                    raise error("NOT_SUFFICIENT_FUNDS")
                acct["balance_minor"] -= amount_minor
            else:
                acct["balance_minor"] += amount_minor
            record = EftRecord(
                direction=direction,
                account=account_number,
                amount_minor=amount_minor,
                ref=ref,
                ts=self.clock().isoformat(),
            )
            self.eft_log.append(record)
            return {
                "ref": ref,
                "direction": direction,
                "account": account_number,
                "amount_minor": amount_minor,
                "balance_minor": acct["balance_minor"],
            }

    def health(self) -> dict:
        return {"name": "bank", "ok": True, "accounts": len(self.accounts)}


@dataclass
class SmsMessage:
    id: int
    to: str
    body: str
    queued_at: str
    delivery_state: str = "QUEUED"

    def as_record(self) -> dict:
        return {
            "id": self.id,
            "to": self.to,
            "body": self.body,
            "queued_at": self.queued_at,
            "delivery_state": self.delivery_state,
        }


class SmsGateway:
    """Per-MSISDN FIFO outbox; delivery is simulated by an explicit ack."""

    def __init__(self, telco: TelcoRegistry, clock: Callable[[], datetime] | None = None):
        self._lock = threading.Lock()
        self._telco = telco
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self._ids = itertools.count(1)
        self.outbox: dict[str, list[SmsMessage]] = {}

    def send_sms(self, to: str, body: str) -> SmsMessage:
        to = normalize_msisdn(to)
        if not self._telco.validate_msisdn(to)["valid"]:
            raise error("UNKNOWN_MSISDN", f"Cannot SMS unknown number {to}")
        with self._lock:
            msg = SmsMessage(
                id=next(self._ids), to=to, body=body, queued_at=self.clock().isoformat()
            )
            self.outbox.setdefault(to, []).append(msg)
            return msg

    def poll(self, msisdn: str) -> list[SmsMessage]:
        """FIFO view of the outbox; polling never consumes."""
        with self._lock:
            return list(self.outbox.get(normalize_msisdn(msisdn), []))

    def ack(self, msisdn: str, through_id: int) -> int:
        """Mark messages up to and including through_id DELIVERED."""
        marked = 0
        with self._lock:
            for msg in self.outbox.get(normalize_msisdn(msisdn), []):
                if msg.id <= through_id and msg.delivery_state == "QUEUED":
                    msg.delivery_state = "DELIVERED"
                    marked += 1
        return marked

    def health(self) -> dict:
        queued = sum(len(v) for v in self.outbox.values())
        return {"name": "sms", "ok": True, "queued": queued}


def apply_seed_fixture(telco: TelcoRegistry, bank: SimulatedBank, fixture: dict) -> dict:
    """Load {msisdns:[{msisdn,carrier}], bank_accounts:[{number,holder,balance_minor}]}."""
    msisdns = fixture.get("msisdns", [])
    accounts = fixture.get("bank_accounts", [])
    for row in msisdns:
        telco.seed(row["msisdn"], row.get("carrier", "Vodacom"))
    for row in accounts:
        bank.seed(row["number"], row.get("holder", ""), int(row.get("balance_minor", 0)))
    return {"msisdns": len(msisdns), "bank_accounts": len(accounts)}
