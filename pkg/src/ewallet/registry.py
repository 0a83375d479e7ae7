"""Subscriber lifecycle: registration, login, PIN retrieval, detail updates,
de-registration and the lock counter.

Secrets are stored only as salted digests; a forgotten PIN is replaced by a
freshly generated one delivered over SMS, never recovered.  Every mutation
appends a REGISTRATION_MARKER audit entry to the journal carrying the full
(digest-only) subscriber snapshot, so registry state replays from the same
stream as the money.  A JSON snapshot file is maintained as a convenience
export; the journal remains the authority.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
import threading
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Optional

from .adapters import SimulatedBank, SmsGateway, TelcoRegistry, normalize_msisdn
from .errors import error
from .ledger import AccountId, EntryType, Ledger


class Channel(str, Enum):
    USSD = "USSD"
    WEB = "WEB"


class SubscriberStatus(str, Enum):
    PENDING = "PENDING"
    ACTIVE = "ACTIVE"
    LOCKED = "LOCKED"
    CLOSED = "CLOSED"


def digest_secret(secret: str, salt: Optional[str] = None, rng: random.Random | None = None) -> str:
    if salt is None:
        rng = rng or random.SystemRandom()
        salt = "".join(rng.choice(string.hexdigits.lower()) for _ in range(16))
    h = hashlib.sha256(f"{salt}:{secret}".encode("utf-8")).hexdigest()
    return f"sha256${salt}${h}"


def verify_secret(secret: str, stored: str) -> bool:
    try:
        _, salt, _ = stored.split("$")
    except ValueError:
        return False
    return digest_secret(secret, salt) == stored


def _fold_answer(answer: str) -> str:
    return (answer or "").strip().casefold()


def pin_is_valid(pin: str) -> bool:
    return pin.isdigit() and 4 <= len(pin) <= 6


@dataclass
class Subscriber:
    msisdn: str
    full_name: str
    pin_digest: str
    login_id: str
    password_digest: str
    password_temporary: bool
    secret_question: str
    secret_answer_digest: str
    bank_account: Optional[str] = None
    status: SubscriberStatus = SubscriberStatus.ACTIVE
    failed_attempts: int = 0

    def as_record(self) -> dict:
        rec = asdict(self)
        rec["status"] = self.status.value
        return rec

    @staticmethod
    def from_record(rec: dict) -> "Subscriber":
        rec = dict(rec)
        rec["status"] = SubscriberStatus(rec["status"])
        return Subscriber(**rec)


class SubscriberRegistry:
    def __init__(
        self,
        ledger: Ledger,
        telco: TelcoRegistry,
        bank: SimulatedBank,
        sms: SmsGateway,
        lock_threshold: int = 3,
        snapshot_path: str | Path | None = None,
        rng: random.Random | None = None,
    ):
        self._lock = threading.RLock()
        self.ledger = ledger
        self.telco = telco
        self.bank = bank
        self.sms = sms
        self.lock_threshold = lock_threshold
        self.snapshot_path = Path(snapshot_path) if snapshot_path else None
        self.rng = rng or random.SystemRandom()
        self._subscribers: dict[str, Subscriber] = {}
        self._audit_counter = 0
        # set by the service wiring; used for the deregistration sweep and
        # for crediting funds parked before the holder registered
        self.engine = None

    def bind_engine(self, engine) -> None:
        self.engine = engine

    # -- persistence ---------------------------------------------------------

    def rebuild_from_journal(self) -> None:
        """Replay audit entries; the last snapshot per msisdn wins."""
        with self._lock:
            self._subscribers.clear()
            for entry in self.ledger.entries():
                if entry.entry_type is not EntryType.REGISTRATION_MARKER:
                    continue
                raw = entry.meta.get("subscriber")
                if not raw:
                    continue
                sub = Subscriber.from_record(json.loads(raw))
                self._subscribers[sub.msisdn] = sub
                self._audit_counter += 1

    def _audit(self, event: str, sub: Subscriber, extra: dict | None = None) -> None:
        self._audit_counter += 1
        meta = {
            "event": event,
            "msisdn": sub.msisdn,
            "subscriber": json.dumps(sub.as_record(), sort_keys=True),
        }
        if extra:
            meta.update({k: str(v) for k, v in extra.items()})
        self.ledger.append_entry(
            EntryType.REGISTRATION_MARKER,
            [],
            meta,
            txn_id=f"REG-{self._audit_counter:08d}",
        )
        self._write_snapshot()

    def _write_snapshot(self) -> None:
        if self.snapshot_path is None:
            return
        data = {m: s.as_record() for m, s in self._subscribers.items()}
        self.snapshot_path.write_text(json.dumps(data, indent=2, sort_keys=True))

    # -- lookups -------------------------------------------------------------

    def get(self, msisdn: str) -> Optional[Subscriber]:
        return self._subscribers.get(normalize_msisdn(msisdn))

    def require_subscriber(self, msisdn: str) -> Subscriber:
        sub = self.get(msisdn)
        if sub is None:
            raise error("UNKNOWN_MSISDN")
        return sub

    def require_active(self, msisdn: str) -> Subscriber:
        sub = self.require_subscriber(msisdn)
        if sub.status is SubscriberStatus.CLOSED:
            raise error("ACCOUNT_CLOSED")
        if sub.status is not SubscriberStatus.ACTIVE:
            raise error("ACCOUNT_LOCKED")
        return sub

    def is_active(self, msisdn: str) -> bool:
        sub = self.get(msisdn)
        return sub is not None and sub.status is SubscriberStatus.ACTIVE

    def subscriber_for_bank_account(self, account_number: str) -> Optional[Subscriber]:
        for sub in self._subscribers.values():
            if sub.bank_account == account_number and sub.status is not SubscriberStatus.CLOSED:
                return sub
        return None

    def new_pin(self) -> str:
        return "".join(self.rng.choice(string.digits) for _ in range(4))

    def _new_temp_password(self) -> str:
        alphabet = string.ascii_letters + string.digits
        return "".join(self.rng.choice(alphabet) for _ in range(10))

    # -- operations ------------------------------------------------------------

    def register(self, application: dict) -> dict:
        """Create an ACTIVE subscriber, open the wallet, SMS the credentials.

        application: {msisdn, full_name, pin, secret_question, secret_answer,
        bank_account (optional)}
        """
        with self._lock:
            msisdn = normalize_msisdn(application.get("msisdn", ""))
            if not self.telco.validate_msisdn(msisdn)["valid"]:
                raise error("UNKNOWN_MSISDN")
            existing = self.get(msisdn)
            if existing is not None and existing.status is not SubscriberStatus.CLOSED:
                raise error("DUPLICATE_REGISTRATION")
            pin = application.get("pin", "")
            if not pin_is_valid(pin):
                raise error("VALIDATION_FAILED", "pin: must be 4 to 6 digits")
            question = (application.get("secret_question") or "").strip()
            answer = application.get("secret_answer") or ""
            if not question or not _fold_answer(answer):
                raise error(
                    "VALIDATION_FAILED", "secret_question/secret_answer: both required"
                )
            bank_account = application.get("bank_account") or None
            if bank_account is not None:
                if not self.bank.validate_bank_account(bank_account)["valid"]:
                    raise error("UNKNOWN_BANK_ACCOUNT")

            temp_password = self._new_temp_password()
            sub = Subscriber(
                msisdn=msisdn,
                full_name=(application.get("full_name") or "").strip(),
                pin_digest=digest_secret(pin, rng=self.rng),
                login_id=msisdn,
                password_digest=digest_secret(temp_password, rng=self.rng),
                password_temporary=True,
                secret_question=question,
                secret_answer_digest=digest_secret(_fold_answer(answer), rng=self.rng),
                bank_account=bank_account,
                status=SubscriberStatus.ACTIVE,
            )
            wallet = AccountId.wallet(msisdn)
            if not self.ledger.account_exists(wallet):
                self.ledger.open_account(wallet)
            if bank_account is not None:
                self.ledger.ensure_account(AccountId.bank_mirror(bank_account))
            self._subscribers[msisdn] = sub
            self._audit("register", sub)
            self.sms.send_sms(
                msisdn,
                f"Welcome to eWallet. Your login ID is {sub.login_id} and your "
                f"temporary password is {temp_password}.",
            )
            if self.engine is not None:
                self.engine.claim_parked_funds(msisdn)
            return {"msisdn": msisdn, "login_id": sub.login_id, "temporary_password": temp_password}

    def login(self, channel: Channel, principal: str, secret: str) -> Subscriber:
        with self._lock:
            principal = normalize_msisdn(principal) if channel is Channel.USSD else principal
            sub = None
            if channel is Channel.USSD:
                sub = self.get(principal)
            else:
                for cand in self._subscribers.values():
                    if cand.login_id == principal or cand.msisdn == normalize_msisdn(principal):
                        sub = cand
                        break
            if sub is None:
                raise error("INVALID_LOGIN", "Invalid login details")
            if sub.status is SubscriberStatus.CLOSED:
                raise error("ACCOUNT_CLOSED")
            if sub.status is SubscriberStatus.LOCKED:
                raise error("ACCOUNT_LOCKED")
            stored = sub.pin_digest if channel is Channel.USSD else sub.password_digest
            if not verify_secret(secret, stored):
                sub.failed_attempts += 1
                if sub.failed_attempts >= self.lock_threshold:
                    sub.status = SubscriberStatus.LOCKED
                self._audit("login_failed", sub, {"channel": channel.value})
                if sub.status is SubscriberStatus.LOCKED:
                    raise error("ACCOUNT_LOCKED")
                raise error("INVALID_LOGIN", "Invalid login details")
            sub.failed_attempts = 0
            self._audit("login_ok", sub, {"channel": channel.value})
            return sub

    def retrieve_pin(self, msisdn: str, answer: str) -> dict:
        with self._lock:
            sub = self.require_subscriber(msisdn)
            if sub.status is SubscriberStatus.CLOSED:
                raise error("ACCOUNT_CLOSED")
            if not verify_secret(_fold_answer(answer), sub.secret_answer_digest):
                self._audit("pin_retrieval_failed", sub)
                raise error("INVALID_ANSWER", "Invalid Answer")
            new_pin = self.new_pin()
            sub.pin_digest = digest_secret(new_pin, rng=self.rng)
            self._audit("pin_retrieved", sub)
            self.sms.send_sms(sub.msisdn, f"Your new eWallet pin is {new_pin}.")
            return {"msisdn": sub.msisdn, "delivery": "SMS"}

    def change_password(self, msisdn: str, new_password: str) -> None:
        with self._lock:
            sub = self.require_active(msisdn)
            if len(new_password) < 6:
                raise error("VALIDATION_FAILED", "password: minimum 6 characters")
            sub.password_digest = digest_secret(new_password, rng=self.rng)
            sub.password_temporary = False
            self._audit("password_changed", sub)

    USSD_MUTABLE = {"pin", "msisdn"}
    WEB_MUTABLE = {
        "full_name",
        "msisdn",
        "pin",
        "password",
        "secret_question",
        "secret_answer",
        "bank_account",
    }

    def update_details(self, channel: Channel, msisdn: str, changes: dict) -> dict:
        with self._lock:
            sub = self.require_active(msisdn)
            allowed = self.USSD_MUTABLE if channel is Channel.USSD else self.WEB_MUTABLE
            bad = sorted(set(changes) - allowed)
            if bad:
                raise error(
                    "FORBIDDEN_FIELD_FOR_CHANNEL",
                    f"Cannot change via {channel.value}: {', '.join(bad)}",
                )

            reasons = []
            new_msisdn = None
            if "msisdn" in changes:
                new_msisdn = normalize_msisdn(changes["msisdn"])
                if not self.telco.validate_msisdn(new_msisdn)["valid"]:
                    reasons.append("msisdn: not known to any network provider")
                else:
                    other = self.get(new_msisdn)
                    if other is not None and other is not sub and other.status is not SubscriberStatus.CLOSED:
                        reasons.append("msisdn: already registered")
            if "pin" in changes and not pin_is_valid(changes["pin"]):
                reasons.append("pin: must be 4 to 6 digits")
            if "password" in changes and len(changes["password"]) < 6:
                reasons.append("password: minimum 6 characters")
            if "bank_account" in changes and changes["bank_account"]:
                if not self.bank.validate_bank_account(changes["bank_account"])["valid"]:
                    reasons.append("bank_account: not known to the bank")
            if "secret_answer" in changes and not _fold_answer(changes["secret_answer"]):
                reasons.append("secret_answer: required")
            if reasons:
                raise error("VALIDATION_FAILED", "; ".join(reasons))

            changed = []
            if "full_name" in changes:
                sub.full_name = changes["full_name"].strip()
                changed.append("full_name")
            if "pin" in changes:
                sub.pin_digest = digest_secret(changes["pin"], rng=self.rng)
                changed.append("pin")
            if "password" in changes:
                sub.password_digest = digest_secret(changes["password"], rng=self.rng)
                sub.password_temporary = False
                changed.append("password")
            if "secret_question" in changes:
                sub.secret_question = changes["secret_question"].strip()
                changed.append("secret_question")
            if "secret_answer" in changes:
                sub.secret_answer_digest = digest_secret(
                    _fold_answer(changes["secret_answer"]), rng=self.rng
                )
                changed.append("secret_answer")
            if "bank_account" in changes:
                sub.bank_account = changes["bank_account"] or None
                if sub.bank_account:
                    self.ledger.ensure_account(AccountId.bank_mirror(sub.bank_account))
                changed.append("bank_account")
            if new_msisdn is not None and new_msisdn != sub.msisdn:
                self._rekey_msisdn(sub, new_msisdn)
                changed.append("msisdn")

            self._audit("update", sub, {"changed": ",".join(changed)})
            if channel is Channel.USSD:
                body = (
                    "Your pin number was changed successfully."
                    if changed == ["pin"]
                    else "Your eWallet details were updated successfully."
                )
                self.sms.send_sms(sub.msisdn, body)
            return {"msisdn": sub.msisdn, "changed": changed}

    def _rekey_msisdn(self, sub: Subscriber, new_msisdn: str) -> None:
        from .ledger import LedgerPosting  # local import keeps module header lean

        old_wallet = AccountId.wallet(sub.msisdn)
        new_wallet = AccountId.wallet(new_msisdn)
        if not self.ledger.account_exists(new_wallet):
            self.ledger.open_account(new_wallet)
        balance = self.ledger.balance(old_wallet).amount_minor
        if balance > 0:
            self.ledger.append_entry(
                EntryType.P2P,
                [
                    LedgerPosting(old_wallet, -balance, self.ledger.currency),
                    LedgerPosting(new_wallet, balance, self.ledger.currency),
                ],
                {"reason": "msisdn_change", "from": sub.msisdn, "to": new_msisdn},
            )
        del self._subscribers[sub.msisdn]
        old = sub.msisdn
        sub.msisdn = new_msisdn
        if sub.login_id == old:
            sub.login_id = new_msisdn
        self._subscribers[new_msisdn] = sub

    def deregister(self, msisdn: str, confirmation: bool) -> dict:
        with self._lock:
            sub = self.require_subscriber(msisdn)
            if sub.status is SubscriberStatus.CLOSED:
                raise error("ACCOUNT_CLOSED")
            if not confirmation:
                return {"msisdn": sub.msisdn, "status": sub.status.value, "closed": False}
            wallet = AccountId.wallet(sub.msisdn)
            balance = self.ledger.balance(wallet).amount_minor
            if balance > 0:
                if not sub.bank_account:
                    raise error("RESIDUAL_BALANCE_NO_BANK")
                assert self.engine is not None, "engine must be bound before deregister"
                self.engine.sweep_wallet_to_bank(sub.msisdn, sub.bank_account, balance)
            sub.status = SubscriberStatus.CLOSED
            self._audit("close", sub)
            self.sms.send_sms(sub.msisdn, "Your eWallet account has been closed. Goodbye.")
            return {"msisdn": sub.msisdn, "status": sub.status.value, "closed": True}

    def unlock(self, msisdn: str) -> dict:
        with self._lock:
            sub = self.require_subscriber(msisdn)
            if sub.status is not SubscriberStatus.LOCKED:
                return {"msisdn": sub.msisdn, "status": sub.status.value, "changed": False}
            sub.status = SubscriberStatus.ACTIVE
            sub.failed_attempts = 0
            self._audit("unlock", sub)
            return {"msisdn": sub.msisdn, "status": sub.status.value, "changed": True}
