"""Money-movement engine: transfers, recharge, withdrawal holds, access-code
redemption, merchant payment and the expiry sweep.

Every operation composes the ledger, the subscriber registry and the
simulated providers.  External adapter calls (EFT debit/credit) happen
BEFORE the journal append; if the append then fails a compensating adapter
call is issued.  Transactions move INITIATED -> VALIDATED -> POSTED ->
NOTIFIED; failures are only possible before POSTED, after which money has
moved and any correction is a REVERSAL entry.

Access codes are temporary PINs: 8 random digits, stored as salted digests
only (the clear code exists once, inside the SMS that delivers it).  Funds
behind a code sit in the suspense account; at all times the suspense balance
equals the sum of `remaining` over live codes.
"""

from __future__ import annotations

import json
import random
import string
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Optional

from .adapters import SimulatedBank, SmsGateway, TelcoRegistry, normalize_msisdn
from .errors import EWalletError, error
from .ledger import (
    ATM_CASH_POOL,
    AccountId,
    AccountKind,
    EntryType,
    Ledger,
    LedgerPosting,
)
from .money import Money, require_positive
from .registry import SubscriberRegistry, digest_secret, verify_secret


class TransactionKind(str, Enum):
    P2P = "P2P"
    WALLET_TO_BANK = "WALLET_TO_BANK"
    BANK_TO_BANK = "BANK_TO_BANK"
    RECHARGE = "RECHARGE"
    WITHDRAWAL = "WITHDRAWAL"
    MERCHANT_PAYMENT = "MERCHANT_PAYMENT"


class TransactionState(str, Enum):
    INITIATED = "INITIATED"
    VALIDATED = "VALIDATED"
    POSTED = "POSTED"
    NOTIFIED = "NOTIFIED"
    FAILED = "FAILED"


class FundingSource(str, Enum):
    WALLET = "WALLET"
    BANK = "BANK"
    AUTO = "AUTO"


class CodeState(str, Enum):
    ISSUED = "ISSUED"
    PARTIALLY_REDEEMED = "PARTIALLY_REDEEMED"
    REDEEMED = "REDEEMED"
    EXPIRED = "EXPIRED"
    CANCELLED = "CANCELLED"


LIVE_CODE_STATES = {CodeState.ISSUED, CodeState.PARTIALLY_REDEEMED}


@dataclass
class FeeSchedule:
    """flat + round-half-up(amount * percent_bp / 10000), per transaction kind."""

    percent_bp: int = 0
    flat_minor: int = 0
    per_kind: dict[TransactionKind, tuple[int, int]] = field(default_factory=dict)

    def fee(self, kind: TransactionKind, amount_minor: int) -> int:
        bp, flat = self.per_kind.get(kind, (self.percent_bp, self.flat_minor))
        return flat + (amount_minor * bp + 5000) // 10000

    @staticmethod
    def preset(name: str) -> "FeeSchedule":
        if name == "default":
            return FeeSchedule(0, 0)
        if name == "agency-comparison":
            # mirrors what cash-transfer agencies charge: 10% of the amount
            return FeeSchedule(1000, 0)
        raise error("BAD_REQUEST", f"Unknown fee preset {name!r}")


@dataclass
class AccessCode:
    code_id: str
    code_digest: str
    holder: str
    issued_minor: int
    remaining_minor: int
    expires_at: str
    state: CodeState
    hold_entry: int
    refund_msisdn: str
    claim_tag: Optional[str] = None
    redeemed_minor: int = 0
    refunded_minor: int = 0

    def as_record(self) -> dict:
        return {
            "code_id": self.code_id,
            "code_digest": self.code_digest,
            "holder": self.holder,
            "issued_minor": self.issued_minor,
            "remaining_minor": self.remaining_minor,
            "expires_at": self.expires_at,
            "state": self.state.value,
            "hold_entry": self.hold_entry,
            "refund_msisdn": self.refund_msisdn,
            "claim_tag": self.claim_tag,
            "redeemed_minor": self.redeemed_minor,
            "refunded_minor": self.refunded_minor,
        }

    @staticmethod
    def from_record(rec: dict) -> "AccessCode":
        rec = dict(rec)
        rec["state"] = CodeState(rec["state"])
        return AccessCode(**rec)

    def update_record(self) -> dict:
        return {
            "code_id": self.code_id,
            "remaining_minor": self.remaining_minor,
            "state": self.state.value,
            "redeemed_minor": self.redeemed_minor,
            "refunded_minor": self.refunded_minor,
        }


class _AccountLocks:
    """Per-account mutual exclusion with a global order to prevent deadlock."""

    def __init__(self):
        self._guard = threading.Lock()
        self._locks: dict[str, threading.RLock] = {}

    @contextmanager
    def held(self, *keys: str):
        ordered = sorted(set(keys))
        locks = []
        with self._guard:
            for key in ordered:
                locks.append(self._locks.setdefault(key, threading.RLock()))
        for lock in locks:
            lock.acquire()
        try:
            yield
        finally:
            for lock in reversed(locks):
                lock.release()


class TransactionEngine:
    def __init__(
        self,
        ledger: Ledger,
        registry: SubscriberRegistry,
        telco: TelcoRegistry,
        bank: SimulatedBank,
        sms: SmsGateway,
        fees: FeeSchedule | None = None,
        access_code_ttl_hours: int = 72,
        service_code: str = "#555*",
        clock: Callable[[], datetime] | None = None,
        rng: random.Random | None = None,
    ):
        self.ledger = ledger
        self.registry = registry
        self.telco = telco
        self.bank = bank
        self.sms = sms
        self.fees = fees or FeeSchedule()
        self.access_code_ttl = timedelta(hours=access_code_ttl_hours)
        self.service_code = service_code
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.rng = rng or random.SystemRandom()
        self._locks = _AccountLocks()
        self._state = threading.RLock()
        self._codes: dict[str, AccessCode] = {}
        self._responses: dict[str, dict] = {}
        self._txn_counter = 0
        self._code_counter = 0
        registry.bind_engine(self)
        self.rebuild_from_journal()

    # -- startup ---------------------------------------------------------------

    def rebuild_from_journal(self) -> None:
        """Recover codes, idempotent responses and counters from entry meta."""
        with self._state:
            self._codes.clear()
            self._responses.clear()
            self._txn_counter = 0
            self._code_counter = 0
            for entry in self.ledger.entries():
                raw_code = entry.meta.get("code")
                if raw_code:
                    code = AccessCode.from_record(json.loads(raw_code))
                    self._codes[code.code_id] = code
                    self._code_counter = max(self._code_counter, int(code.code_id.split("-")[1]))
                raw_update = entry.meta.get("code_update")
                if raw_update:
                    upd = json.loads(raw_update)
                    code = self._codes.get(upd["code_id"])
                    if code is not None:
                        code.remaining_minor = upd["remaining_minor"]
                        code.state = CodeState(upd["state"])
                        code.redeemed_minor = upd["redeemed_minor"]
                        code.refunded_minor = upd["refunded_minor"]
                raw_txn = entry.meta.get("txn")
                if raw_txn:
                    payload = json.loads(raw_txn)
                    key = entry.meta.get("idempotency_key")
                    if key:
                        self._responses[key] = payload
                    tid = payload.get("txn_id", "")
                    if tid.startswith("TXN-"):
                        self._txn_counter = max(self._txn_counter, int(tid.split("-")[1]))

    # -- shared plumbing ---------------------------------------------------------

    def _next_txn_id(self) -> str:
        with self._state:
            self._txn_counter += 1
            return f"TXN-{self._txn_counter:08d}"

    def _next_code_id(self) -> str:
        with self._state:
            self._code_counter += 1
            return f"AC-{self._code_counter:08d}"

    def _generate_code(self) -> str:
        while True:
            code = "".join(self.rng.choice(string.digits) for _ in range(8))
            if not any(
                c.state in LIVE_CODE_STATES and verify_secret(code, c.code_digest)
                for c in self._codes.values()
            ):
                return code

    def _money(self, minor: int) -> Money:
        return Money(minor, self.ledger.currency)

    def _render(self, minor: int) -> str:
        return self._money(minor).render()

    def _replay(self, idempotency_key: Optional[str]) -> Optional[dict]:
        if idempotency_key is None:
            return None
        with self._state:
            return self._responses.get(idempotency_key)

    def _remember(self, idempotency_key: Optional[str], payload: dict) -> dict:
        if idempotency_key is not None:
            with self._state:
                self._responses[idempotency_key] = payload
        return payload

    def _txn_payload(
        self,
        txn_id: str,
        kind: TransactionKind,
        sender: str,
        recipient: str,
        amount_minor: int,
        fee_minor: int,
        entry_seq: int,
        source: str = FundingSource.WALLET.value,
        access_code_issued: bool = False,
    ) -> dict:
        return {
            "txn_id": txn_id,
            "kind": kind.value,
            "state": TransactionState.NOTIFIED.value,
            "sender": sender,
            "recipient": recipient,
            "amount_minor": amount_minor,
            "fee_minor": fee_minor,
            "currency": self.ledger.currency,
            "source": source,
            "entry_seq": entry_seq,
            "access_code_issued": access_code_issued,
        }

    def _fee_postings(self, fee_minor: int) -> list[LedgerPosting]:
        if fee_minor == 0:
            return []
        return [LedgerPosting(AccountId.fee_income(), fee_minor, self.ledger.currency)]

    def _consume(self, code: AccessCode, amount_minor: int) -> None:
        code.remaining_minor -= amount_minor
        code.redeemed_minor += amount_minor
        code.state = (
            CodeState.REDEEMED if code.remaining_minor == 0 else CodeState.PARTIALLY_REDEEMED
        )

    def _unconsume(self, code: AccessCode, amount_minor: int) -> None:
        code.remaining_minor += amount_minor
        code.redeemed_minor -= amount_minor
        code.state = (
            CodeState.ISSUED if code.redeemed_minor == 0 else CodeState.PARTIALLY_REDEEMED
        )

    def _issue_code_record(
        self,
        holder: str,
        amount_minor: int,
        refund_msisdn: str,
        claim_tag: Optional[str],
        hold_entry_seq: int,
    ) -> tuple[AccessCode, str]:
        clear = self._generate_code()
        code = AccessCode(
            code_id=self._next_code_id(),
            code_digest=digest_secret(clear, rng=self.rng),
            holder=holder,
            issued_minor=amount_minor,
            remaining_minor=amount_minor,
            expires_at=(self.clock() + self.access_code_ttl).isoformat(),
            state=CodeState.ISSUED,
            hold_entry=hold_entry_seq,
            refund_msisdn=refund_msisdn,
            claim_tag=claim_tag,
        )
        return code, clear

    # -- code lookups -------------------------------------------------------------

    def live_codes_for(self, msisdn: str) -> list[AccessCode]:
        msisdn = normalize_msisdn(msisdn)
        with self._state:
            codes = [
                c
                for c in self._codes.values()
                if c.holder == msisdn and c.state in LIVE_CODE_STATES
            ]
        return sorted(codes, key=lambda c: c.code_id)

    def incoming_total(self, msisdn: str) -> int:
        return sum(c.remaining_minor for c in self.live_codes_for(msisdn))

    def _find_code(self, clear_code: str) -> Optional[AccessCode]:
        with self._state:
            live = [c for c in self._codes.values() if c.state in LIVE_CODE_STATES]
            dead = [c for c in self._codes.values() if c.state not in LIVE_CODE_STATES]
        for code in live + dead:
            if verify_secret(clear_code, code.code_digest):
                return code
        return None

    def _require_spendable_code(self, clear_code: str, holder: str) -> AccessCode:
        code = self._find_code(clear_code)
        if code is None or code.holder != normalize_msisdn(holder):
            # a code that belongs to someone else is indistinguishable from an
            # unknown one on purpose
            raise error("CODE_UNKNOWN")
        if code.state is CodeState.REDEEMED:
            raise error("CODE_ALREADY_REDEEMED")
        if code.state in (CodeState.EXPIRED, CodeState.CANCELLED):
            raise error("CODE_EXPIRED" if code.state is CodeState.EXPIRED else "CODE_UNKNOWN")
        if self.clock() > datetime.fromisoformat(code.expires_at):
            self._expire_code(code)
            raise error("CODE_EXPIRED")
        return code

    # -- transfers ----------------------------------------------------------------

    def transfer_wallet_to_wallet(
        self,
        sender: str,
        recipient_msisdn: str,
        amount_minor: int,
        idempotency_key: Optional[str] = None,
        source: FundingSource | str = FundingSource.AUTO,
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        source = FundingSource(source)
        sender_sub = self.registry.require_active(sender)
        require_positive(amount_minor)
        recipient_msisdn = normalize_msisdn(recipient_msisdn)
        if not self.telco.validate_msisdn(recipient_msisdn)["valid"]:
            raise error("UNKNOWN_MSISDN")
        fee = self.fees.fee(TransactionKind.P2P, amount_minor)
        total = amount_minor + fee
        currency = self.ledger.currency
        sender_wallet = AccountId.wallet(sender_sub.msisdn)

        with self._locks.held(str(sender_wallet), f"WALLET:{recipient_msisdn}"):
            source = self._resolve_source(source, sender_sub, total)
            recipient_registered = self.registry.is_active(recipient_msisdn)
            target = (
                AccountId.wallet(recipient_msisdn)
                if recipient_registered
                else AccountId.suspense()
            )

            postings = [LedgerPosting(target, amount_minor, currency)]
            eft_ref = None
            txn_id = self._next_txn_id()
            if source is FundingSource.WALLET:
                if self.ledger.balance(sender_wallet).amount_minor < total:
                    raise error("NOT_SUFFICIENT_FUNDS")
                postings.insert(0, LedgerPosting(sender_wallet, -total, currency))
            else:
                eft_ref = f"{txn_id}/fund"
                self.bank.eft("DEBIT", sender_sub.bank_account, total, eft_ref)
                postings.insert(
                    0,
                    LedgerPosting(
                        AccountId.bank_mirror(sender_sub.bank_account), -total, currency
                    ),
                )
            postings += self._fee_postings(fee)

            meta: dict[str, str] = {
                "kind": TransactionKind.P2P.value,
                "sender": sender_sub.msisdn,
                "recipient": recipient_msisdn,
            }
            code = clear = None
            try:
                with self.ledger.exclusive():
                    entry_seq = self.ledger.last_seq() + 1
                    if not recipient_registered:
                        code, clear = self._issue_code_record(
                            holder=recipient_msisdn,
                            amount_minor=amount_minor,
                            refund_msisdn=sender_sub.msisdn,
                            claim_tag=recipient_msisdn,
                            hold_entry_seq=entry_seq,
                        )
                        meta["code"] = json.dumps(code.as_record(), sort_keys=True)
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.P2P,
                        sender_sub.msisdn,
                        recipient_msisdn,
                        amount_minor,
                        fee,
                        entry_seq=entry_seq,
                        source=source.value,
                        access_code_issued=not recipient_registered,
                    )
                    meta["txn"] = json.dumps(payload, sort_keys=True)
                    self.ledger.append_entry(
                        EntryType.P2P, postings, meta, idempotency_key, txn_id
                    )
            except EWalletError:
                if eft_ref is not None:
                    self.bank.eft(
                        "CREDIT", sender_sub.bank_account, total, f"{txn_id}/undo"
                    )
                raise
            if code is not None:
                with self._state:
                    self._codes[code.code_id] = code

            rendered = self._render(amount_minor)
            self.sms.send_sms(
                sender_sub.msisdn,
                f"Transaction successful. You sent {rendered} to {recipient_msisdn}.",
            )
            if recipient_registered:
                self.sms.send_sms(recipient_msisdn, f"You have an incoming {rendered}")
            else:
                self.sms.send_sms(
                    recipient_msisdn,
                    f"You have an incoming {rendered}. Your access code is {clear}. "
                    f"To retrieve the money, dial {self.service_code} or use the code "
                    f"at any ATM or participating store.",
                )
            return self._remember(idempotency_key, payload)

    def _resolve_source(self, source: FundingSource, sender_sub, total_minor: int) -> FundingSource:
        wallet = AccountId.wallet(sender_sub.msisdn)
        if source is FundingSource.AUTO:
            if self.ledger.balance(wallet).amount_minor >= total_minor:
                return FundingSource.WALLET
            if sender_sub.bank_account and self.bank.balance(sender_sub.bank_account) >= total_minor:
                return FundingSource.BANK
            raise error("NOT_SUFFICIENT_FUNDS")
        if source is FundingSource.BANK and not sender_sub.bank_account:
            raise error("NO_LINKED_BANK_ACCOUNT")
        return source

    def transfer_wallet_to_bank(
        self,
        sender: str,
        recipient_bank_account: str,
        amount_minor: int,
        idempotency_key: Optional[str] = None,
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        sender_sub = self.registry.require_active(sender)
        require_positive(amount_minor)
        if not self.bank.validate_bank_account(recipient_bank_account)["valid"]:
            raise error("UNKNOWN_BANK_ACCOUNT")
        fee = self.fees.fee(TransactionKind.WALLET_TO_BANK, amount_minor)
        total = amount_minor + fee
        currency = self.ledger.currency
        wallet = AccountId.wallet(sender_sub.msisdn)
        mirror = self.ledger.ensure_account(AccountId.bank_mirror(recipient_bank_account))

        with self._locks.held(str(wallet), str(mirror)):
            if self.ledger.balance(wallet).amount_minor < total:
                raise error("NOT_SUFFICIENT_FUNDS")
            txn_id = self._next_txn_id()
            # EFT before append; compensate if the append is refused
            self.bank.eft("CREDIT", recipient_bank_account, amount_minor, f"{txn_id}/eft")
            postings = [
                LedgerPosting(wallet, -total, currency),
                LedgerPosting(mirror, amount_minor, currency),
            ] + self._fee_postings(fee)
            try:
                with self.ledger.exclusive():
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.WALLET_TO_BANK,
                        sender_sub.msisdn,
                        recipient_bank_account,
                        amount_minor,
                        fee,
                        entry_seq=self.ledger.last_seq() + 1,
                    )
                    self.ledger.append_entry(
                        EntryType.WALLET_TO_BANK,
                        postings,
                        {"txn": json.dumps(payload, sort_keys=True)},
                        idempotency_key,
                        txn_id,
                    )
            except EWalletError:
                self.bank.eft("DEBIT", recipient_bank_account, amount_minor, f"{txn_id}/undo")
                raise
            rendered = self._render(amount_minor)
            self.sms.send_sms(
                sender_sub.msisdn,
                f"Transaction successful. You sent {rendered} to bank account "
                f"{recipient_bank_account}.",
            )
            recipient_sub = self.registry.subscriber_for_bank_account(recipient_bank_account)
            if recipient_sub is not None:
                self.sms.send_sms(
                    recipient_sub.msisdn,
                    f"{rendered} was paid into your bank account {recipient_bank_account}.",
                )
            return self._remember(idempotency_key, payload)

    def transfer_bank_to_bank(
        self,
        sender: str,
        recipient_bank_account: str,
        amount_minor: int,
        idempotency_key: Optional[str] = None,
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        sender_sub = self.registry.require_active(sender)
        require_positive(amount_minor)
        if not sender_sub.bank_account:
            raise error("NO_LINKED_BANK_ACCOUNT")
        if not self.bank.validate_bank_account(recipient_bank_account)["valid"]:
            raise error("UNKNOWN_BANK_ACCOUNT")
        fee = self.fees.fee(TransactionKind.BANK_TO_BANK, amount_minor)
        total = amount_minor + fee
        currency = self.ledger.currency
        src_mirror = self.ledger.ensure_account(AccountId.bank_mirror(sender_sub.bank_account))
        dst_mirror = self.ledger.ensure_account(AccountId.bank_mirror(recipient_bank_account))

        with self._locks.held(str(src_mirror), str(dst_mirror)):
            txn_id = self._next_txn_id()
            self.bank.eft("DEBIT", sender_sub.bank_account, total, f"{txn_id}/debit")
            try:
                self.bank.eft("CREDIT", recipient_bank_account, amount_minor, f"{txn_id}/credit")
            except EWalletError:
                self.bank.eft("CREDIT", sender_sub.bank_account, total, f"{txn_id}/undo")
                raise
            postings = [
                LedgerPosting(src_mirror, -total, currency),
                LedgerPosting(dst_mirror, amount_minor, currency),
            ] + self._fee_postings(fee)
            try:
                with self.ledger.exclusive():
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.BANK_TO_BANK,
                        sender_sub.msisdn,
                        recipient_bank_account,
                        amount_minor,
                        fee,
                        entry_seq=self.ledger.last_seq() + 1,
                        source=FundingSource.BANK.value,
                    )
                    self.ledger.append_entry(
                        EntryType.BANK_TO_BANK,
                        postings,
                        {"txn": json.dumps(payload, sort_keys=True)},
                        idempotency_key,
                        txn_id,
                    )
            except EWalletError:
                self.bank.eft("DEBIT", recipient_bank_account, amount_minor, f"{txn_id}/undo-credit")
                self.bank.eft("CREDIT", sender_sub.bank_account, total, f"{txn_id}/undo-debit")
                raise
            rendered = self._render(amount_minor)
            self.sms.send_sms(
                sender_sub.msisdn,
                f"Transaction successful. You sent {rendered} from your bank account "
                f"to {recipient_bank_account}.",
            )
            recipient_sub = self.registry.subscriber_for_bank_account(recipient_bank_account)
            if recipient_sub is not None:
                self.sms.send_sms(
                    recipient_sub.msisdn,
                    f"{rendered} was paid into your bank account {recipient_bank_account}.",
                )
            return self._remember(idempotency_key, payload)

    def recharge(
        self, sender: str, amount_minor: int, idempotency_key: Optional[str] = None
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        sender_sub = self.registry.require_active(sender)
        require_positive(amount_minor)
        if not sender_sub.bank_account:
            raise error("NO_LINKED_BANK_ACCOUNT")
        fee = self.fees.fee(TransactionKind.RECHARGE, amount_minor)
        if fee >= amount_minor:
            raise error("AMOUNT_INVALID", "Amount does not cover the fee")
        currency = self.ledger.currency
        wallet = AccountId.wallet(sender_sub.msisdn)
        mirror = self.ledger.ensure_account(AccountId.bank_mirror(sender_sub.bank_account))

        with self._locks.held(str(wallet), str(mirror)):
            txn_id = self._next_txn_id()
            self.bank.eft("DEBIT", sender_sub.bank_account, amount_minor, f"{txn_id}/eft")
            postings = [
                LedgerPosting(mirror, -amount_minor, currency),
                LedgerPosting(wallet, amount_minor - fee, currency),
            ] + self._fee_postings(fee)
            try:
                with self.ledger.exclusive():
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.RECHARGE,
                        sender_sub.msisdn,
                        sender_sub.msisdn,
                        amount_minor,
                        fee,
                        entry_seq=self.ledger.last_seq() + 1,
                        source=FundingSource.BANK.value,
                    )
                    self.ledger.append_entry(
                        EntryType.RECHARGE,
                        postings,
                        {"txn": json.dumps(payload, sort_keys=True)},
                        idempotency_key,
                        txn_id,
                    )
            except EWalletError:
                self.bank.eft("CREDIT", sender_sub.bank_account, amount_minor, f"{txn_id}/undo")
                raise
            self.sms.send_sms(
                sender_sub.msisdn,
                f"Transaction successful. You recharged your eWallet with "
                f"{self._render(amount_minor - fee)}.",
            )
            return self._remember(idempotency_key, payload)

    def sweep_wallet_to_bank(self, msisdn: str, bank_account: str, amount_minor: int) -> dict:
        """Fee-exempt residue sweep used by de-registration."""
        sub = self.registry.require_subscriber(msisdn)
        wallet = AccountId.wallet(sub.msisdn)
        mirror = self.ledger.ensure_account(AccountId.bank_mirror(bank_account))
        currency = self.ledger.currency
        with self._locks.held(str(wallet), str(mirror)):
            txn_id = self._next_txn_id()
            self.bank.eft("CREDIT", bank_account, amount_minor, f"{txn_id}/sweep")
            try:
                with self.ledger.exclusive():
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.WALLET_TO_BANK,
                        sub.msisdn,
                        bank_account,
                        amount_minor,
                        0,
                        entry_seq=self.ledger.last_seq() + 1,
                    )
                    self.ledger.append_entry(
                        EntryType.WALLET_TO_BANK,
                        [
                            LedgerPosting(wallet, -amount_minor, currency),
                            LedgerPosting(mirror, amount_minor, currency),
                        ],
                        {"txn": json.dumps(payload, sort_keys=True), "reason": "deregistration"},
                        None,
                        txn_id,
                    )
            except EWalletError:
                self.bank.eft("DEBIT", bank_account, amount_minor, f"{txn_id}/undo")
                raise
            return payload

    # -- withdrawal holds and redemption ---------------------------------------------

    def request_withdrawal(
        self, holder: str, amount_minor: int, idempotency_key: Optional[str] = None
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        sub = self.registry.require_active(holder)
        require_positive(amount_minor)
        fee = self.fees.fee(TransactionKind.WITHDRAWAL, amount_minor)
        total = amount_minor + fee
        currency = self.ledger.currency
        wallet = AccountId.wallet(sub.msisdn)

        with self._locks.held(str(wallet), str(AccountId.suspense())):
            if self.ledger.balance(wallet).amount_minor < total:
                raise error("NOT_SUFFICIENT_FUNDS")
            txn_id = self._next_txn_id()
            with self.ledger.exclusive():
                entry_seq = self.ledger.last_seq() + 1
                code, clear = self._issue_code_record(
                    holder=sub.msisdn,
                    amount_minor=amount_minor,
                    refund_msisdn=sub.msisdn,
                    claim_tag=None,
                    hold_entry_seq=entry_seq,
                )
                payload = {
                    "txn_id": txn_id,
                    "kind": TransactionKind.WITHDRAWAL.value,
                    "state": TransactionState.NOTIFIED.value,
                    "holder": sub.msisdn,
                    "amount_minor": amount_minor,
                    "fee_minor": fee,
                    "currency": currency,
                    "code_id": code.code_id,
                    "expires_at": code.expires_at,
                    "entry_seq": entry_seq,
                }
                postings = [
                    LedgerPosting(wallet, -total, currency),
                    LedgerPosting(AccountId.suspense(), amount_minor, currency),
                ] + self._fee_postings(fee)
                self.ledger.append_entry(
                    EntryType.WITHDRAWAL_HOLD,
                    postings,
                    {
                        "txn": json.dumps(payload, sort_keys=True),
                        "code": json.dumps(code.as_record(), sort_keys=True),
                    },
                    idempotency_key,
                    txn_id,
                )
            with self._state:
                self._codes[code.code_id] = code
            self.sms.send_sms(
                sub.msisdn,
                f"Your eWallet access code is {clear}. It is worth "
                f"{self._render(amount_minor)} and can be used at any ATM or "
                f"participating store until {code.expires_at}.",
            )
            return self._remember(idempotency_key, payload)

    def redeem_at_atm(
        self,
        clear_code: str,
        msisdn: str,
        amount_minor: int,
        idempotency_key: Optional[str] = None,
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        require_positive(amount_minor)
        code = self._require_spendable_code(clear_code, msisdn)
        if amount_minor > code.remaining_minor:
            raise error("AMOUNT_EXCEEDS_REMAINING")
        currency = self.ledger.currency
        cash_pool = AccountId.bank_mirror(ATM_CASH_POOL)

        with self._locks.held(str(AccountId.suspense()), str(cash_pool)):
            txn_id = self._next_txn_id()
            try:
                with self.ledger.exclusive():
                    self._consume(code, amount_minor)
                    receipt = {
                        "txn_id": txn_id,
                        "code_id": code.code_id,
                        "holder": code.holder,
                        "redeemed_minor": amount_minor,
                        "remaining_minor": code.remaining_minor,
                        "currency": currency,
                        "state": code.state.value,
                        "entry_seq": self.ledger.last_seq() + 1,
                    }
                    self.ledger.append_entry(
                        EntryType.REDEMPTION,
                        [
                            LedgerPosting(AccountId.suspense(), -amount_minor, currency),
                            LedgerPosting(cash_pool, amount_minor, currency),
                        ],
                        {
                            "txn": json.dumps(receipt, sort_keys=True),
                            "code_update": json.dumps(code.update_record(), sort_keys=True),
                            "channel": "ATM",
                        },
                        idempotency_key,
                        txn_id,
                    )
            except EWalletError:
                self._unconsume(code, amount_minor)
                raise
            self.sms.send_sms(
                code.holder,
                f"You withdrew {self._render(amount_minor)} at the ATM. Remaining: "
                f"{self._render(code.remaining_minor)}.",
            )
            return self._remember(idempotency_key, receipt)

    def pay_merchant(
        self,
        buyer: str,
        seller_msisdn: str,
        amount_minor: int,
        clear_code: Optional[str] = None,
        idempotency_key: Optional[str] = None,
    ) -> dict:
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        require_positive(amount_minor)
        buyer = normalize_msisdn(buyer)
        seller_sub = self.registry.get(seller_msisdn)
        if seller_sub is None:
            raise error("UNKNOWN_MSISDN")
        self.registry.require_active(seller_sub.msisdn)
        fee = self.fees.fee(TransactionKind.MERCHANT_PAYMENT, amount_minor)
        currency = self.ledger.currency
        seller_wallet = AccountId.wallet(seller_sub.msisdn)

        if clear_code is not None:
            code = self._require_spendable_code(clear_code, buyer)
            if amount_minor > code.remaining_minor:
                raise error("AMOUNT_EXCEEDS_REMAINING")
            if fee >= amount_minor:
                raise error("AMOUNT_INVALID", "Amount does not cover the fee")
            with self._locks.held(str(AccountId.suspense()), str(seller_wallet)):
                txn_id = self._next_txn_id()
                try:
                    with self.ledger.exclusive():
                        self._consume(code, amount_minor)
                        payload = self._txn_payload(
                            txn_id,
                            TransactionKind.MERCHANT_PAYMENT,
                            buyer,
                            seller_sub.msisdn,
                            amount_minor,
                            fee,
                            entry_seq=self.ledger.last_seq() + 1,
                            source="ACCESS_CODE",
                        )
                        postings = [
                            LedgerPosting(AccountId.suspense(), -amount_minor, currency),
                            LedgerPosting(seller_wallet, amount_minor - fee, currency),
                        ] + self._fee_postings(fee)
                        self.ledger.append_entry(
                            EntryType.MERCHANT_PAYMENT,
                            postings,
                            {
                                "txn": json.dumps(payload, sort_keys=True),
                                "code_update": json.dumps(code.update_record(), sort_keys=True),
                            },
                            idempotency_key,
                            txn_id,
                        )
                except EWalletError:
                    self._unconsume(code, amount_minor)
                    raise
                received = amount_minor - fee
        else:
            buyer_sub = self.registry.require_active(buyer)
            buyer_wallet = AccountId.wallet(buyer_sub.msisdn)
            total = amount_minor + fee
            with self._locks.held(str(buyer_wallet), str(seller_wallet)):
                if self.ledger.balance(buyer_wallet).amount_minor < total:
                    raise error("NOT_SUFFICIENT_FUNDS")
                txn_id = self._next_txn_id()
                with self.ledger.exclusive():
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.MERCHANT_PAYMENT,
                        buyer,
                        seller_sub.msisdn,
                        amount_minor,
                        fee,
                        entry_seq=self.ledger.last_seq() + 1,
                    )
                    postings = [
                        LedgerPosting(buyer_wallet, -total, currency),
                        LedgerPosting(seller_wallet, amount_minor, currency),
                    ] + self._fee_postings(fee)
                    self.ledger.append_entry(
                        EntryType.MERCHANT_PAYMENT,
                        postings,
                        {"txn": json.dumps(payload, sort_keys=True)},
                        idempotency_key,
                        txn_id,
                    )
                received = amount_minor

        rendered = self._render(amount_minor)
        if self.telco.validate_msisdn(buyer)["valid"]:
            self.sms.send_sms(buyer, f"You paid {rendered} to {seller_sub.msisdn}.")
        self.sms.send_sms(
            seller_sub.msisdn,
            f"You received {self._render(received)} from {buyer}.",
        )
        return self._remember(idempotency_key, payload)

    def transfer_from_code(
        self,
        holder: str,
        target_kind: str,
        target: str,
        amount_minor: int,
        idempotency_key: Optional[str] = None,
    ) -> dict:
        """Spend a held code onward: to a bank account or to another msisdn.

        Consumes the holder's oldest live code.  No additional fee: the fee
        was charged when the funds entered the suspense account.
        """
        prior = self._replay(idempotency_key)
        if prior is not None:
            return prior
        require_positive(amount_minor)
        holder = normalize_msisdn(holder)
        codes = self.live_codes_for(holder)
        if not codes:
            raise error("CODE_UNKNOWN")
        code = codes[0]
        if self.clock() > datetime.fromisoformat(code.expires_at):
            self._expire_code(code)
            raise error("CODE_EXPIRED")
        if amount_minor > code.remaining_minor:
            raise error("AMOUNT_EXCEEDS_REMAINING")
        currency = self.ledger.currency

        meta: dict[str, str] = {"funding": "ACCESS_CODE"}
        new_code = clear = None
        if target_kind == "BANK":
            if not self.bank.validate_bank_account(target)["valid"]:
                raise error("UNKNOWN_BANK_ACCOUNT")
            counter = self.ledger.ensure_account(AccountId.bank_mirror(target))
        else:
            target = normalize_msisdn(target)
            if not self.telco.validate_msisdn(target)["valid"]:
                raise error("UNKNOWN_MSISDN")
            if self.registry.is_active(target):
                counter = AccountId.wallet(target)
            else:
                counter = AccountId.suspense()

        with self._locks.held(str(AccountId.suspense()), str(counter)):
            txn_id = self._next_txn_id()
            if target_kind == "BANK":
                self.bank.eft("CREDIT", target, amount_minor, f"{txn_id}/eft")
            try:
                with self.ledger.exclusive():
                    entry_seq = self.ledger.last_seq() + 1
                    self._consume(code, amount_minor)
                    meta["code_update"] = json.dumps(code.update_record(), sort_keys=True)
                    if target_kind != "BANK" and counter.kind is AccountKind.SUSPENSE:
                        # expiry refunds must land in a real wallet: fall back
                        # to the consumed code's refund target when the
                        # forwarding holder has no account of their own
                        refund_to = (
                            holder if self.registry.is_active(holder) else code.refund_msisdn
                        )
                        new_code, clear = self._issue_code_record(
                            holder=target,
                            amount_minor=amount_minor,
                            refund_msisdn=refund_to,
                            claim_tag=target,
                            hold_entry_seq=entry_seq,
                        )
                        meta["code"] = json.dumps(new_code.as_record(), sort_keys=True)
                    payload = self._txn_payload(
                        txn_id,
                        TransactionKind.P2P
                        if target_kind != "BANK"
                        else TransactionKind.WALLET_TO_BANK,
                        holder,
                        target,
                        amount_minor,
                        0,
                        entry_seq=entry_seq,
                        source="ACCESS_CODE",
                        access_code_issued=new_code is not None,
                    )
                    meta["txn"] = json.dumps(payload, sort_keys=True)
                    postings = [
                        LedgerPosting(AccountId.suspense(), -amount_minor, currency),
                        LedgerPosting(counter, amount_minor, currency),
                    ]
                    self.ledger.append_entry(
                        EntryType.REDEMPTION, postings, meta, idempotency_key, txn_id
                    )
            except EWalletError:
                self._unconsume(code, amount_minor)
                if target_kind == "BANK":
                    self.bank.eft("DEBIT", target, amount_minor, f"{txn_id}/undo")
                raise
            if new_code is not None:
                with self._state:
                    self._codes[new_code.code_id] = new_code

            rendered = self._render(amount_minor)
            self.sms.send_sms(holder, f"Transaction successful. You sent {rendered} to {target}.")
            if target_kind != "BANK":
                if new_code is None:
                    self.sms.send_sms(target, f"You have an incoming {rendered}")
                else:
                    self.sms.send_sms(
                        target,
                        f"You have an incoming {rendered}. Your access code is {clear}. "
                        f"To retrieve the money, dial {self.service_code} or use the code "
                        f"at any ATM or participating store.",
                    )
            return self._remember(idempotency_key, payload)

    def save_codes_to_wallet(self, msisdn: str) -> int:
        """Cancel the holder's live codes and refund them into the wallet."""
        msisdn = normalize_msisdn(msisdn)
        self.registry.require_active(msisdn)
        total = 0
        for code in self.live_codes_for(msisdn):
            total += self._refund_code(code, CodeState.CANCELLED, AccountId.wallet(msisdn))
        if total:
            self.sms.send_sms(
                msisdn,
                f"{self._render(total)} was saved into your eWallet account.",
            )
        return total

    def claim_parked_funds(self, msisdn: str) -> int:
        """Credit funds parked for this msisdn before it was registered."""
        msisdn = normalize_msisdn(msisdn)
        wallet = AccountId.wallet(msisdn)
        total = 0
        with self._state:
            claimable = [
                c
                for c in self._codes.values()
                if c.claim_tag == msisdn and c.state in LIVE_CODE_STATES
            ]
        for code in sorted(claimable, key=lambda c: c.code_id):
            amount = code.remaining_minor
            currency = self.ledger.currency
            with self._locks.held(str(AccountId.suspense()), str(wallet)):
                txn_id = self._next_txn_id()
                code.remaining_minor = 0
                code.redeemed_minor += amount
                code.state = CodeState.REDEEMED
                self.ledger.append_entry(
                    EntryType.REDEMPTION,
                    [
                        LedgerPosting(AccountId.suspense(), -amount, currency),
                        LedgerPosting(wallet, amount, currency),
                    ],
                    {
                        "code_update": json.dumps(code.update_record(), sort_keys=True),
                        "reason": "claimed_on_registration",
                    },
                    None,
                    txn_id,
                )
            total += amount
        if total:
            self.sms.send_sms(
                msisdn, f"{self._render(total)} is now available in your eWallet."
            )
        return total

    def _refund_code(self, code: AccessCode, final_state: CodeState, refund_to: AccountId) -> int:
        amount = code.remaining_minor
        currency = self.ledger.currency
        with self._locks.held(str(AccountId.suspense()), str(refund_to)):
            code.remaining_minor = 0
            code.refunded_minor += amount
            code.state = final_state
            self.ledger.append_entry(
                EntryType.REVERSAL,
                [
                    LedgerPosting(AccountId.suspense(), -amount, currency),
                    LedgerPosting(refund_to, amount, currency),
                ],
                {
                    "code_update": json.dumps(code.update_record(), sort_keys=True),
                    "reason": "expiry" if final_state is CodeState.EXPIRED else "cancelled",
                },
            )
        return amount

    def _expire_code(self, code: AccessCode) -> int:
        refund_wallet = self.ledger.ensure_account(AccountId.wallet(code.refund_msisdn))
        amount = self._refund_code(code, CodeState.EXPIRED, refund_wallet)
        if self.telco.validate_msisdn(code.refund_msisdn)["valid"]:
            self.sms.send_sms(
                code.refund_msisdn,
                f"An access code expired unused. {self._render(amount)} was returned "
                f"to your eWallet.",
            )
        return amount

    def expire_codes(self, now: Optional[datetime] = None) -> int:
        now = now or self.clock()
        expired = 0
        with self._state:
            candidates = [
                c
                for c in self._codes.values()
                if c.state in LIVE_CODE_STATES
                and now > datetime.fromisoformat(c.expires_at)
            ]
        for code in sorted(candidates, key=lambda c: c.code_id):
            self._expire_code(code)
            expired += 1
        return expired

    # -- reads -----------------------------------------------------------------

    def check_balance(self, holder: str) -> Money:
        sub = self.registry.require_active(holder)
        return self.ledger.balance(AccountId.wallet(sub.msisdn))

    def suspense_matches_codes(self) -> bool:
        """Σ suspense == Σ remaining over live codes; checked by fuzz tests."""
        live_total = sum(
            c.remaining_minor for c in self._codes.values() if c.state in LIVE_CODE_STATES
        )
        return self.ledger.balance(AccountId.suspense()).amount_minor == live_total
