"""Append-only double-entry journal and account registry.

The journal file is the single source of truth: one JSON record per line,
fields {"seq","ts","txn_id","type","postings","meta"}.  Balances are a cache
rebuilt by replaying the file.  Every money-moving entry's postings sum to
zero; audit entries (type REGISTRATION_MARKER) carry no postings and exist so
subscriber state replays from the same stream as the money.

Appends serialize through one lock and assign a gapless, strictly increasing
sequence number.  Replays of an idempotency key return the original entry;
the same key with a different payload is rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Optional

from .errors import error
from .money import Money


class AccountKind(str, Enum):
    WALLET = "WALLET"
    BANK_MIRROR = "BANK_MIRROR"
    SUSPENSE = "SUSPENSE"
    FEE_INCOME = "FEE_INCOME"


# Singleton account keys.  Exactly one SUSPENSE and one FEE_INCOME account
# exist per deployment; the ATM cash pool is the bank-mirror leg that keeps
# cash withdrawals double-entry balanced.
SUSPENSE_KEY = "MAIN"
FEE_INCOME_KEY = "MAIN"
ATM_CASH_POOL = "ATM-CASH-POOL"


@dataclass(frozen=True)
class AccountId:
    kind: AccountKind
    key: str

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.key}"

    @staticmethod
    def parse(text: str) -> "AccountId":
        kind, sep, key = text.partition(":")
        if not sep or kind not in AccountKind.__members__:
            raise error("UNKNOWN_ACCOUNT", f"Malformed account id {text!r}")
        return AccountId(AccountKind(kind), key)

    @staticmethod
    def wallet(msisdn: str) -> "AccountId":
        return AccountId(AccountKind.WALLET, msisdn)

    @staticmethod
    def bank_mirror(account_number: str) -> "AccountId":
        return AccountId(AccountKind.BANK_MIRROR, account_number)

    @staticmethod
    def suspense() -> "AccountId":
        return AccountId(AccountKind.SUSPENSE, SUSPENSE_KEY)

    @staticmethod
    def fee_income() -> "AccountId":
        return AccountId(AccountKind.FEE_INCOME, FEE_INCOME_KEY)


# WALLET and SUSPENSE may never go negative.  BANK_MIRROR shadows an external
# account whose funds check belongs to the bank adapter; FEE_INCOME only
# receives but is left unprotected for symmetry with reversals.
PROTECTED_KINDS = {AccountKind.WALLET, AccountKind.SUSPENSE}


class EntryType(str, Enum):
    P2P = "P2P"
    WALLET_TO_BANK = "WALLET_TO_BANK"
    BANK_TO_BANK = "BANK_TO_BANK"
    RECHARGE = "RECHARGE"
    WITHDRAWAL_HOLD = "WITHDRAWAL_HOLD"
    REDEMPTION = "REDEMPTION"
    MERCHANT_PAYMENT = "MERCHANT_PAYMENT"
    FEE = "FEE"
    REVERSAL = "REVERSAL"
    REGISTRATION_MARKER = "REGISTRATION_MARKER"


# Audit entries carry meta only; all other types move money and need >= 2
# balanced postings.
AUDIT_TYPES = {EntryType.REGISTRATION_MARKER}


@dataclass(frozen=True)
class LedgerPosting:
    account: AccountId
    delta_minor: int
    currency: str

    def as_record(self) -> dict:
        return {
            "account": str(self.account),
            "delta_minor": self.delta_minor,
            "currency": self.currency,
        }


@dataclass(frozen=True)
class JournalEntry:
    seq: int
    ts: str
    txn_id: str
    entry_type: EntryType
    postings: tuple[LedgerPosting, ...]
    meta: dict[str, str]

    def as_record(self) -> dict:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "txn_id": self.txn_id,
            "type": self.entry_type.value,
            "postings": [p.as_record() for p in self.postings],
            "meta": dict(self.meta),
        }


class JournalCorrupt(Exception):
    """A persisted line failed schema or conservation checks."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"journal line {line_no}: {reason}")


def _payload_fingerprint(entry_type: EntryType, postings: Iterable[LedgerPosting]) -> str:
    blob = json.dumps(
        [entry_type.value] + [p.as_record() for p in postings],
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _validate_record_shape(record: dict, line_no: int) -> None:
    expected = {"seq", "ts", "txn_id", "type", "postings", "meta"}
    if set(record) != expected:
        raise JournalCorrupt(line_no, f"fields {sorted(record)} != {sorted(expected)}")
    if record["type"] not in EntryType.__members__:
        raise JournalCorrupt(line_no, f"unknown entry type {record['type']!r}")
    if not isinstance(record["postings"], list):
        raise JournalCorrupt(line_no, "postings is not a list")
    for p in record["postings"]:
        if set(p) != {"account", "delta_minor", "currency"}:
            raise JournalCorrupt(line_no, f"bad posting fields {sorted(p)}")
        if not isinstance(p["delta_minor"], int) or p["delta_minor"] == 0:
            raise JournalCorrupt(line_no, "posting delta must be a nonzero integer")
    if sum(p["delta_minor"] for p in record["postings"]) != 0:
        raise JournalCorrupt(line_no, "postings do not sum to zero")
    if record["type"] not in {t.value for t in AUDIT_TYPES} and len(record["postings"]) < 2:
        raise JournalCorrupt(line_no, "money entry needs at least two postings")
    if not isinstance(record["meta"], dict):
        raise JournalCorrupt(line_no, "meta is not an object")


class Ledger:
    """Accounts, balances and the durable journal behind them."""

    def __init__(
        self,
        journal_path: str | Path,
        currency: str = "ZAR",
        fsync_on_append: bool = False,
        clock: Callable[[], datetime] | None = None,
    ):
        self.journal_path = Path(journal_path)
        self.currency = currency
        self.fsync_on_append = fsync_on_append
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self._lock = threading.RLock()
        self._balances: dict[AccountId, int] = {}
        self._entries: list[JournalEntry] = []
        self._by_key: dict[str, JournalEntry] = {}
        self._fingerprints: dict[str, str] = {}
        self._txn_ids: set[str] = set()
        self._next_seq = 1
        self.journal_path.parent.mkdir(parents=True, exist_ok=True)
        self._replay_file()
        self._bootstrap_singletons()

    # -- startup -----------------------------------------------------------

    def _replay_file(self) -> None:
        if not self.journal_path.exists():
            return
        with self.journal_path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    raise JournalCorrupt(line_no, "blank line")
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise JournalCorrupt(line_no, f"not JSON: {exc}") from exc
                _validate_record_shape(record, line_no)
                if record["seq"] != self._next_seq:
                    raise JournalCorrupt(
                        line_no, f"seq {record['seq']} breaks gapless order"
                    )
                postings = tuple(
                    LedgerPosting(AccountId.parse(p["account"]), p["delta_minor"], p["currency"])
                    for p in record["postings"]
                )
                entry = JournalEntry(
                    seq=record["seq"],
                    ts=record["ts"],
                    txn_id=record["txn_id"],
                    entry_type=EntryType(record["type"]),
                    postings=postings,
                    meta={str(k): str(v) for k, v in record["meta"].items()},
                )
                # replay trusts the journal: accounts it mentions exist
                for p in postings:
                    self._balances.setdefault(p.account, 0)
                    self._balances[p.account] += p.delta_minor
                for p in postings:
                    if p.account.kind in PROTECTED_KINDS and self._balances[p.account] < 0:
                        raise JournalCorrupt(
                            line_no, f"{p.account} driven negative on replay"
                        )
                self._register_entry(entry)
                self._next_seq += 1

    def _bootstrap_singletons(self) -> None:
        for acct in (
            AccountId.suspense(),
            AccountId.fee_income(),
            AccountId.bank_mirror(ATM_CASH_POOL),
        ):
            self._balances.setdefault(acct, 0)

    def _register_entry(self, entry: JournalEntry) -> None:
        self._entries.append(entry)
        self._txn_ids.add(entry.txn_id)
        key = entry.meta.get("idempotency_key")
        if key:
            self._by_key[key] = entry
            self._fingerprints[key] = _payload_fingerprint(entry.entry_type, entry.postings)

    # -- accounts ----------------------------------------------------------

    def exclusive(self):
        """Hold the journal lock across a read-then-append critical section.

        The lock is reentrant, so append_entry may be called while held; use
        this when a caller must predict the next seq for an entry's own meta.
        """
        return self._lock

    def open_account(self, account: AccountId) -> AccountId:
        with self._lock:
            if account in self._balances:
                raise error("DUPLICATE_ACCOUNT", f"{account} already open")
            self._balances[account] = 0
            return account

    def ensure_account(self, account: AccountId) -> AccountId:
        """Open if absent; used for lazily materialized bank mirrors."""
        with self._lock:
            self._balances.setdefault(account, 0)
            return account

    def account_exists(self, account: AccountId) -> bool:
        return account in self._balances

    # -- journal -----------------------------------------------------------

    def append_entry(
        self,
        entry_type: EntryType,
        postings: list[LedgerPosting],
        meta: dict[str, str],
        idempotency_key: Optional[str] = None,
        txn_id: Optional[str] = None,
    ) -> JournalEntry:
        with self._lock:
            if idempotency_key is not None:
                prior = self._by_key.get(idempotency_key)
                if prior is not None:
                    if self._fingerprints[idempotency_key] != _payload_fingerprint(
                        entry_type, postings
                    ):
                        raise error("IDEMPOTENCY_CONFLICT")
                    return prior

            if entry_type in AUDIT_TYPES:
                if postings:
                    raise error("UNBALANCED_ENTRY", "Audit entries carry no postings")
            else:
                if len(postings) < 2:
                    raise error("UNBALANCED_ENTRY", "At least two postings required")
                if any(p.delta_minor == 0 for p in postings):
                    raise error("UNBALANCED_ENTRY", "Zero-delta posting")
                if sum(p.delta_minor for p in postings) != 0:
                    raise error("UNBALANCED_ENTRY")
                for p in postings:
                    if p.currency != self.currency:
                        raise error("CURRENCY_MISMATCH")
                    if p.account not in self._balances:
                        raise error("UNKNOWN_ACCOUNT", f"{p.account} is not open")
                # no protected account may end up negative
                net: dict[AccountId, int] = {}
                for p in postings:
                    net[p.account] = net.get(p.account, 0) + p.delta_minor
                for acct, delta in net.items():
                    if acct.kind in PROTECTED_KINDS and self._balances[acct] + delta < 0:
                        raise error("NOT_SUFFICIENT_FUNDS")

            meta = {str(k): str(v) for k, v in meta.items()}
            if idempotency_key is not None:
                meta["idempotency_key"] = idempotency_key
            txn_id = txn_id or f"TX-{self._next_seq:08d}"
            if txn_id in self._txn_ids:
                raise error("IDEMPOTENCY_CONFLICT", f"txn_id {txn_id} already journaled")
            entry = JournalEntry(
                seq=self._next_seq,
                ts=self.clock().isoformat(),
                txn_id=txn_id,
                entry_type=entry_type,
                postings=tuple(postings),
                meta=meta,
            )
            self._write_line(entry)
            for p in entry.postings:
                self._balances[p.account] += p.delta_minor
            self._register_entry(entry)
            self._next_seq += 1
            return entry

    def _write_line(self, entry: JournalEntry) -> None:
        line = json.dumps(entry.as_record(), separators=(",", ":"), ensure_ascii=False)
        with self.journal_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            if self.fsync_on_append:
                os.fsync(fh.fileno())

    # -- reads -------------------------------------------------------------

    def balance(self, account: AccountId) -> Money:
        with self._lock:
            if account not in self._balances:
                raise error("UNKNOWN_ACCOUNT", f"{account} is not open")
            return Money(self._balances[account], self.currency)

    def statement(
        self, account: AccountId, from_seq: int = 1, to_seq: Optional[int] = None
    ) -> list[JournalEntry]:
        with self._lock:
            if account not in self._balances:
                raise error("UNKNOWN_ACCOUNT", f"{account} is not open")
            if to_seq is None:
                to_seq = self._next_seq - 1
            if from_seq > to_seq:
                raise error("BAD_REQUEST", "from_seq must not exceed to_seq")
            return [
                e
                for e in self._entries
                if from_seq <= e.seq <= to_seq
                and any(p.account == account for p in e.postings)
            ]

    def entries(self) -> list[JournalEntry]:
        with self._lock:
            return list(self._entries)

    def all_balances(self) -> dict[str, int]:
        with self._lock:
            return {str(a): v for a, v in self._balances.items()}

    def last_seq(self) -> int:
        return self._next_seq - 1

    def entry_for_key(self, idempotency_key: str) -> Optional[JournalEntry]:
        return self._by_key.get(idempotency_key)
