"""Session-scoped USSD menu state machine.

Dialing the service code opens a session; every screen prompts one input and
(node, collected, input) fully determines the next screen.  Screen texts are
the contract the golden-transcript tests pin down, so they live here as
constants.  Money only ever moves on a CONFIRM screen, through the engine,
with the session's msisdn as principal.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Callable, Optional

from .adapters import normalize_msisdn
from .engine import FundingSource, TransactionEngine, TransactionKind
from .errors import EWalletError, error
from .ledger import AccountId
from .money import parse_major
from .registry import Channel, SubscriberStatus, verify_secret


class Node(str, Enum):
    ROOT = "ROOT"
    PIN_PROMPT = "PIN_PROMPT"
    TRANSFER_TARGET = "TRANSFER_TARGET"
    SOURCE_SELECT = "SOURCE_SELECT"
    RECIPIENT_MSISDN = "RECIPIENT_MSISDN"
    RECIPIENT_BANK = "RECIPIENT_BANK"
    AMOUNT = "AMOUNT"
    CONFIRM = "CONFIRM"
    INCOMING_FUNDS = "INCOMING_FUNDS"
    CHANGE_PIN_OLD = "CHANGE_PIN_OLD"
    CHANGE_PIN_NEW = "CHANGE_PIN_NEW"
    RESULT = "RESULT"
    ENDED = "ENDED"


ROOT_TEXT = "1. Transfer money\n2. Withdraw money\n3. Change pin number\n4. Check your balance"
PIN_PROMPT_TEXT = "Enter your secret pin"
TRANSFER_TARGET_TEXT = "1. Transfer money to your eWallet\n2. Transfer money to someone else"
SOURCE_SELECT_TEXT = "1. Bank account\n2. eWallet account"
RECIPIENT_MSISDN_TEXT = "Enter recipient cellphone number"
RECIPIENT_BANK_TEXT = "Enter recipient bank account number"
AMOUNT_TEXT = "Enter amount"
CHANGE_PIN_OLD_TEXT = "Enter your current pin"
CHANGE_PIN_NEW_TEXT = "Enter your new pin"
SUCCESS_TEXT = "transaction successful"
CANCELLED_TEXT = "Transaction cancelled"
SESSION_ENDED_TEXT = "Session ended"
ATM_INFO_TEXT = "Use the access code sent to you by SMS to withdraw at any ATM."
REGISTER_INFO_TEXT = (
    "You are not registered with eWallet. Sign up on the web portal to open an account."
)
CREATE_ACCOUNT_INFO_TEXT = (
    "Sign up on the eWallet web portal to create your account. "
    "Your incoming money will be credited as soon as you register."
)


def incoming_text(rendered_amount: str, registered: bool) -> str:
    second = (
        "2. Save it into your account"
        if registered
        else "2. Create an account to save your money"
    )
    return f"You have an incoming {rendered_amount}\n1. Withdraw the money\n{second}"


def receiver_menu_text(registered: bool) -> str:
    lines = [
        "1. Withdraw at ATM",
        "2. Transfer money to a bank account",
        "3. Transfer money to someone else",
    ]
    if registered:
        lines.append("4. Main menu")
    return "\n".join(lines)


@dataclass
class Screen:
    text: str
    terminal: bool = False


@dataclass
class UssdSession:
    session_id: str
    msisdn: str
    node: Node
    collected: dict = field(default_factory=dict)
    authenticated: bool = False
    expires_at: datetime = None
    invalid_count: int = 0
    step_counter: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class UssdMenuEngine:
    def __init__(
        self,
        engine: TransactionEngine,
        service_code: str = "#555*",
        session_ttl_seconds: int = 120,
        invalid_retry_limit: int = 3,
        clock: Callable[[], datetime] | None = None,
    ):
        self.engine = engine
        self.registry = engine.registry
        self.telco = engine.telco
        self.ledger = engine.ledger
        self.service_code = service_code
        self.session_ttl = timedelta(seconds=session_ttl_seconds)
        self.invalid_retry_limit = invalid_retry_limit
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self._sessions: dict[str, UssdSession] = {}
        self._guard = threading.Lock()

    # -- session lifecycle -------------------------------------------------------

    def begin_session(self, session_id: str, msisdn: str, dial_string: str) -> Screen:
        if dial_string.strip() != self.service_code:
            raise error("WRONG_SERVICE_CODE")
        msisdn = normalize_msisdn(msisdn)
        if not self.telco.validate_msisdn(msisdn)["valid"]:
            raise error("UNKNOWN_MSISDN")
        session = UssdSession(
            session_id=session_id,
            msisdn=msisdn,
            node=Node.PIN_PROMPT,
            expires_at=self.clock() + self.session_ttl,
        )
        sub = self.registry.get(msisdn)
        registered = sub is not None and sub.status is not SubscriberStatus.CLOSED
        if not registered:
            incoming = self.engine.incoming_total(msisdn)
            if incoming > 0:
                # possession of the SIM is the authentication for parked funds
                session.authenticated = True
                session.node = Node.INCOMING_FUNDS
                session.collected["stage"] = "offer"
                session.collected["registered"] = "no"
                screen = Screen(incoming_text(self.engine._render(incoming), registered=False))
            else:
                session.node = Node.ENDED
                screen = Screen(REGISTER_INFO_TEXT, terminal=True)
        else:
            screen = Screen(PIN_PROMPT_TEXT)
        with self._guard:
            self._sessions[session_id] = session
        return screen

    def get_session(self, session_id: str) -> Optional[UssdSession]:
        with self._guard:
            return self._sessions.get(session_id)

    def expire_sessions(self, now: Optional[datetime] = None) -> int:
        now = now or self.clock()
        count = 0
        with self._guard:
            sessions = list(self._sessions.values())
        for session in sessions:
            with session.lock:
                if session.node is not Node.ENDED and now > session.expires_at:
                    session.node = Node.ENDED
                    count += 1
        return count

    # -- stepping ------------------------------------------------------------------

    def step(self, session_id: str, user_input: str) -> Screen:
        session = self.get_session(session_id)
        if session is None:
            raise error("SESSION_EXPIRED")
        with session.lock:
            now = self.clock()
            if session.node is Node.ENDED:
                raise error("SESSION_EXPIRED")
            if now > session.expires_at:
                session.node = Node.ENDED
                raise error("SESSION_EXPIRED")
            session.expires_at = now + self.session_ttl
            session.step_counter += 1
            text = (user_input or "").strip()
            if not text:
                return self._invalid(session)
            screen = self._dispatch(session, text)
            if screen.terminal:
                session.node = Node.ENDED
            return screen

    def _dispatch(self, session: UssdSession, text: str) -> Screen:
        handler = {
            Node.PIN_PROMPT: self._on_pin,
            Node.ROOT: self._on_root,
            Node.TRANSFER_TARGET: self._on_transfer_target,
            Node.RECIPIENT_MSISDN: self._on_recipient_msisdn,
            Node.RECIPIENT_BANK: self._on_recipient_bank,
            Node.AMOUNT: self._on_amount,
            Node.SOURCE_SELECT: self._on_source_select,
            Node.CONFIRM: self._on_confirm,
            Node.INCOMING_FUNDS: self._on_incoming,
            Node.CHANGE_PIN_OLD: self._on_change_pin_old,
            Node.CHANGE_PIN_NEW: self._on_change_pin_new,
        }[session.node]
        return handler(session, text)

    # -- helpers --------------------------------------------------------------------

    def _invalid(self, session: UssdSession, current_text: str | None = None) -> Screen:
        session.invalid_count += 1
        if session.invalid_count >= self.invalid_retry_limit:
            session.node = Node.ENDED
            return Screen(SESSION_ENDED_TEXT, terminal=True)
        body = current_text if current_text is not None else self._render_node(session)
        return Screen(f"Invalid selection\n{body}")

    def _render_node(self, session: UssdSession) -> str:
        if session.node is Node.PIN_PROMPT:
            return PIN_PROMPT_TEXT
        if session.node is Node.ROOT:
            return ROOT_TEXT
        if session.node is Node.TRANSFER_TARGET:
            return TRANSFER_TARGET_TEXT
        if session.node is Node.SOURCE_SELECT:
            return SOURCE_SELECT_TEXT
        if session.node is Node.RECIPIENT_MSISDN:
            return RECIPIENT_MSISDN_TEXT
        if session.node is Node.RECIPIENT_BANK:
            return RECIPIENT_BANK_TEXT
        if session.node is Node.AMOUNT:
            return AMOUNT_TEXT
        if session.node is Node.CHANGE_PIN_OLD:
            return CHANGE_PIN_OLD_TEXT
        if session.node is Node.CHANGE_PIN_NEW:
            return CHANGE_PIN_NEW_TEXT
        if session.node is Node.CONFIRM:
            return session.collected.get("confirm_text", "1. Confirm\n2. Cancel")
        if session.node is Node.INCOMING_FUNDS:
            registered = session.collected.get("registered") == "yes"
            if session.collected.get("stage") == "menu":
                return receiver_menu_text(registered)
            incoming = self.engine.incoming_total(session.msisdn)
            return incoming_text(self.engine._render(incoming), registered)
        return SESSION_ENDED_TEXT

    def _fail(self, session: UssdSession, exc: EWalletError) -> Screen:
        session.node = Node.ENDED
        return Screen(exc.message, terminal=True)

    def _own_idempotency_key(self, session: UssdSession) -> str:
        return f"ussd:{session.session_id}:{session.step_counter}"

    # -- node handlers -----------------------------------------------------------------

    def _on_pin(self, session: UssdSession, text: str) -> Screen:
        try:
            self.registry.login(Channel.USSD, session.msisdn, text)
        except EWalletError as exc:
            if exc.code == "INVALID_LOGIN":
                return Screen(f"{exc.message}\n{PIN_PROMPT_TEXT}")
            return self._fail(session, exc)
        session.authenticated = True
        incoming = self.engine.incoming_total(session.msisdn)
        if incoming > 0:
            session.node = Node.INCOMING_FUNDS
            session.collected["stage"] = "offer"
            session.collected["registered"] = "yes"
            return Screen(incoming_text(self.engine._render(incoming), registered=True))
        session.node = Node.ROOT
        return Screen(ROOT_TEXT)

    def _on_root(self, session: UssdSession, text: str) -> Screen:
        if text == "1":
            session.node = Node.TRANSFER_TARGET
            return Screen(TRANSFER_TARGET_TEXT)
        if text == "2":
            session.collected["flow"] = "withdraw"
            session.node = Node.AMOUNT
            return Screen(AMOUNT_TEXT)
        if text == "3":
            session.collected["flow"] = "change_pin"
            session.node = Node.CHANGE_PIN_OLD
            return Screen(CHANGE_PIN_OLD_TEXT)
        if text == "4":
            try:
                balance = self.engine.check_balance(session.msisdn)
            except EWalletError as exc:
                return self._fail(session, exc)
            return Screen(f"Your eWallet balance is {balance.render()}", terminal=True)
        return self._invalid(session)

    def _on_transfer_target(self, session: UssdSession, text: str) -> Screen:
        if text == "1":
            sub = self.registry.get(session.msisdn)
            if not sub or not sub.bank_account:
                session.node = Node.ENDED
                return Screen("No bank account is linked to this wallet", terminal=True)
            session.collected["flow"] = "recharge"
            session.node = Node.AMOUNT
            return Screen(AMOUNT_TEXT)
        if text == "2":
            session.collected["flow"] = "p2p"
            session.node = Node.RECIPIENT_MSISDN
            return Screen(RECIPIENT_MSISDN_TEXT)
        return self._invalid(session)

    def _on_recipient_msisdn(self, session: UssdSession, text: str) -> Screen:
        recipient = normalize_msisdn(text)
        if not self.telco.validate_msisdn(recipient)["valid"]:
            return self._invalid(session, RECIPIENT_MSISDN_TEXT)
        session.collected["recipient"] = recipient
        session.node = Node.AMOUNT
        return Screen(AMOUNT_TEXT)

    def _on_recipient_bank(self, session: UssdSession, text: str) -> Screen:
        account = text.strip()
        if not self.engine.bank.validate_bank_account(account)["valid"]:
            return self._invalid(session, RECIPIENT_BANK_TEXT)
        session.collected["recipient_bank"] = account
        session.node = Node.AMOUNT
        return Screen(AMOUNT_TEXT)

    def _on_amount(self, session: UssdSession, text: str) -> Screen:
        try:
            amount = parse_major(text, self.ledger.currency)
            if amount.amount_minor <= 0:
                raise error("AMOUNT_INVALID")
        except EWalletError:
            return self._invalid(session, AMOUNT_TEXT)
        session.collected["amount_minor"] = str(amount.amount_minor)
        flow = session.collected["flow"]
        rendered = amount.render()

        if flow == "p2p":
            # enough wallet funds: let the sender choose the source; otherwise
            # the amount comes out of the linked bank account
            sub = self.registry.get(session.msisdn)
            fee = self.engine.fees.fee(TransactionKind.P2P, amount.amount_minor)
            wallet_balance = self.ledger.balance(AccountId.wallet(session.msisdn)).amount_minor
            if wallet_balance >= amount.amount_minor + fee:
                session.node = Node.SOURCE_SELECT
                return Screen(SOURCE_SELECT_TEXT)
            if sub and sub.bank_account:
                session.collected["source"] = FundingSource.BANK.value
                return self._to_confirm(
                    session, f"Send {rendered} to {session.collected['recipient']}?"
                )
            session.node = Node.ENDED
            return Screen("Not sufficient funds", terminal=True)
        if flow == "recharge":
            return self._to_confirm(session, f"Recharge {rendered} from your bank account?")
        if flow == "withdraw":
            return self._to_confirm(session, f"Withdraw {rendered}?")
        if flow == "code_to_bank":
            return self._to_confirm(
                session,
                f"Send {rendered} to bank account {session.collected['recipient_bank']}?",
            )
        if flow == "code_to_msisdn":
            return self._to_confirm(
                session, f"Send {rendered} to {session.collected['recipient']}?"
            )
        return self._invalid(session)

    def _to_confirm(self, session: UssdSession, question: str) -> Screen:
        session.node = Node.CONFIRM
        text = f"{question}\n1. Confirm\n2. Cancel"
        session.collected["confirm_text"] = text
        return Screen(text)

    def _on_source_select(self, session: UssdSession, text: str) -> Screen:
        if text == "1":
            sub = self.registry.get(session.msisdn)
            if not sub or not sub.bank_account:
                session.node = Node.ENDED
                return Screen("No bank account is linked to this wallet", terminal=True)
            session.collected["source"] = FundingSource.BANK.value
        elif text == "2":
            session.collected["source"] = FundingSource.WALLET.value
        else:
            return self._invalid(session)
        amount = int(session.collected["amount_minor"])
        rendered = self.engine._render(amount)
        return self._to_confirm(session, f"Send {rendered} to {session.collected['recipient']}?")

    def _on_confirm(self, session: UssdSession, text: str) -> Screen:
        if text == "2":
            session.node = Node.ENDED
            return Screen(CANCELLED_TEXT, terminal=True)
        if text != "1":
            return self._invalid(session, session.collected.get("confirm_text", ""))
        flow = session.collected["flow"]
        amount = int(session.collected["amount_minor"])
        key = self._own_idempotency_key(session)
        try:
            if flow == "p2p":
                self.engine.transfer_wallet_to_wallet(
                    session.msisdn,
                    session.collected["recipient"],
                    amount,
                    idempotency_key=key,
                    source=session.collected.get("source", FundingSource.WALLET.value),
                )
            elif flow == "recharge":
                self.engine.recharge(session.msisdn, amount, idempotency_key=key)
            elif flow == "withdraw":
                self.engine.request_withdrawal(session.msisdn, amount, idempotency_key=key)
            elif flow == "code_to_bank":
                self.engine.transfer_from_code(
                    session.msisdn,
                    "BANK",
                    session.collected["recipient_bank"],
                    amount,
                    idempotency_key=key,
                )
            elif flow == "code_to_msisdn":
                self.engine.transfer_from_code(
                    session.msisdn,
                    "MSISDN",
                    session.collected["recipient"],
                    amount,
                    idempotency_key=key,
                )
            else:
                return self._invalid(session)
        except EWalletError as exc:
            return self._fail(session, exc)
        session.node = Node.ENDED
        return Screen(SUCCESS_TEXT, terminal=True)

    def _on_incoming(self, session: UssdSession, text: str) -> Screen:
        registered = session.collected.get("registered") == "yes"
        stage = session.collected.get("stage", "offer")
        if stage == "offer":
            if text == "1":
                session.collected["stage"] = "menu"
                return Screen(receiver_menu_text(registered))
            if text == "2":
                if registered:
                    try:
                        self.engine.save_codes_to_wallet(session.msisdn)
                    except EWalletError as exc:
                        return self._fail(session, exc)
                    session.node = Node.ENDED
                    return Screen(SUCCESS_TEXT, terminal=True)
                session.node = Node.ENDED
                return Screen(CREATE_ACCOUNT_INFO_TEXT, terminal=True)
            return self._invalid(session)
        # receiver menu
        if text == "1":
            session.node = Node.ENDED
            return Screen(ATM_INFO_TEXT, terminal=True)
        if text == "2":
            session.collected["flow"] = "code_to_bank"
            session.node = Node.RECIPIENT_BANK
            return Screen(RECIPIENT_BANK_TEXT)
        if text == "3":
            session.collected["flow"] = "code_to_msisdn"
            session.node = Node.RECIPIENT_MSISDN
            return Screen(RECIPIENT_MSISDN_TEXT)
        if text == "4" and registered:
            session.node = Node.ROOT
            return Screen(ROOT_TEXT)
        return self._invalid(session)

    def _on_change_pin_old(self, session: UssdSession, text: str) -> Screen:
        sub = self.registry.get(session.msisdn)
        if sub is None or not verify_secret(text, sub.pin_digest):
            return self._invalid(session, CHANGE_PIN_OLD_TEXT)
        session.node = Node.CHANGE_PIN_NEW
        return Screen(CHANGE_PIN_NEW_TEXT)

    def _on_change_pin_new(self, session: UssdSession, text: str) -> Screen:
        try:
            self.registry.update_details(Channel.USSD, session.msisdn, {"pin": text})
        except EWalletError as exc:
            if exc.code == "VALIDATION_FAILED":
                return self._invalid(session, CHANGE_PIN_NEW_TEXT)
            return self._fail(session, exc)
        session.node = Node.ENDED
        return Screen("Pin changed successfully", terminal=True)
