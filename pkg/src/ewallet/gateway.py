"""HTTP/JSON gateway: every engine operation behind a documented endpoint.

Amounts travel as integer minor units plus a currency code; rendered strings
only ever appear inside screen and SMS text.  Money-moving POSTs honour an
Idempotency-Key header; replays return the original body byte for byte.
Errors are always an ApiError payload {"error": {"code", "message"}} with the
status from the error catalog.
"""

from __future__ import annotations

import secrets
import uuid
from datetime import datetime, timedelta
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel
from starlette.exceptions import HTTPException as StarletteHTTPException

from .adapters import normalize_msisdn
from .errors import EWalletError, error
from .ledger import AccountId
from .registry import Channel
from .service import Platform


class UssdRequest(BaseModel):
    session_id: str
    msisdn: str
    input: str


class RegisterRequest(BaseModel):
    msisdn: str
    full_name: str = ""
    pin: str
    secret_question: str
    secret_answer: str
    bank_account: Optional[str] = None


class LoginRequest(BaseModel):
    principal: str
    secret: str
    channel: str = "WEB"


class PasswordChangeRequest(BaseModel):
    new_password: str


class PinRetrieveRequest(BaseModel):
    msisdn: str
    answer: str


class WalletTransferRequest(BaseModel):
    recipient_msisdn: str
    amount_minor: int
    source: str = "AUTO"


class BankTransferRequest(BaseModel):
    recipient_bank_account: str
    amount_minor: int


class RechargeRequest(BaseModel):
    amount_minor: int


class WithdrawalRequest(BaseModel):
    amount_minor: int


class AtmRedeemRequest(BaseModel):
    code: str
    msisdn: str
    amount_minor: int


class PosChargeRequest(BaseModel):
    seller_msisdn: str
    buyer_msisdn: str
    amount_minor: int
    code: Optional[str] = None


class DetailsRequest(BaseModel):
    changes: dict


class DeregisterRequest(BaseModel):
    confirm: bool = False


class SmsAckRequest(BaseModel):
    msisdn: str
    through_id: int


class UnlockRequest(BaseModel):
    msisdn: str


class ExpireRequest(BaseModel):
    now: Optional[str] = None


class _Sessions:
    """Opaque bearer tokens for the WEB channel."""

    def __init__(self, platform: Platform):
        self.platform = platform
        self.ttl = timedelta(seconds=platform.config.web_token_ttl_seconds)
        self._tokens: dict[str, dict] = {}

    def issue(self, msisdn: str, must_change: bool) -> dict:
        token = secrets.token_hex(16)
        expires = self.platform.clock() + self.ttl
        self._tokens[token] = {
            "msisdn": msisdn,
            "expires_at": expires,
            "must_change_password": must_change,
        }
        return {
            "token": token,
            "msisdn": msisdn,
            "must_change_password": must_change,
            "expires_at": expires.isoformat(),
        }

    def resolve(self, token: str) -> dict:
        info = self._tokens.get(token)
        if info is None or self.platform.clock() > info["expires_at"]:
            raise error("INVALID_LOGIN", "Invalid login details")
        return info

    def password_changed(self, msisdn: str) -> None:
        for info in self._tokens.values():
            if info["msisdn"] == msisdn:
                info["must_change_password"] = False


def create_app(platform: Platform) -> FastAPI:
    app = FastAPI(title="eWallet", docs_url=None, redoc_url=None)
    sessions = _Sessions(platform)
    engine = platform.engine
    registry = platform.registry

    @app.exception_handler(EWalletError)
    async def ewallet_error_handler(request: Request, exc: EWalletError):
        return JSONResponse(status_code=exc.http_status, content=exc.as_payload())

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        detail = "; ".join(
            f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors()
        )
        err = error("VALIDATION_FAILED", detail)
        return JSONResponse(status_code=err.http_status, content=err.as_payload())

    @app.exception_handler(StarletteHTTPException)
    async def http_error_handler(request: Request, exc: StarletteHTTPException):
        code = "NOT_FOUND" if exc.status_code == 404 else "BAD_REQUEST"
        err = error(code, str(exc.detail))
        return JSONResponse(status_code=exc.status_code, content=err.as_payload())

    def principal(
        authorization: Optional[str] = Header(None),
    ) -> dict:
        if not authorization or not authorization.startswith("Bearer "):
            raise error("INVALID_LOGIN", "Invalid login details")
        return sessions.resolve(authorization.removeprefix("Bearer "))

    def settled_principal(info: dict = Depends(principal)) -> dict:
        if info["must_change_password"]:
            raise error("PASSWORD_CHANGE_REQUIRED")
        return info

    def own_msisdn(info: dict, msisdn: str) -> str:
        msisdn = normalize_msisdn(msisdn)
        if info["msisdn"] != msisdn:
            raise error("FORBIDDEN_PRINCIPAL")
        return msisdn

    def idem(idempotency_key: Optional[str] = Header(None)) -> str:
        return idempotency_key or f"gen-{uuid.uuid4()}"

    # -- health & ussd ------------------------------------------------------

    @app.get("/health")
    def health():
        return platform.health()

    @app.post("/ussd")
    def ussd(req: UssdRequest):
        session = platform.ussd.get_session(req.session_id)
        if session is None:
            screen = platform.ussd.begin_session(req.session_id, req.msisdn, req.input)
        else:
            if session.msisdn != normalize_msisdn(req.msisdn):
                raise error("FORBIDDEN_PRINCIPAL", "Session belongs to another number")
            screen = platform.ussd.step(req.session_id, req.input)
        return {"text": screen.text, "end_session": screen.terminal}

    # -- identity -----------------------------------------------------------

    @app.post("/register", status_code=201)
    def register(req: RegisterRequest):
        result = registry.register(req.model_dump())
        return {"msisdn": result["msisdn"], "login_id": result["login_id"], "status": "ACTIVE"}

    @app.post("/login")
    def login(req: LoginRequest):
        channel = Channel(req.channel)
        sub = registry.login(channel, req.principal, req.secret)
        return sessions.issue(sub.msisdn, sub.password_temporary)

    @app.post("/password/change")
    def change_password(req: PasswordChangeRequest, info: dict = Depends(principal)):
        registry.change_password(info["msisdn"], req.new_password)
        sessions.password_changed(info["msisdn"])
        return {"msisdn": info["msisdn"], "changed": True}

    @app.post("/pin/retrieve")
    def retrieve_pin(req: PinRetrieveRequest):
        return registry.retrieve_pin(req.msisdn, req.answer)

    @app.post("/details")
    def update_details(req: DetailsRequest, info: dict = Depends(settled_principal)):
        return registry.update_details(Channel.WEB, info["msisdn"], req.changes)

    @app.post("/deregister")
    def deregister(req: DeregisterRequest, info: dict = Depends(settled_principal)):
        return registry.deregister(info["msisdn"], req.confirm)

    # -- wallet reads -------------------------------------------------------

    @app.get("/wallets/{msisdn}/balance")
    def balance(msisdn: str, info: dict = Depends(settled_principal)):
        msisdn = own_msisdn(info, msisdn)
        money = engine.check_balance(msisdn)
        return {
            "msisdn": msisdn,
            "amount_minor": money.amount_minor,
            "currency": money.currency,
            "rendered": money.render(),
        }

    @app.get("/wallets/{msisdn}/statement")
    def statement(
        msisdn: str,
        from_seq: int = 1,
        to_seq: Optional[int] = None,
        info: dict = Depends(settled_principal),
    ):
        msisdn = own_msisdn(info, msisdn)
        entries = platform.ledger.statement(AccountId.wallet(msisdn), from_seq, to_seq)
        return {"msisdn": msisdn, "entries": [e.as_record() for e in entries]}

    # -- money movement -----------------------------------------------------

    @app.post("/transfers/wallet")
    def transfer_wallet(
        req: WalletTransferRequest,
        info: dict = Depends(settled_principal),
        key: str = Depends(idem),
    ):
        return engine.transfer_wallet_to_wallet(
            info["msisdn"], req.recipient_msisdn, req.amount_minor, key, req.source
        )

    @app.post("/transfers/bank")
    def transfer_bank(
        req: BankTransferRequest,
        info: dict = Depends(settled_principal),
        key: str = Depends(idem),
    ):
        return engine.transfer_wallet_to_bank(
            info["msisdn"], req.recipient_bank_account, req.amount_minor, key
        )

    @app.post("/transfers/bank-to-bank")
    def transfer_bank_to_bank(
        req: BankTransferRequest,
        info: dict = Depends(settled_principal),
        key: str = Depends(idem),
    ):
        return engine.transfer_bank_to_bank(
            info["msisdn"], req.recipient_bank_account, req.amount_minor, key
        )

    @app.post("/recharge")
    def recharge(
        req: RechargeRequest,
        info: dict = Depends(settled_principal),
        key: str = Depends(idem),
    ):
        return engine.recharge(info["msisdn"], req.amount_minor, key)

    @app.post("/withdrawals")
    def request_withdrawal(
        req: WithdrawalRequest,
        info: dict = Depends(settled_principal),
        key: str = Depends(idem),
    ):
        return engine.request_withdrawal(info["msisdn"], req.amount_minor, key)

    @app.post("/atm/redeem")
    def atm_redeem(req: AtmRedeemRequest, key: str = Depends(idem)):
        return engine.redeem_at_atm(req.code, req.msisdn, req.amount_minor, key)

    @app.post("/pos/charge")
    def pos_charge(req: PosChargeRequest, key: str = Depends(idem)):
        return engine.pay_merchant(
            req.buyer_msisdn, req.seller_msisdn, req.amount_minor, req.code, key
        )

    # -- sms ------------------------------------------------------------------

    @app.get("/sms/outbox/{msisdn}")
    def sms_outbox(msisdn: str):
        return {"messages": [m.as_record() for m in platform.sms.poll(msisdn)]}

    @app.post("/sms/ack")
    def sms_ack(req: SmsAckRequest):
        return {"acked": platform.sms.ack(req.msisdn, req.through_id)}

    # -- admin ------------------------------------------------------------------

    @app.post("/admin/seed")
    def admin_seed(fixture: dict):
        return platform.seed(fixture)

    @app.get("/admin/journal")
    def admin_journal():
        return {"entries": [e.as_record() for e in platform.ledger.entries()]}

    @app.get("/admin/balances")
    def admin_balances():
        return {"balances": platform.ledger.all_balances(), "currency": platform.config.currency}

    @app.get("/admin/cast")
    def admin_cast():
        subscribers = {
            m: {"full_name": s.full_name, "status": s.status.value}
            for m, s in registry._subscribers.items()
        }
        return {
            "msisdns": [
                {"msisdn": m, "carrier": c}
                for m, c in sorted(platform.telco.active_msisdns.items())
            ],
            "bank_accounts": [
                {"number": n, "holder": a["holder_name"]}
                for n, a in sorted(platform.bank.accounts.items())
            ],
            "subscribers": subscribers,
            "service_code": platform.config.service_code,
        }

    @app.post("/admin/unlock")
    def admin_unlock(req: UnlockRequest):
        return registry.unlock(req.msisdn)

    @app.post("/admin/expire")
    def admin_expire(req: ExpireRequest):
        now = datetime.fromisoformat(req.now) if req.now else None
        return platform.sweep(now)

    return app
