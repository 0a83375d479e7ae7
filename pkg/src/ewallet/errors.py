"""Error codes shared by every layer of the platform.

Each failure is an :class:`EWalletError` carrying a stable machine code, a
human-readable message and the HTTP status the gateway maps it to.  A few
messages are fixed wording that callers (and tests) rely on verbatim, e.g.
"Not sufficient funds" and "Invalid login details".
"""

from __future__ import annotations


class EWalletError(Exception):
    """Base error: every raised condition carries one of the codes below."""

    def __init__(self, code: str, message: str | None = None):
        if code not in ERROR_CATALOG:
            raise ValueError(f"unknown error code: {code}")
        self.code = code
        self.message = message if message is not None else ERROR_CATALOG[code][0]
        self.http_status = ERROR_CATALOG[code][1]
        super().__init__(f"{code}: {self.message}")

    def as_payload(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


# code -> (default message, http status).  The mapping is total: the gateway
# refuses to serialize an error that is not listed here.
ERROR_CATALOG: dict[str, tuple[str, int]] = {
    # ledger
    "DUPLICATE_ACCOUNT": ("Account already exists", 409),
    "UNKNOWN_ACCOUNT": ("Account does not exist", 404),
    "UNBALANCED_ENTRY": ("Journal entry postings do not sum to zero", 400),
    "NOT_SUFFICIENT_FUNDS": ("Not sufficient funds", 409),
    "IDEMPOTENCY_CONFLICT": ("Idempotency key reused with a different payload", 409),
    "CURRENCY_MISMATCH": ("Currency does not match this deployment", 400),
    # identity
    "UNKNOWN_MSISDN": ("Cellphone number is not known to any network provider", 404),
    "UNKNOWN_BANK_ACCOUNT": ("Bank account is not known to the bank", 404),
    "DUPLICATE_REGISTRATION": ("Cellphone number is already registered", 409),
    "INVALID_LOGIN": ("Invalid login details", 401),
    "ACCOUNT_LOCKED": ("Account is locked after too many failed attempts", 403),
    "ACCOUNT_CLOSED": ("Account is closed", 403),
    "INVALID_ANSWER": ("Invalid Answer", 403),
    "VALIDATION_FAILED": ("Submitted details failed validation", 400),
    "FORBIDDEN_FIELD_FOR_CHANNEL": ("This detail cannot be changed via this channel", 403),
    "RESIDUAL_BALANCE_NO_BANK": (
        "Wallet still holds funds and no bank account is linked",
        409,
    ),
    "PASSWORD_CHANGE_REQUIRED": ("Temporary password must be changed first", 403),
    "FORBIDDEN_PRINCIPAL": ("Session token does not match the requested subscriber", 403),
    # transactions
    "AMOUNT_INVALID": ("Amount must be a positive number of minor units", 400),
    "NO_LINKED_BANK_ACCOUNT": ("No bank account is linked to this wallet", 409),
    "PROVIDER_UNAVAILABLE": ("Provider is temporarily unavailable", 503),
    "CODE_UNKNOWN": ("Access code not recognised", 404),
    "CODE_EXPIRED": ("Access code has expired", 410),
    "CODE_ALREADY_REDEEMED": ("Access code has already been fully redeemed", 409),
    "HOLDER_MISMATCH": ("Access code does not belong to this cellphone number", 403),
    "AMOUNT_EXCEEDS_REMAINING": ("Amount exceeds the remaining code balance", 409),
    # ussd
    "SESSION_EXPIRED": ("Session has expired, please dial again", 410),
    "INVALID_SELECTION": ("Invalid selection", 400),
    "WRONG_SERVICE_CODE": ("Unknown service code", 404),
    # gateway plumbing
    "BAD_REQUEST": ("Malformed request", 400),
    "NOT_FOUND": ("No such resource", 404),
    "JOURNAL_CORRUPT": ("Journal failed integrity checks", 500),
    "INTERNAL": ("Internal error", 500),
}


def error(code: str, message: str | None = None) -> EWalletError:
    """Shorthand constructor used throughout the engine."""
    return EWalletError(code, message)
