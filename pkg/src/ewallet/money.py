"""Integer money in minor units plus edge-of-system rendering.

All arithmetic inside the platform is integer minor units (cents).  Rendered
strings like "R550" exist only in screens and SMS bodies.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import error

CURRENCY_SYMBOLS = {"ZAR": "R", "CDF": "FC", "USD": "$"}


@dataclass(frozen=True)
class Money:
    amount_minor: int
    currency: str

    def __post_init__(self):
        if not isinstance(self.amount_minor, int):
            raise error("AMOUNT_INVALID", "Amounts are integer minor units")

    def render(self) -> str:
        """Major-unit string with currency symbol: 55000 ZAR minor -> "R550"."""
        symbol = CURRENCY_SYMBOLS.get(self.currency, self.currency + " ")
        minor = self.amount_minor
        sign = "-" if minor < 0 else ""
        minor = abs(minor)
        major, cents = divmod(minor, 100)
        if cents == 0:
            return f"{sign}{symbol}{major}"
        return f"{sign}{symbol}{major}.{cents:02d}"

    def __add__(self, other: "Money") -> "Money":
        if other.currency != self.currency:
            raise error("CURRENCY_MISMATCH")
        return Money(self.amount_minor + other.amount_minor, self.currency)

    def __sub__(self, other: "Money") -> "Money":
        if other.currency != self.currency:
            raise error("CURRENCY_MISMATCH")
        return Money(self.amount_minor - other.amount_minor, self.currency)


def parse_major(text: str, currency: str) -> Money:
    """Parse a user-typed major-unit amount ("550", "550.50") into Money.

    Raises AMOUNT_INVALID for anything that is not a plain decimal with at
    most two fraction digits.
    """
    raw = text.strip().replace(" ", "")
    if raw.startswith(CURRENCY_SYMBOLS.get(currency, "\0")):
        raw = raw[len(CURRENCY_SYMBOLS[currency]):]
    if not raw:
        raise error("AMOUNT_INVALID")
    whole, dot, frac = raw.partition(".")
    if not whole.isdigit():
        raise error("AMOUNT_INVALID")
    if dot and (not frac.isdigit() or len(frac) > 2):
        raise error("AMOUNT_INVALID")
    minor = int(whole) * 100 + (int(frac.ljust(2, "0")) if dot else 0)
    return Money(minor, currency)


def require_positive(amount_minor: int) -> int:
    if not isinstance(amount_minor, int) or isinstance(amount_minor, bool) or amount_minor <= 0:
        raise error("AMOUNT_INVALID")
    return amount_minor
