"""eWallet: a self-contained mobile-money platform.

Double-entry journal, subscriber registry, money-movement engine, USSD menu
state machine, simulated telco/bank/SMS providers, an HTTP/JSON gateway and
an admin CLI — one process, one journal file.
"""

from .config import Config
from .service import Platform

__all__ = ["Config", "Platform"]
__version__ = "0.1.0"
