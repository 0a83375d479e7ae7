"""Composition root: builds adapters, ledger, registry, engine and menu
engine from a Config, replaying the journal so a restart reproduces every
balance, subscriber and live access code.
"""

from __future__ import annotations

import json
import random
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .adapters import SimulatedBank, SmsGateway, TelcoRegistry, apply_seed_fixture
from .config import Config
from .engine import FeeSchedule, TransactionEngine
from .ledger import Ledger
from .registry import SubscriberRegistry
from .ussd import UssdMenuEngine


def default_fixture() -> dict:
    """The shipped cast: one banked sender, bank-unknown relatives, a seller."""
    raw = resources.files("ewallet.fixtures").joinpath("scenario_seed.json").read_text()
    return json.loads(raw)


class Platform:
    def __init__(
        self,
        config: Config,
        clock: Callable[[], datetime] | None = None,
        rng: random.Random | None = None,
        telco: TelcoRegistry | None = None,
        bank: SimulatedBank | None = None,
        sms: SmsGateway | None = None,
    ):
        config.validate()
        self.config = config
        self.clock = clock or (lambda: datetime.now(timezone.utc))
        self.rng = rng or random.SystemRandom()

        # the providers simulate external systems, so a restarted platform may
        # be handed the same instances to keep their state alive
        self.telco = telco or TelcoRegistry()
        self.bank = bank or SimulatedBank(clock=self.clock)
        self.sms = sms or SmsGateway(self.telco, clock=self.clock)
        self.ledger = Ledger(
            config.journal_path,
            currency=config.currency,
            fsync_on_append=config.fsync_on_append,
            clock=self.clock,
        )
        self.registry = SubscriberRegistry(
            self.ledger,
            self.telco,
            self.bank,
            self.sms,
            lock_threshold=config.lock_threshold,
            snapshot_path=config.registry_snapshot_path,
            rng=self.rng,
        )
        self.registry.rebuild_from_journal()
        self.engine = TransactionEngine(
            self.ledger,
            self.registry,
            self.telco,
            self.bank,
            self.sms,
            fees=FeeSchedule.preset(config.fee_preset),
            access_code_ttl_hours=config.access_code_ttl_hours,
            service_code=config.service_code,
            clock=self.clock,
            rng=self.rng,
        )
        self.ussd = UssdMenuEngine(
            self.engine,
            service_code=config.service_code,
            session_ttl_seconds=config.session_ttl_seconds,
            clock=self.clock,
        )
        if config.seed_path:
            self.seed(json.loads(Path(config.seed_path).read_text()))

    def seed(self, fixture: dict) -> dict:
        return apply_seed_fixture(self.telco, self.bank, fixture)

    def sweep(self, now: Optional[datetime] = None) -> dict:
        """Run the periodic expiries: access codes and idle USSD sessions."""
        return {
            "codes_expired": self.engine.expire_codes(now),
            "sessions_expired": self.ussd.expire_sessions(now),
        }

    def health(self) -> dict:
        return {
            "status": "ok",
            "entries": self.ledger.last_seq(),
            "providers": [
                self.telco.health(),
                self.bank.health(),
                self.sms.health(),
            ],
        }
