"""Shared fixtures: a platform on a temp journal, a seeded cast, a fake clock
and the independent journal-fold oracle used to cross-check every balance.
"""

from __future__ import annotations

import json
import random
import re
from datetime import datetime, timedelta, timezone

import pytest

from ewallet import Config, Platform
from ewallet.service import default_fixture

SENDER = "27820000001"
WIFE = "27820000002"
PARENT = "27820000003"
SELLER = "27820000004"
EXTRA = "27820000005"
SENDER_BANK = "62000000001"
SELLER_BANK = "62000000009"


def journal_fold(journal_path) -> dict[str, int]:
    """Independent oracle: fold the raw NDJSON file, no ledger code involved."""
    balances: dict[str, int] = {}
    with open(journal_path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            for posting in record["postings"]:
                account = posting["account"]
                balances[account] = balances.get(account, 0) + posting["delta_minor"]
    return balances


def assert_oracle_equivalence(platform: Platform) -> None:
    folded = journal_fold(platform.config.journal_path)
    live = platform.ledger.all_balances()
    for account, amount in live.items():
        assert folded.get(account, 0) == amount, f"{account}: live {amount} != fold"
    for account, amount in folded.items():
        assert live.get(account) == amount, f"{account}: fold {amount} not live"
    assert sum(folded.values()) == 0


class FakeClock:
    def __init__(self, start: datetime | None = None):
        self.now = start or datetime(2026, 1, 1, 12, 0, 0, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        return self.now

    def advance(self, **kwargs) -> None:
        self.now += timedelta(**kwargs)


def sms_bodies(platform: Platform, msisdn: str) -> list[str]:
    return [m.body for m in platform.sms.poll(msisdn)]


def last_access_code(platform: Platform, msisdn: str) -> str:
    for body in reversed(sms_bodies(platform, msisdn)):
        found = re.search(r"access code is (\d{8})", body)
        if found:
            return found.group(1)
    raise AssertionError(f"no access code SMS for {msisdn}")


def make_platform(tmp_path, clock=None, fee_preset="default", seed=1234, **config_kwargs) -> Platform:
    config = Config(
        journal_path=str(tmp_path / "journal.ndjson"),
        fee_preset=fee_preset,
        **config_kwargs,
    )
    platform = Platform(config, clock=clock, rng=random.Random(seed))
    platform.seed(default_fixture())
    return platform


def register_cast(platform: Platform) -> None:
    platform.registry.register(
        {
            "msisdn": SENDER,
            "full_name": "Kayembe Ka Tshitupa",
            "pin": "1234",
            "secret_question": "Home town?",
            "secret_answer": "Kananga",
            "bank_account": SENDER_BANK,
        }
    )
    platform.registry.register(
        {
            "msisdn": SELLER,
            "full_name": "Corner Store",
            "pin": "9876",
            "secret_question": "First stock item?",
            "secret_answer": "maize",
        }
    )


@pytest.fixture
def clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def platform(tmp_path, clock) -> Platform:
    return make_platform(tmp_path, clock=clock)


@pytest.fixture
def cast_platform(platform) -> Platform:
    register_cast(platform)
    return platform
