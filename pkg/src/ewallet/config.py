"""Deployment configuration: defaults, JSON file loading, EWALLET_* env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional


@dataclass
class Config:
    currency: str = "ZAR"
    fee_preset: str = "default"
    access_code_ttl_hours: int = 72
    session_ttl_seconds: int = 120
    lock_threshold: int = 3
    service_code: str = "#555*"
    journal_path: str = "ewallet-journal.ndjson"
    listen: str = "127.0.0.1:8555"
    fsync_on_append: bool = False
    web_token_ttl_seconds: int = 900
    seed_path: Optional[str] = None

    @property
    def registry_snapshot_path(self) -> str:
        return self.journal_path + ".registry.json"

    def validate(self) -> None:
        problems = []
        if len(self.currency) != 3 or not self.currency.isalpha():
            problems.append(f"currency must be a 3-letter code, got {self.currency!r}")
        if self.fee_preset not in ("default", "agency-comparison"):
            problems.append(f"unknown fee preset {self.fee_preset!r}")
        if self.access_code_ttl_hours <= 0:
            problems.append("access_code_ttl_hours must be positive")
        if self.session_ttl_seconds <= 0:
            problems.append("session_ttl_seconds must be positive")
        if self.lock_threshold < 1:
            problems.append("lock_threshold must be at least 1")
        if not self.service_code:
            problems.append("service_code must be set")
        if ":" not in self.listen:
            problems.append(f"listen must be host:port, got {self.listen!r}")
        if problems:
            raise ValueError("invalid configuration: " + "; ".join(problems))

    @staticmethod
    def load(path: Optional[str] = None, env: Optional[dict] = None) -> "Config":
        """File values, then EWALLET_* environment overrides, then validation."""
        values: dict = {}
        if path:
            values.update(json.loads(Path(path).read_text()))
        env = env if env is not None else dict(os.environ)
        for f in fields(Config):
            env_key = f"EWALLET_{f.name.upper()}"
            if env_key not in env:
                continue
            raw = env[env_key]
            if f.type in ("int", int):
                values[f.name] = int(raw)
            elif f.type in ("bool", bool):
                values[f.name] = raw.lower() in ("1", "true", "yes", "on")
            else:
                values[f.name] = raw
        known = {f.name for f in fields(Config)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"invalid configuration: unknown keys {sorted(unknown)}")
        config = Config(**values)
        config.validate()
        return config
