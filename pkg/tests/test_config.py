import json

import pytest

from ewallet.config import Config


def test_defaults_validate():
    config = Config()
    config.validate()
    assert config.currency == "ZAR"
    assert config.service_code == "#555*"
    assert config.registry_snapshot_path.endswith(".registry.json")


def test_load_from_file_and_env_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"currency": "CDF", "session_ttl_seconds": 60}))
    config = Config.load(
        str(path),
        env={
            "EWALLET_SESSION_TTL_SECONDS": "45",
            "EWALLET_FSYNC_ON_APPEND": "true",
            "EWALLET_JOURNAL_PATH": "/tmp/x.ndjson",
            "UNRELATED": "ignored",
        },
    )
    assert config.currency == "CDF"  # file value survives
    assert config.session_ttl_seconds == 45  # env wins over file
    assert config.fsync_on_append is True
    assert config.journal_path == "/tmp/x.ndjson"


@pytest.mark.parametrize(
    "broken",
    [
        {"currency": "TOOLONG"},
        {"fee_preset": "nope"},
        {"session_ttl_seconds": 0},
        {"lock_threshold": 0},
        {"listen": "no-port"},
        {"service_code": ""},
    ],
)
def test_invalid_values_abort(tmp_path, broken):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(broken))
    with pytest.raises(ValueError) as err:
        Config.load(str(path), env={})
    assert "invalid configuration" in str(err.value)


def test_unknown_keys_abort(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"no_such_option": 1}))
    with pytest.raises(ValueError):
        Config.load(str(path), env={})
