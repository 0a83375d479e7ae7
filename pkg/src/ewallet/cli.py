"""Admin command line: serve, seed, replay, statement, unlock, scenario."""

from __future__ import annotations

import argparse
import json
import sys
import threading
import time
from pathlib import Path

import httpx

from .config import Config
from .errors import EWalletError
from .ledger import AccountId, Ledger, JournalCorrupt
from .service import Platform, default_fixture


def _build_config(args: argparse.Namespace) -> Config:
    config = Config.load(getattr(args, "config", None))
    if getattr(args, "listen", None):
        config.listen = args.listen
    if getattr(args, "journal", None):
        config.journal_path = args.journal
    if getattr(args, "seed", None):
        config.seed_path = args.seed
    if getattr(args, "fsync", False):
        config.fsync_on_append = True
    if getattr(args, "fee_preset", None):
        config.fee_preset = args.fee_preset
    config.validate()
    return config


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .gateway import create_app

    try:
        config = _build_config(args)
        platform = Platform(config)
    except (ValueError, JournalCorrupt) as exc:
        print(f"startup refused: {exc}", file=sys.stderr)
        return 2
    if args.seed_default:
        platform.seed(default_fixture())
    app = create_app(platform)

    def sweeper():
        while True:
            time.sleep(args.sweep_interval)
            platform.sweep()

    threading.Thread(target=sweeper, daemon=True).start()
    host, _, port = config.listen.rpartition(":")
    print(f"eWallet service on http://{host}:{port} (journal: {config.journal_path})")
    uvicorn.run(app, host=host, port=int(port), log_level="warning")
    return 0


def cmd_seed(args: argparse.Namespace) -> int:
    fixture = (
        json.loads(Path(args.fixture).read_text()) if args.fixture else default_fixture()
    )
    response = httpx.post(f"{args.base_url}/admin/seed", json=fixture, timeout=10.0)
    print(response.json())
    return 0 if response.status_code < 400 else 1


def cmd_replay(args: argparse.Namespace) -> int:
    """Offline audit: schema, conservation, gapless seq, protected accounts."""
    path = Path(args.journal)
    if not path.is_file():
        print(f"no journal at {path}", file=sys.stderr)
        return 2
    try:
        ledger = Ledger(path)
    except JournalCorrupt as exc:
        print(f"journal corrupt: {exc}", file=sys.stderr)
        return 1

    # independent fold straight over the file, compared against the ledger
    folded: dict[str, int] = {}
    with path.open() as fh:
        for line in fh:
            if not line.strip():
                continue
            for posting in json.loads(line)["postings"]:
                folded[posting["account"]] = (
                    folded.get(posting["account"], 0) + posting["delta_minor"]
                )
    live = {k: v for k, v in ledger.all_balances().items() if v != 0}
    if {k: v for k, v in folded.items() if v != 0} != live:
        print("balance cache does not match independent fold", file=sys.stderr)
        return 1
    if sum(folded.values()) != 0:
        print("conservation violated: balances do not sum to zero", file=sys.stderr)
        return 1
    print(f"{ledger.last_seq()} entries, all invariants hold")
    return 0


def cmd_statement(args: argparse.Namespace) -> int:
    try:
        ledger = Ledger(args.journal)
        entries = ledger.statement(AccountId.wallet(args.msisdn))
    except (JournalCorrupt, EWalletError) as exc:
        print(f"statement failed: {exc}", file=sys.stderr)
        return 1
    balance = 0
    for entry in entries:
        delta = sum(
            p.delta_minor for p in entry.postings if p.account == AccountId.wallet(args.msisdn)
        )
        balance += delta
        print(f"{entry.seq:>6}  {entry.ts}  {entry.entry_type.value:<16} {delta:>10}  {balance:>12}")
    print(f"balance: {balance}")
    return 0


def cmd_unlock(args: argparse.Namespace) -> int:
    response = httpx.post(
        f"{args.base_url}/admin/unlock", json={"msisdn": args.msisdn}, timeout=10.0
    )
    body = response.json()
    if response.status_code >= 400:
        print(body, file=sys.stderr)
        return 1
    print(body if body.get("changed") else f"{args.msisdn}: no-op, account not locked")
    return 0


def cmd_scenario(args: argparse.Namespace) -> int:
    from .scenario import run_scenario

    return run_scenario(args.base_url)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ewallet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--listen", help="host:port")
    p.add_argument("--journal", help="journal file path")
    p.add_argument("--seed", help="seed fixture JSON to load at startup")
    p.add_argument("--seed-default", action="store_true", help="load the shipped cast fixture")
    p.add_argument("--fee-preset", choices=["default", "agency-comparison"])
    p.add_argument("--fsync", action="store_true", help="fsync the journal on every append")
    p.add_argument("--sweep-interval", type=float, default=5.0, help="expiry sweep period (s)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("seed", help="POST a fixture to a running service")
    p.add_argument("fixture", nargs="?", help="fixture JSON path (default: shipped cast)")
    p.add_argument("--base-url", default="http://127.0.0.1:8555")
    p.set_defaults(func=cmd_seed)

    p = sub.add_parser("replay", help="offline journal audit")
    p.add_argument("journal")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("statement", help="offline wallet statement from a journal")
    p.add_argument("msisdn")
    p.add_argument("--journal", required=True)
    p.set_defaults(func=cmd_statement)

    p = sub.add_parser("unlock", help="unlock a locked subscriber on a running service")
    p.add_argument("msisdn")
    p.add_argument("--base-url", default="http://127.0.0.1:8555")
    p.set_defaults(func=cmd_unlock)

    p = sub.add_parser("scenario", help="run the end-to-end walkthrough against a live service")
    p.add_argument("--base-url", default="http://127.0.0.1:8555")
    p.set_defaults(func=cmd_scenario)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
