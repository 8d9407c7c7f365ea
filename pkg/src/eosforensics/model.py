"""Domain types for chain data and file ingestion.

File formats (all newline-delimited, UTF-8):

* action trace: one JSON object per line, fields matching ActionRecord.
  Timestamps are ISO-8601 UTC with second resolution, quantities are
  strings like "1.0000 EOS".
* account snapshot: one JSON object per line per account.
* registries: CSV files with a header row (see Registry.load).
"""

from __future__ import annotations

import csv
import json
import re
import sys
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .errors import GraphError, IngestError

ACCOUNT_NAME_RE = re.compile(r"[a-z1-5.]{1,12}")
SYMBOL_RE = re.compile(r"[A-Z]{1,7}")
QUANTITY_RE = re.compile(r"(\d+)\.(\d{4}) ([A-Z]{1,7})")

OFFICIAL_TOKEN_CONTRACT = "eosio.token"
SYSTEM_ACCOUNT = "eosio"

KINDS = ("external", "inline", "deferred", "notification")

# Fraction of malformed lines above which ingestion aborts.
MALFORMED_FATAL_RATIO = 0.01


def is_account_name(name) -> bool:
    return isinstance(name, str) and ACCOUNT_NAME_RE.fullmatch(name) is not None


@dataclass(frozen=True, slots=True)
class Quantity:
    """A fixed-point token amount with 4 fractional digits (EOS convention)."""

    amount: Decimal
    symbol: str

    def __post_init__(self):
        if self.amount < 0:
            raise ValueError(f"negative quantity: {self.amount}")
        if not SYMBOL_RE.fullmatch(self.symbol):
            raise ValueError(f"bad token symbol: {self.symbol!r}")

    @classmethod
    def parse(cls, text: str) -> "Quantity":
        m = QUANTITY_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"bad quantity string: {text!r}")
        return cls(Decimal(f"{m.group(1)}.{m.group(2)}"), m.group(3))

    def __str__(self) -> str:
        return f"{self.amount:.4f} {self.symbol}"


@dataclass(frozen=True, slots=True)
class TransferPayload:
    src: str
    dst: str
    quantity: Quantity
    memo: str

    def to_json(self) -> dict:
        return {
            "from": self.src,
            "to": self.dst,
            "quantity": str(self.quantity),
            "memo": self.memo,
        }


@dataclass(frozen=True, slots=True)
class UpdateAuthPayload:
    account: str
    permission: str
    parent: str
    threshold: int
    key_weights: tuple  # of (public_key, weight)
    account_weights: tuple  # of (granted_account, granted_permission, weight)

    def __post_init__(self):
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        for _, w in self.key_weights:
            if w < 1:
                raise ValueError("key weight must be >= 1")
        for _, _, w in self.account_weights:
            if w < 1:
                raise ValueError("account weight must be >= 1")

    def to_json(self) -> dict:
        return {
            "account": self.account,
            "permission": self.permission,
            "parent": self.parent,
            "threshold": self.threshold,
            "key_weights": [[k, w] for k, w in self.key_weights],
            "account_weights": [[a, p, w] for a, p, w in self.account_weights],
        }


@dataclass(slots=True)
class ActionRecord:
    """One executed action: external call, inline call, deferred, or a
    notification copy delivered to a third account."""

    global_seq: int
    tx_id: str
    timestamp: datetime
    executing_contract: str
    action_name: str
    actor: str
    kind: str
    payload: object  # TransferPayload | UpdateAuthPayload | dict
    notified: str | None = None

    def payload_json(self) -> dict:
        if isinstance(self.payload, (TransferPayload, UpdateAuthPayload)):
            return self.payload.to_json()
        return self.payload

    def to_json(self) -> dict:
        obj = {
            "global_seq": self.global_seq,
            "tx_id": self.tx_id,
            "timestamp": format_timestamp(self.timestamp),
            "executing_contract": self.executing_contract,
            "action_name": self.action_name,
            "actor": self.actor,
            "kind": self.kind,
            "payload": self.payload_json(),
        }
        if self.notified is not None:
            obj["notified"] = self.notified
        return obj


@dataclass(frozen=True, slots=True)
class Permission:
    threshold: int
    key_weights: tuple  # of (public_key, weight)
    account_weights: tuple  # of (granted_account, granted_permission, weight)


@dataclass(slots=True)
class AccountRecord:
    name: str
    creator: str | None
    created_at: datetime
    permissions: dict  # permission name -> Permission
    has_contract: bool = False

    def keys(self) -> set:
        """Union of public keys across all permissions."""
        out = set()
        for perm in self.permissions.values():
            out.update(k for k, _ in perm.key_weights)
        return out

    def active_keys(self) -> set:
        perm = self.permissions.get("active")
        if perm is None:
            return set()
        return {k for k, _ in perm.key_weights}

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "creator": self.creator,
            "created_at": format_timestamp(self.created_at),
            "has_contract": self.has_contract,
            "permissions": {
                name: {
                    "threshold": p.threshold,
                    "key_weights": [[k, w] for k, w in p.key_weights],
                    "account_weights": [[a, q, w] for a, q, w in p.account_weights],
                }
                for name, p in self.permissions.items()
            },
        }


@dataclass(frozen=True)
class ObservationWindow:
    """Inclusive UTC day span all day indices are computed against."""

    start_day: date
    end_day: date

    def __post_init__(self):
        if self.start_day > self.end_day:
            raise ValueError("start_day after end_day")

    @property
    def day_count(self) -> int:
        return (self.end_day - self.start_day).days + 1

    def day_index(self, ts: datetime) -> int:
        return (ts.date() - self.start_day).days

    def contains(self, ts: datetime) -> bool:
        return self.start_day <= ts.date() <= self.end_day

    def day_date(self, index: int) -> date:
        return self.start_day + timedelta(days=index)


@dataclass
class Registry:
    """Off-chain knowledge: DApp labels, incentive DApps, labeled
    communities, and known account sellers."""

    dapp_accounts: dict = field(default_factory=dict)  # account -> (dapp, category)
    incentive_dapps: set = field(default_factory=set)
    labeled_bot_communities: list = field(default_factory=list)  # (controller, set)
    labeled_normal_communities: list = field(default_factory=list)
    seller_seed: set = field(default_factory=set)

    def __post_init__(self):
        bots = set()
        for _, members in self.labeled_bot_communities:
            bots.update(members)
        for _, members in self.labeled_normal_communities:
            overlap = bots.intersection(members)
            if overlap:
                raise IngestError(
                    f"accounts labeled both bot and normal: {sorted(overlap)[:5]}"
                )

    @classmethod
    def load(cls, dapps=None, incentives=None, labels=None, sellers=None) -> "Registry":
        """Load registry CSVs.

        dapps.csv: account,dapp,category
        incentives.csv: account
        labels.csv: community_id,role,account   (role in {bot, normal})
        sellers.csv: account
        """
        reg = {}
        if dapps:
            with open(dapps, newline="") as fh:
                for row in csv.DictReader(fh):
                    reg[row["account"]] = (row["dapp"], row["category"])
        incentive = set()
        if incentives:
            with open(incentives, newline="") as fh:
                incentive = {row["account"] for row in csv.DictReader(fh)}
        bot_comms, normal_comms = {}, {}
        if labels:
            with open(labels, newline="") as fh:
                for row in csv.DictReader(fh):
                    bucket = bot_comms if row["role"] == "bot" else normal_comms
                    bucket.setdefault(row["community_id"], set()).add(row["account"])
        seed = set()
        if sellers:
            with open(sellers, newline="") as fh:
                seed = {row["account"] for row in csv.DictReader(fh)}
        return cls(
            dapp_accounts=reg,
            incentive_dapps=incentive,
            labeled_bot_communities=sorted(bot_comms.items()),
            labeled_normal_communities=sorted(normal_comms.items()),
            seller_seed=seed,
        )


def format_timestamp(ts: datetime) -> str:
    return ts.strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    ts = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    return ts.replace(tzinfo=timezone.utc)


def _decode_payload(action_name: str, raw: dict):
    if action_name == "transfer" and {"from", "to", "quantity"} <= raw.keys():
        return TransferPayload(
            src=sys.intern(raw["from"]),
            dst=sys.intern(raw["to"]),
            quantity=Quantity.parse(raw["quantity"]),
            memo=raw.get("memo", ""),
        )
    if action_name == "updateauth" and {"account", "permission", "threshold"} <= raw.keys():
        return UpdateAuthPayload(
            account=raw["account"],
            permission=raw["permission"],
            parent=raw.get("parent", ""),
            threshold=int(raw["threshold"]),
            key_weights=tuple((k, int(w)) for k, w in raw.get("key_weights", [])),
            account_weights=tuple(
                (a, p, int(w)) for a, p, w in raw.get("account_weights", [])
            ),
        )
    return raw


def decode_action(obj: dict) -> ActionRecord:
    """Build an ActionRecord from one decoded trace line, validating names."""
    kind = obj["kind"]
    if kind not in KINDS:
        raise ValueError(f"unknown action kind: {kind!r}")
    executing = sys.intern(obj["executing_contract"])
    actor = sys.intern(obj["actor"])
    action_name = sys.intern(obj["action_name"])
    for name in (executing, actor):
        if not is_account_name(name):
            raise ValueError(f"bad account name: {name!r}")
    notified = obj.get("notified")
    if notified is not None:
        notified = sys.intern(notified)
        if not is_account_name(notified):
            raise ValueError(f"bad account name: {notified!r}")
    if kind == "notification" and notified is None:
        raise ValueError("notification record without notified account")
    return ActionRecord(
        global_seq=int(obj["global_seq"]),
        tx_id=obj["tx_id"],
        timestamp=parse_timestamp(obj["timestamp"]),
        executing_contract=executing,
        action_name=action_name,
        actor=actor,
        kind=kind,
        payload=_decode_payload(action_name, obj["payload"]),
        notified=notified,
    )


@dataclass
class TraceParseResult:
    records: list
    dropped_out_of_window: int
    diagnostics: list  # (line_number, message)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


def parse_action_trace(path, window: ObservationWindow) -> TraceParseResult:
    """Parse a newline-delimited action trace.

    Records outside the observation window are dropped (and counted).
    Malformed lines are collected as diagnostics; more than 1% malformed
    lines aborts ingestion.
    """
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read trace {path}: {exc}") from exc

    records = []
    diagnostics = []
    dropped = 0
    total = 0
    last_seq = None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            total += 1
            try:
                record = decode_action(json.loads(line))
            except (ValueError, KeyError, TypeError, InvalidOperation) as exc:
                diagnostics.append((lineno, str(exc)))
                continue
            if last_seq is not None and record.global_seq <= last_seq:
                diagnostics.append(
                    (lineno, f"global_seq {record.global_seq} not increasing")
                )
                continue
            last_seq = record.global_seq
            if not window.contains(record.timestamp):
                dropped += 1
                continue
            records.append(record)

    if total and len(diagnostics) / total > MALFORMED_FATAL_RATIO:
        raise IngestError(
            f"{len(diagnostics)}/{total} malformed lines in {path}; "
            f"first: line {diagnostics[0][0]}: {diagnostics[0][1]}"
        )
    return TraceParseResult(records, dropped, diagnostics)


def write_action_trace(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_json(), sort_keys=True))
            fh.write("\n")


def is_genuine_transfer(record: ActionRecord) -> bool:
    """True for a real EOS movement via the official token contract."""
    return (
        record.action_name == "transfer"
        and record.executing_contract == OFFICIAL_TOKEN_CONTRACT
        and record.kind != "notification"
        and isinstance(record.payload, TransferPayload)
        and record.payload.quantity.symbol == "EOS"
        and record.payload.src != record.payload.dst
    )


@dataclass(frozen=True, slots=True)
class TransferTuple:
    day: int
    src: str
    dst: str
    amount: Decimal


def extract_transfers(actions, window: ObservationWindow):
    """Reduce an action stream to genuine money-flow tuples.

    Only official eosio.token EOS transfers count; notification copies,
    fake-token transfers and self-transfers are filtered out silently.
    """
    out = []
    for record in actions:
        if is_genuine_transfer(record):
            p = record.payload
            out.append(
                TransferTuple(window.day_index(record.timestamp), p.src, p.dst,
                              p.quantity.amount)
            )
    return out


@dataclass
class SnapshotResult:
    accounts: dict  # name -> AccountRecord
    warnings: list

    def __getitem__(self, name):
        return self.accounts[name]

    def __contains__(self, name):
        return name in self.accounts

    def __len__(self):
        return len(self.accounts)


def decode_account(obj: dict) -> AccountRecord:
    name = sys.intern(obj["name"])
    if not is_account_name(name):
        raise ValueError(f"bad account name: {name!r}")
    creator = obj.get("creator")
    if creator is not None:
        creator = sys.intern(creator)
        if not is_account_name(creator):
            raise ValueError(f"bad creator name: {creator!r}")
    permissions = {}
    for pname, p in obj.get("permissions", {}).items():
        permissions[pname] = Permission(
            threshold=int(p["threshold"]),
            key_weights=tuple((k, int(w)) for k, w in p.get("key_weights", [])),
            account_weights=tuple(
                (a, q, int(w)) for a, q, w in p.get("account_weights", [])
            ),
        )
    return AccountRecord(
        name=name,
        creator=creator,
        created_at=parse_timestamp(obj["created_at"]),
        permissions=permissions,
        has_contract=bool(obj.get("has_contract", False)),
    )


def parse_account_snapshot(path) -> SnapshotResult:
    """Parse the account snapshot and verify the creator relation is a
    forest. Duplicate names and creator cycles are fatal; a child created
    before its creator merely warns (clock skew on real data)."""
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read snapshot {path}: {exc}") from exc

    accounts = {}
    warnings = []
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = decode_account(json.loads(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise IngestError(f"snapshot line {lineno}: {exc}") from exc
            if record.name in accounts:
                raise IngestError(f"duplicate account name: {record.name}")
            accounts[record.name] = record

    # Cycle check over creator pointers (creator may legitimately be
    # missing from the snapshot on partial captures; that breaks the chain).
    state = {}  # 0 = in progress, 1 = done
    for start in accounts:
        chain = []
        node = start
        while node is not None and node in accounts and node not in state:
            state[node] = 0
            chain.append(node)
            node = accounts[node].creator
            if node is not None and state.get(node) == 0:
                raise IngestError(f"creator cycle through account {node!r}")
        for n in chain:
            state[n] = 1

    for record in accounts.values():
        creator = accounts.get(record.creator) if record.creator else None
        if creator is not None and record.created_at < creator.created_at:
            warnings.append(
                f"{record.name} created before its creator {creator.name} "
                "(clock skew tolerated)"
            )
    return SnapshotResult(accounts, warnings)


def write_account_snapshot(path, accounts) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in accounts.values() if isinstance(accounts, dict) else accounts:
            fh.write(json.dumps(record.to_json(), sort_keys=True))
            fh.write("\n")
