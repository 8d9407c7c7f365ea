"""Attack detection: fake EOS transfer/notice patterns and the staged
profit scan for predictable-state exploits, plus evidence bundles."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path

from .errors import BundleError
from .model import (
    OFFICIAL_TOKEN_CONTRACT,
    TransferPayload,
    format_timestamp,
    is_genuine_transfer,
    parse_timestamp,
)

INF_RATIO = float("inf")


@dataclass(frozen=True)
class ScanConfig:
    w1: Decimal = Decimal(400)  # minimum window profit (EOS)
    w2: float = 1.2  # minimum received/sent ratio
    w3: float = 0.9  # minimum profit share of lifetime inflow from the DApp

    def __post_init__(self):
        if self.w1 <= 0:
            raise ValueError("w1 must be positive")
        if self.w2 <= 1:
            raise ValueError("w2 must exceed 1")
        if not 0 < self.w3 <= 1:
            raise ValueError("w3 must be in (0, 1]")


@dataclass
class AttackFinding:
    attacker: str
    victim: str
    kind: str  # fake_transfer | fake_notice | predictable_state
    window_start: datetime
    window_end: datetime
    profit: Decimal
    profitability_ratio: float
    evidence: list  # action_seq list, sorted
    signals: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "attacker": self.attacker,
            "victim": self.victim,
            "kind": self.kind,
            "window_start": format_timestamp(self.window_start),
            "window_end": format_timestamp(self.window_end),
            "profit": str(self.profit),
            "profitability_ratio": (
                "inf" if self.profitability_ratio == INF_RATIO
                else self.profitability_ratio
            ),
            "evidence": self.evidence,
            "signals": self.signals,
        }


@dataclass(frozen=True, slots=True)
class TransferEvent:
    seq: int
    timestamp: datetime
    src: str
    dst: str
    amount: Decimal


def genuine_transfer_events(actions):
    return [
        TransferEvent(r.global_seq, r.timestamp, r.payload.src, r.payload.dst,
                      r.payload.quantity.amount)
        for r in actions
        if is_genuine_transfer(r)
    ]


def _day_bounds(ts: datetime):
    start = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    return start, start + timedelta(days=1) - timedelta(seconds=1)


def _same_day_net(events_by_day, dapp, account, day):
    """(net profit of `account` vs `dapp` on `day`, supporting seqs)."""
    received = Decimal(0)
    sent = Decimal(0)
    seqs = []
    for ev in events_by_day.get(day, ()):
        if ev.src == dapp and ev.dst == account:
            received += ev.amount
            seqs.append(ev.seq)
        elif ev.src == account and ev.dst == dapp:
            sent += ev.amount
            seqs.append(ev.seq)
    return received - sent, seqs


def _index_events_by_day(events):
    by_day = {}
    for ev in events:
        by_day.setdefault(ev.timestamp.date(), []).append(ev)
    return by_day


def detect_fake_transfer(actions, registry):
    """Transfer-named actions carrying the EOS symbol but executed by a
    contract other than eosio.token, aimed at a DApp account, corroborated
    by same-day profit from that DApp."""
    events_by_day = _index_events_by_day(genuine_transfer_events(actions))
    findings = []
    seen = set()
    for record in actions:
        if (
            record.action_name != "transfer"
            or record.kind == "notification"
            or record.executing_contract == OFFICIAL_TOKEN_CONTRACT
            or not isinstance(record.payload, TransferPayload)
            or record.payload.quantity.symbol != "EOS"
        ):
            continue
        attacker = record.payload.src
        victim = record.payload.dst
        if victim not in registry.dapp_accounts:
            continue
        day = record.timestamp.date()
        if (attacker, victim, day) in seen:
            continue
        profit, seqs = _same_day_net(events_by_day, victim, attacker, day)
        if profit <= 0:
            continue
        seen.add((attacker, victim, day))
        start, end = _day_bounds(record.timestamp)
        findings.append(
            AttackFinding(
                attacker=attacker,
                victim=victim,
                kind="fake_transfer",
                window_start=start,
                window_end=end,
                profit=profit,
                profitability_ratio=INF_RATIO,
                evidence=sorted(set(seqs) | {record.global_seq}),
            )
        )
    findings.sort(key=lambda f: (f.attacker, f.window_start))
    return findings


def detect_fake_notice(actions, registry):
    """Genuine eosio.token transfer notifications delivered to a DApp
    account that is neither side of the transfer, corroborated by
    same-day profit for the notification's authorizing actor."""
    has_notifications = any(r.kind == "notification" for r in actions)
    if not has_notifications:
        return [], "insufficient data: no notification records in trace"
    events_by_day = _index_events_by_day(genuine_transfer_events(actions))
    findings = []
    seen = set()
    for record in actions:
        if (
            record.kind != "notification"
            or record.action_name != "transfer"
            or record.executing_contract != OFFICIAL_TOKEN_CONTRACT
            or not isinstance(record.payload, TransferPayload)
            or record.payload.quantity.symbol != "EOS"
        ):
            continue
        victim = record.notified
        if victim not in registry.dapp_accounts:
            continue
        if victim in (record.payload.src, record.payload.dst):
            continue
        attacker = record.actor
        day = record.timestamp.date()
        if (attacker, victim, day) in seen:
            continue
        profit, seqs = _same_day_net(events_by_day, victim, attacker, day)
        if profit <= 0:
            continue
        seen.add((attacker, victim, day))
        start, end = _day_bounds(record.timestamp)
        findings.append(
            AttackFinding(
                attacker=attacker,
                victim=victim,
                kind="fake_notice",
                window_start=start,
                window_end=end,
                profit=profit,
                profitability_ratio=INF_RATIO,
                evidence=sorted(set(seqs) | {record.global_seq}),
            )
        )
    findings.sort(key=lambda f: (f.attacker, f.window_start))
    return findings, None


@dataclass
class SuspiciousWindow:
    account: str
    start: datetime
    end: datetime
    profit: Decimal
    ratio: float
    granularity: str  # day | hour
    # counterparty -> [received, sent] within the window
    flows: dict
    seqs: dict  # counterparty -> transfer seqs within the window


def profit_scan(events, config: ScanConfig, granularities=("day", "hour")):
    """Step 1: flag (account, window) pairs whose net inflow exceeds W1
    with a received/sent ratio above W2. Pure inflow (sent = 0) counts
    with an infinite-ratio sentinel. Windows are calendar-aligned UTC
    days and hours."""
    buckets = {}  # (account, granularity, bucket_start) -> {cp: [recv, sent, seqs]}

    def touch(account, cp, ev, received):
        for gran in granularities:
            if gran == "day":
                start = ev.timestamp.replace(hour=0, minute=0, second=0,
                                             microsecond=0)
            else:
                start = ev.timestamp.replace(minute=0, second=0, microsecond=0)
            bucket = buckets.setdefault((account, gran, start), {})
            cell = bucket.get(cp)
            if cell is None:
                cell = bucket[cp] = [Decimal(0), Decimal(0), []]
            cell[0 if received else 1] += ev.amount
            cell[2].append(ev.seq)

    for ev in events:
        touch(ev.dst, ev.src, ev, True)
        touch(ev.src, ev.dst, ev, False)

    out = []
    for (account, gran, start), flows in sorted(buckets.items()):
        received = sum((c[0] for c in flows.values()), Decimal(0))
        sent = sum((c[1] for c in flows.values()), Decimal(0))
        profit = received - sent
        if profit <= config.w1:
            continue
        if sent == 0:
            ratio = INF_RATIO
        else:
            ratio = float(received / sent)
            if ratio <= config.w2:
                continue
        span = timedelta(days=1) if gran == "day" else timedelta(hours=1)
        out.append(
            SuspiciousWindow(
                account=account,
                start=start,
                end=start + span - timedelta(seconds=1),
                profit=profit,
                ratio=ratio,
                granularity=gran,
                flows={cp: (c[0], c[1]) for cp, c in flows.items()},
                seqs={cp: list(c[2]) for cp, c in flows.items()},
            )
        )
    return out


def liveness_filter(suspicious, events, registry, config: ScanConfig):
    """Step 2: attribute each flagged window to the DApp counterparty
    contributing the most profit, then keep accounts whose attributed
    profit dominates (> W3) the lifetime inflow from that DApp."""
    lifetime_in = {}  # (account, dapp) -> total received ever
    for ev in events:
        if ev.src in registry.dapp_accounts:
            key = (ev.dst, ev.src)
            lifetime_in[key] = lifetime_in.get(key, Decimal(0)) + ev.amount

    attributed = {}  # (account, dapp) -> {seq set}
    for window in suspicious:
        best_dapp = None
        best_profit = Decimal(0)
        for cp, (received, sent) in sorted(window.flows.items()):
            if cp not in registry.dapp_accounts:
                continue
            net = received - sent
            if net > best_profit:
                best_profit = net
                best_dapp = cp
        if best_dapp is None:
            continue
        attributed.setdefault((window.account, best_dapp), set()).update(
            window.seqs[best_dapp]
        )

    events_by_seq = {ev.seq: ev for ev in events}
    results = []
    for (account, dapp), seqs in sorted(attributed.items()):
        total_in = lifetime_in.get((account, dapp), Decimal(0))
        if total_in == 0:
            continue  # nothing ever received from the DApp; diagnostic case
        received = Decimal(0)
        sent = Decimal(0)
        times = []
        for seq in seqs:
            ev = events_by_seq[seq]
            times.append(ev.timestamp)
            if ev.src == dapp:
                received += ev.amount
            else:
                sent += ev.amount
        profit = received - sent
        if profit <= 0:
            continue
        p = float(profit / total_in)
        if p <= config.w3:
            continue
        ratio = INF_RATIO if sent == 0 else float(received / sent)
        results.append(
            AttackFinding(
                attacker=account,
                victim=dapp,
                kind="predictable_state",
                window_start=min(times),
                window_end=max(times),
                profit=profit,
                profitability_ratio=ratio,
                evidence=sorted(seqs),
            )
        )
    results.sort(key=lambda f: (f.attacker, f.window_start))
    return results


def load_rollback_log(path):
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            entries.append(
                (obj["tx_id"], obj["actor"], parse_timestamp(obj["timestamp"]))
            )
    return entries


def auxiliary_signals(account, actions, rollback_entries=None):
    """Step 3, automated portion: counts that support analyst review.
    rollback_count is None (unavailable) without an off-chain log, since
    rolled-back transactions never reach the chain."""
    signals = {}
    if rollback_entries is None:
        signals["rollback_count"] = None
    else:
        signals["rollback_count"] = sum(
            1 for _, actor, _ in rollback_entries if actor == account
        )
    signals["deferred_count"] = sum(
        1 for r in actions if r.kind == "deferred" and r.actor == account
    )
    return signals


def scan_attacks(actions, registry, config: ScanConfig,
                 rollback_entries=None):
    """Run every detector and return deterministic, signal-annotated
    findings plus scan notes."""
    events = genuine_transfer_events(actions)
    notes = []
    fake_transfer = detect_fake_transfer(actions, registry)
    fake_notice, notice_note = detect_fake_notice(actions, registry)
    if notice_note:
        notes.append(notice_note)
    suspicious = profit_scan(events, config)
    predictable = liveness_filter(suspicious, events, registry, config)
    findings = fake_transfer + fake_notice + predictable
    for finding in findings:
        finding.signals = auxiliary_signals(
            finding.attacker, actions, rollback_entries
        )
    findings.sort(key=lambda f: (f.attacker, f.window_start, f.kind))
    return findings, notes


# ---------------------------------------------------------------------------
# Evidence bundles


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def evidence_bundle(finding: AttackFinding, actions_by_seq, emfg, out_dir):
    """Write a self-contained evidence directory: the finding, every
    referenced action verbatim, the attacker/victim money-flow sub-edge
    list, and a SHA-256 manifest. Missing referenced actions are fatal."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    missing = [seq for seq in finding.evidence if seq not in actions_by_seq]
    if missing:
        raise BundleError(f"evidence actions missing from trace: {missing[:5]}")

    finding_path = out_dir / "finding.json"
    finding_path.write_text(json.dumps(finding.to_json(), sort_keys=True, indent=2))

    actions_path = out_dir / "actions.ndjson"
    with actions_path.open("w") as fh:
        for seq in finding.evidence:
            fh.write(json.dumps(actions_by_seq[seq].to_json(), sort_keys=True))
            fh.write("\n")

    flow_path = out_dir / "flow.csv"
    with flow_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["from", "to", "day", "weight", "count"])
        for src, dst in ((finding.victim, finding.attacker),
                         (finding.attacker, finding.victim)):
            for day, (weight, count) in sorted(emfg.edge_days(src, dst).items()):
                writer.writerow([src, dst, day, str(weight), count])

    manifest = {
        name: _sha256(out_dir / name)
        for name in ("finding.json", "actions.ndjson", "flow.csv")
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2)
    )
    return out_dir


def verify_bundle(bundle_dir):
    bundle_dir = Path(bundle_dir)
    manifest_path = bundle_dir / "manifest.json"
    if not manifest_path.exists():
        raise BundleError(f"missing manifest in {bundle_dir}")
    manifest = json.loads(manifest_path.read_text())
    for name, digest in manifest.items():
        path = bundle_dir / name
        if not path.exists():
            raise BundleError(f"bundle file missing: {name}")
        if _sha256(path) != digest:
            raise BundleError(f"bundle file tampered: {name}")
    return True


def write_findings(path, findings):
    with open(path, "w", encoding="utf-8") as fh:
        for finding in findings:
            fh.write(json.dumps(finding.to_json(), sort_keys=True))
            fh.write("\n")
