"""eosio.code permission audit: replay updateauth history and compare
grant weights against thresholds and key ownership."""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .model import UpdateAuthPayload

CODE_PERMISSION = "eosio.code"


@dataclass(frozen=True)
class PermissionGrant:
    granter: str
    grantee: str
    grantee_permission: str
    linked_permission: str  # permission the grant is attached to
    weight: int
    threshold: int
    day: int
    action_seq: int


@dataclass
class MisuseFinding:
    grant: PermissionGrant
    effective: bool  # weight >= threshold
    cross_key: bool | None  # None when the grantee is unknown
    severity: str  # misuse | partial | benign
    note: str = ""


def scan_updateauth(actions, window):
    """Replay updateauth actions in global_seq order and return the final
    active eosio.code grants, one per surviving account-weight entry.

    A later updateauth on the same (account, permission) supersedes the
    earlier authority entirely, so revocations fall out naturally.
    Malformed authority payloads are skipped with a diagnostic.
    """
    state = {}  # (granter, linked_permission) -> (payload, day, seq)
    diagnostics = []
    for record in sorted(
        (r for r in actions if r.action_name == "updateauth" and r.kind != "notification"),
        key=lambda r: r.global_seq,
    ):
        payload = record.payload
        if not isinstance(payload, UpdateAuthPayload):
            diagnostics.append(
                (record.global_seq, "updateauth with undecodable authority payload")
            )
            continue
        state[(payload.account, payload.permission)] = (
            payload,
            window.day_index(record.timestamp),
            record.global_seq,
        )

    grants = []
    for (granter, linked), (payload, day, seq) in sorted(state.items()):
        for grantee, grantee_perm, weight in payload.account_weights:
            if grantee_perm != CODE_PERMISSION:
                continue
            grants.append(
                PermissionGrant(
                    granter=granter,
                    grantee=grantee,
                    grantee_permission=grantee_perm,
                    linked_permission=linked,
                    weight=weight,
                    threshold=payload.threshold,
                    day=day,
                    action_seq=seq,
                )
            )
    return grants, diagnostics


def detect_misuse(grants, snapshot):
    """Classify each grant.

    misuse: keys disjoint and the weight alone meets the threshold.
    partial: keys disjoint but several authorizers would be needed, or
    the grantee is missing from the snapshot (cross_key unknown).
    benign: granter and grantee share a public key (same owner).
    """
    accounts = snapshot.accounts if hasattr(snapshot, "accounts") else snapshot
    findings = []
    for grant in grants:
        effective = grant.weight >= grant.threshold
        granter = accounts.get(grant.granter)
        grantee = accounts.get(grant.grantee)
        if grantee is None or granter is None:
            findings.append(
                MisuseFinding(grant, effective, None, "partial",
                              note="grantee or granter missing from snapshot")
            )
            continue
        cross_key = not (granter.keys() & grantee.keys())
        if not cross_key:
            severity = "benign"
        elif effective:
            severity = "misuse"
        else:
            severity = "partial"
        findings.append(MisuseFinding(grant, effective, cross_key, severity))
    return findings


def account_pair_summary(findings):
    """Deduplicated (granter, grantee) pairs per severity; the per-action
    and per-pair counts are both reported because the two granularities
    answer different questions."""
    pairs = {}
    for f in findings:
        key = (f.grant.granter, f.grant.grantee)
        current = pairs.get(key)
        order = {"misuse": 2, "partial": 1, "benign": 0}
        if current is None or order[f.severity] > order[current]:
            pairs[key] = f.severity
    return pairs


def export_findings_csv(findings, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["granter", "grantee", "linked_permission", "weight", "threshold",
             "severity", "action_seq"]
        )
        for f in sorted(findings, key=lambda f: f.grant.action_seq):
            writer.writerow(
                [f.grant.granter, f.grant.grantee, f.grant.linked_permission,
                 f.grant.weight, f.grant.threshold, f.severity, f.grant.action_seq]
            )
