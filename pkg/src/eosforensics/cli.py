"""Command-line pipeline driver.

Every stage reads plain files and writes plain files into --out, so
stages are resumable and the artifacts are portable. Exit codes: 0 ok,
1 findings present (CI gating), 2 error.

Flag defaults can be overridden with EOSFOR_<FLAG> environment
variables (e.g. EOSFOR_MIN_CHILDREN=40).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from datetime import date
from decimal import Decimal
from pathlib import Path

from . import attacks as attacks_mod
from . import botnet, forest, graphs, metrics, permissions, synthgen
from .errors import ForensicsError
from .model import (
    ObservationWindow,
    Registry,
    extract_transfers,
    parse_account_snapshot,
    parse_action_trace,
)

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_ERROR = 2


@dataclass
class RunConfig:
    trace: str | None = None
    snapshot: str | None = None
    dapps: str | None = None
    incentives: str | None = None
    labels: str | None = None
    sellers: str | None = None
    rollback_log: str | None = None
    window_start: date = date(2018, 6, 9)
    days: int = 357
    out: str = "out"
    seed: int = 0
    threads: int = 1
    min_children: int = 30
    w1: float = 400.0
    w2: float = 1.2
    w3: float = 0.9
    click_ratio: float = 0.95
    bonus_fraction: float = 0.5

    @property
    def window(self) -> ObservationWindow:
        from datetime import timedelta

        return ObservationWindow(
            self.window_start, self.window_start + timedelta(days=self.days - 1)
        )


def _env_default(flag, fallback):
    return os.environ.get("EOSFOR_" + flag.upper().replace("-", "_"), fallback)


def _add_common(p, *, trace=False, snapshot=False, registry=False):
    p.add_argument("--out", default=_env_default("out", "out"),
                   help="output directory (default: out)")
    p.add_argument("--window-start", default=_env_default("window_start", "2018-06-09"),
                   help="first UTC day of the observation window")
    p.add_argument("--days", type=int, default=int(_env_default("days", 357)),
                   help="window length in days")
    p.add_argument("--threads", type=int, default=int(_env_default("threads", 1)),
                   help="parallelism bound (results are identical for any N)")
    if trace:
        p.add_argument("--trace", required=True, help="action trace (NDJSON)")
    if snapshot:
        p.add_argument("--snapshot", required=True, help="account snapshot (NDJSON)")
    if registry:
        p.add_argument("--dapps", help="dapps.csv registry")
        p.add_argument("--incentives", help="incentives.csv registry")
        p.add_argument("--labels", help="labels.csv registry")
        p.add_argument("--sellers", help="sellers.csv registry")


def _config_from(args) -> RunConfig:
    cfg = RunConfig()
    for name in vars(cfg):
        if hasattr(args, name):
            setattr(cfg, name, getattr(args, name))
    if hasattr(args, "window_start"):
        cfg.window_start = date.fromisoformat(args.window_start)
    return cfg


def _registry_from(args) -> Registry:
    return Registry.load(
        dapps=getattr(args, "dapps", None),
        incentives=getattr(args, "incentives", None),
        labels=getattr(args, "labels", None),
        sellers=getattr(args, "sellers", None),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    result = parse_action_trace(args.trace, cfg.window)
    snapshot = parse_account_snapshot(args.snapshot)
    transfers = extract_transfers(result.records, cfg.window)
    summary = {
        "actions": len(result.records),
        "dropped_out_of_window": result.dropped_out_of_window,
        "malformed_lines": len(result.diagnostics),
        "accounts": len(snapshot),
        "snapshot_warnings": snapshot.warnings,
        "genuine_transfers": len(transfers),
        "transfer_total": str(sum((t.amount for t in transfers), Decimal(0))),
    }
    _dump(out / "ingest.json", summary)
    with (out / "ingest_diagnostics.ndjson").open("w") as fh:
        for lineno, message in result.diagnostics:
            fh.write(json.dumps({"line": lineno, "message": message}, sort_keys=True))
            fh.write("\n")
    print(f"parsed {summary['actions']} actions, {summary['accounts']} accounts, "
          f"{summary['genuine_transfers']} genuine transfers "
          f"({summary['malformed_lines']} malformed lines)")
    return EXIT_OK


def _load_graphs(args, cfg):
    result = parse_action_trace(args.trace, cfg.window)
    snapshot = parse_account_snapshot(args.snapshot)
    transfers = extract_transfers(result.records, cfg.window)
    emfg = graphs.build_emfg(transfers)
    eacg = graphs.build_eacg(snapshot, cfg.window)
    ecig = graphs.build_ecig(result.records, cfg.window)
    return result.records, snapshot, emfg, eacg, ecig


def cmd_graph_build(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    _, snapshot, emfg, eacg, ecig = _load_graphs(args, cfg)
    views = {
        "emfg": graphs.emfg_to_digraph(emfg),
        "eacg": graphs.eacg_to_digraph(eacg),
        "ecig": graphs.ecig_to_digraph(ecig),
    }
    for name, view in views.items():
        graphs.export_edges_csv(view, out / f"{name}_edges.csv")
        for direction in ("in", "out"):
            hist = graphs.degree_histogram(view, direction)
            graphs.export_histogram_csv(hist, out / f"{name}_{direction}_degree.csv")
    silent = sorted(graphs.silent_accounts(emfg, ecig, snapshot))
    (out / "silent_accounts.txt").write_text("".join(s + "\n" for s in silent))
    summary = {
        name: {"nodes": view.node_count(), "edges": view.edge_count()}
        for name, view in views.items()
    }
    summary["silent_accounts"] = len(silent)
    summary["eacg_max_depth"] = eacg.max_depth()
    _dump(out / "graphs.json", summary)
    for name in ("emfg", "eacg", "ecig"):
        print(f"{name}: {summary[name]['nodes']} nodes, {summary[name]['edges']} edges")
    print(f"silent accounts: {len(silent)}")
    return EXIT_OK


def cmd_metrics(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    _, _, emfg, eacg, ecig = _load_graphs(args, cfg)
    view = {
        "emfg": graphs.emfg_to_digraph(emfg),
        "eacg": graphs.eacg_to_digraph(eacg),
        "ecig": graphs.ecig_to_digraph(ecig),
    }[args.graph]
    report = metrics.compute_metrics(view)
    (out / f"metrics_{args.graph}.json").write_text(report.to_json() + "\n")
    ranks = metrics.pagerank(view)
    top = sorted(ranks.items(), key=lambda kv: (-kv[1], kv[0]))[: args.top]
    with (out / f"pagerank_{args.graph}.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account", "rank"])
        for account, rank in top:
            writer.writerow([account, repr(rank)])
    print(report.to_text())
    return EXIT_OK


def cmd_bots_detect(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    registry = _registry_from(args)
    _, snapshot, emfg, eacg, ecig = _load_graphs(args, cfg)

    universe = botnet.contract_universe(ecig)
    contract_index = {c: i for i, c in enumerate(universe)}
    silent = graphs.silent_accounts(emfg, ecig, snapshot)
    cache = {}

    def vector_for(account):
        if account in silent:
            return None
        if account not in cache:
            cache[account] = botnet.behavior_vectors(
                account, emfg, ecig, cfg.window, contract_index
            )
        return cache[account]

    bot_dists = []
    for controller, members in registry.labeled_bot_communities:
        vectors = [v for v in map(vector_for, sorted(members))
                   if v is not None and not v.is_zero()]
        if not vectors:
            continue
        dist_s, dist_t = botnet.group_similarity(vectors)
        bot_dists.append((dist_t, dist_s))
    threshold = botnet.calibrate_threshold(bot_dists)
    _dump(out / "bot_threshold.json", threshold.to_json())

    flagged, stats = botnet.detect_communities(
        eacg, vector_for, threshold, min_children=cfg.min_children
    )
    _dump(
        out / "bot_communities.json",
        [
            {
                "controller": c.controller,
                "members": len(c.members),
                "measured": len(c.measured),
                "dist_t": None if c.dist_t != c.dist_t else c.dist_t,
                "dist_s": None if c.dist_s != c.dist_s else c.dist_s,
                "flagged": c.flagged,
                "skipped_reason": c.skipped_reason,
            }
            for c in stats
        ],
    )

    flagged_accounts = sorted({m for c in flagged for m in c.measured})
    merged = botnet.merge_by_pubkey(flagged_accounts, snapshot)
    _dump(out / "bot_pubkey_groups.json", merged)

    verdicts = []
    for community in flagged:
        for member in community.measured:
            category = botnet.categorize(
                member, emfg, ecig, snapshot, registry, merged
            )
            verdicts.append(
                botnet.BotVerdict(member, True, "community",
                                  community_id=community.controller,
                                  category=category)
            )
    verdicts.sort(key=lambda v: v.account)
    botnet.write_verdicts(out / "bot_verdicts.ndjson", verdicts)
    print(f"{len(flagged)}/{len(stats)} communities flagged, "
          f"{len(verdicts)} bot accounts")
    return EXIT_FINDINGS if verdicts else EXIT_OK


def cmd_bots_classify(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    registry = _registry_from(args)
    _, snapshot, emfg, eacg, ecig = _load_graphs(args, cfg)

    labeled_bot = {m for _, ms in registry.labeled_bot_communities for m in ms}
    labeled_normal = {m for _, ms in registry.labeled_normal_communities for m in ms}
    if not labeled_bot or not labeled_normal:
        print("error: --labels must provide both bot and normal accounts",
              file=sys.stderr)
        return EXIT_ERROR

    cohorts = botnet.sibling_counts(snapshot)

    def features_for(account):
        record = snapshot.accounts[account]
        return botnet.extract_features(
            account, emfg, ecig, eacg, snapshot, cfg.window,
            siblings=botnet.siblings_for(record, cohorts),
        ).values

    labeled = sorted(a for a in labeled_bot | labeled_normal if a in snapshot)
    X = [features_for(a) for a in labeled]
    y = [1 if a in labeled_bot else 0 for a in labeled]
    result = forest.train_classifier(X, y, seed=cfg.seed)
    result.model.save(out / "bot_model.json")
    _dump(
        out / "bot_training.json",
        {
            "test_accuracy": result.test_accuracy,
            "best_params": result.best_params,
            "labeled": len(labeled),
        },
    )

    silent = graphs.silent_accounts(emfg, ecig, snapshot)
    candidates = sorted(
        a for a in snapshot.accounts if a not in silent and a not in labeled_bot
        and a not in labeled_normal
    )
    verdicts = []
    if candidates:
        probs = result.model.predict_prob([features_for(a) for a in candidates])
        for account, prob in zip(candidates, probs):
            if prob >= 0.5:
                verdicts.append(
                    botnet.BotVerdict(account, True, "classifier",
                                      category=botnet.categorize(
                                          account, emfg, ecig, snapshot, registry))
                )
    botnet.write_verdicts(out / "bot_classified.ndjson", verdicts)
    print(f"held-out accuracy {result.test_accuracy:.4f}, "
          f"{len(verdicts)}/{len(candidates)} candidates classified as bots")
    return EXIT_FINDINGS if verdicts else EXIT_OK


def cmd_perms_audit(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    result = parse_action_trace(args.trace, cfg.window)
    snapshot = parse_account_snapshot(args.snapshot)
    grants, diagnostics = permissions.scan_updateauth(result.records, cfg.window)
    findings = permissions.detect_misuse(grants, snapshot)
    permissions.export_findings_csv(findings, out / "perm_findings.csv")
    pairs = permissions.account_pair_summary(findings)
    counts = {"misuse": 0, "partial": 0, "benign": 0}
    for f in findings:
        counts[f.severity] += 1
    _dump(
        out / "perm_summary.json",
        {
            "grants": len(grants),
            "by_severity": counts,
            "distinct_pairs": len(pairs),
            "diagnostics": len(diagnostics),
        },
    )
    print(f"{len(grants)} eosio.code grants: "
          f"{counts['misuse']} misuse, {counts['partial']} partial, "
          f"{counts['benign']} benign")
    return EXIT_FINDINGS if counts["misuse"] else EXIT_OK


def cmd_attacks_scan(args):
    cfg = _config_from(args)
    out = _out_dir(args)
    registry = _registry_from(args)
    result = parse_action_trace(args.trace, cfg.window)
    config = attacks_mod.ScanConfig(
        w1=Decimal(str(cfg.w1)), w2=cfg.w2, w3=cfg.w3
    )
    rollback = None
    if getattr(args, "rollback_log", None):
        rollback = attacks_mod.load_rollback_log(args.rollback_log)
    findings, notes = attacks_mod.scan_attacks(
        result.records, registry, config, rollback_entries=rollback
    )
    attacks_mod.write_findings(out / "attack_findings.ndjson", findings)
    _dump(out / "attack_notes.json", notes)
    if args.bundles and findings:
        actions_by_seq = {r.global_seq: r for r in result.records}
        emfg = graphs.build_emfg(extract_transfers(result.records, cfg.window))
        for i, finding in enumerate(findings):
            attacks_mod.evidence_bundle(
                finding, actions_by_seq, emfg,
                out / "bundles" / f"{i:04d}-{finding.kind}-{finding.attacker}",
            )
    print(f"{len(findings)} attack findings "
          f"({sum(1 for f in findings if f.kind == 'fake_transfer')} fake-transfer, "
          f"{sum(1 for f in findings if f.kind == 'fake_notice')} fake-notice, "
          f"{sum(1 for f in findings if f.kind == 'predictable_state')} predictable-state)")
    for note in notes:
        print(f"note: {note}")
    return EXIT_FINDINGS if findings else EXIT_OK


def cmd_synth_generate(args):
    out = Path(args.out)
    bots = []
    for spec in args.bots or []:
        parts = spec.split(":")
        if len(parts) < 2:
            print(f"error: bad --bots spec {spec!r} (want category:size[:cal])",
                  file=sys.stderr)
            return EXIT_ERROR
        bots.append(
            synthgen.BotCommunitySpec(
                size=int(parts[1]), category=parts[0],
                calibration=len(parts) > 2 and parts[2] == "cal",
            )
        )
    attack_specs = []
    for spec in args.attacks or []:
        parts = spec.split(":")
        if len(parts) != 3:
            print(f"error: bad --attacks spec {spec!r} (want kind:profit:day)",
                  file=sys.stderr)
            return EXIT_ERROR
        attack_specs.append(
            synthgen.AttackSpec(kind=parts[0], profit_eos=int(parts[1]),
                                day=int(parts[2]))
        )
    misuse = synthgen.MisusePlan()
    if args.misuse:
        kwargs = {}
        for part in args.misuse.split(","):
            k, v = part.split(":")
            kwargs[k] = int(v)
        misuse = synthgen.MisusePlan(**kwargs)
    config = synthgen.ScenarioConfig(
        seed=args.seed,
        day_count=args.days,
        normal_account_count=args.users,
        service_count=args.services,
        bot_community_specs=bots,
        attack_specs=attack_specs,
        misuse_plan=misuse,
        background_transfer_rate=args.rate,
        silent_account_count=args.silent,
        deep_chain_length=args.deep_chain,
    )
    manifest = synthgen.generate(config, out)
    print(f"generated {manifest['action_count']} actions, "
          f"{len(manifest['users'])} users, "
          f"{len(manifest['bot_communities'])} bot communities, "
          f"{len(manifest['attacks'])} attacks -> {out}")
    return EXIT_OK


def cmd_report(args):
    out = _out_dir(args)
    lines = []

    def section(title):
        lines.append(title)
        lines.append("-" * len(title))

    metric_rows = []
    for name in ("emfg", "eacg", "ecig"):
        path = out / f"metrics_{name}.json"
        if path.exists():
            obj = json.loads(path.read_text())
            metric_rows.append((name, obj))
    if metric_rows:
        section("Graph metrics")
        fields = ["node_count", "edge_count", "clustering", "assortativity",
                  "pearson_in_out", "scc_count", "largest_scc", "wcc_count",
                  "largest_wcc"]
        with (out / "report_metrics.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["graph"] + fields)
            for name, obj in metric_rows:
                writer.writerow([name] + [obj.get(f) for f in fields])
        for name, obj in metric_rows:
            lines.append(f"[{name}]")
            for f in fields:
                v = obj.get(f)
                lines.append(f"  {f}: {'/' if v is None else v}")
        lines.append("")

    verdicts_path = out / "bot_verdicts.ndjson"
    if verdicts_path.exists():
        section("Bot accounts by category")
        counts = {}
        with verdicts_path.open() as fh:
            for line in fh:
                v = json.loads(line)
                counts[v["category"]] = counts.get(v["category"], 0) + 1
        with (out / "report_bots.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["category", "accounts"])
            for cat in sorted(counts):
                writer.writerow([cat, counts[cat]])
        for cat in sorted(counts):
            lines.append(f"  {cat}: {counts[cat]}")
        lines.append(f"  total: {sum(counts.values())}")
        lines.append("")

    perm_path = out / "perm_summary.json"
    if perm_path.exists():
        section("Permission audit")
        obj = json.loads(perm_path.read_text())
        for sev, n in sorted(obj["by_severity"].items()):
            lines.append(f"  {sev}: {n}")
        lines.append(f"  distinct pairs: {obj['distinct_pairs']}")
        lines.append("")

    attacks_path = out / "attack_findings.ndjson"
    if attacks_path.exists():
        section("Attack findings")
        rows = []
        with attacks_path.open() as fh:
            for line in fh:
                rows.append(json.loads(line))
        with (out / "report_attacks.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", "attacker", "victim", "profit",
                             "window_start", "window_end"])
            for r in rows:
                writer.writerow([r["kind"], r["attacker"], r["victim"],
                                 r["profit"], r["window_start"], r["window_end"]])
        by_kind = {}
        for r in rows:
            by_kind.setdefault(r["kind"], []).append(r)
        for kind in sorted(by_kind):
            total = sum(Decimal(r["profit"]) for r in by_kind[kind])
            lines.append(f"  {kind}: {len(by_kind[kind])} findings, "
                         f"{total} EOS profit")
        lines.append("")

    if not lines:
        print("error: no stage outputs found under --out; run other stages first",
              file=sys.stderr)
        return EXIT_ERROR
    text = "\n".join(lines).rstrip() + "\n"
    (out / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="eosforensics",
        description="EOSIO-style chain forensics: graphs, metrics, bots, "
                    "permissions, attacks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse and summarize inputs")
    _add_common(p, trace=True, snapshot=True)
    p.set_defaults(func=cmd_ingest)

    graph = sub.add_parser("graph", help="graph construction")
    gsub = graph.add_subparsers(dest="subcommand", required=True)
    p = gsub.add_parser("build", help="build EMFG/EACG/ECIG and export edges")
    _add_common(p, trace=True, snapshot=True)
    p.set_defaults(func=cmd_graph_build)

    p = sub.add_parser("metrics", help="network metrics for one graph")
    _add_common(p, trace=True, snapshot=True)
    p.add_argument("--graph", choices=("emfg", "eacg", "ecig"), default="emfg")
    p.add_argument("--top", type=int, default=50, help="pagerank rows to keep")
    p.set_defaults(func=cmd_metrics)

    bots = sub.add_parser("bots", help="bot detection and classification")
    bsub = bots.add_subparsers(dest="subcommand", required=True)
    p = bsub.add_parser("detect", help="community-level detection")
    _add_common(p, trace=True, snapshot=True, registry=True)
    p.add_argument("--min-children", type=int,
                   default=int(_env_default("min_children", 30)))
    p.set_defaults(func=cmd_bots_detect)
    p = bsub.add_parser("classify", help="per-account classifier")
    _add_common(p, trace=True, snapshot=True, registry=True)
    p.add_argument("--seed", type=int, default=int(_env_default("seed", 0)))
    p.set_defaults(func=cmd_bots_classify)

    perms = sub.add_parser("perms", help="permission audit")
    psub = perms.add_subparsers(dest="subcommand", required=True)
    p = psub.add_parser("audit", help="replay updateauth and flag eosio.code misuse")
    _add_common(p, trace=True, snapshot=True)
    p.set_defaults(func=cmd_perms_audit)

    att = sub.add_parser("attacks", help="attack scanning")
    asub = att.add_subparsers(dest="subcommand", required=True)
    p = asub.add_parser("scan", help="fake transfer/notice + profit scan")
    _add_common(p, trace=True, registry=True)
    p.add_argument("--rollback-log", help="optional off-chain rollback NDJSON")
    p.add_argument("--w1", type=float, default=float(_env_default("w1", 400)))
    p.add_argument("--w2", type=float, default=float(_env_default("w2", 1.2)))
    p.add_argument("--w3", type=float, default=float(_env_default("w3", 0.9)))
    p.add_argument("--bundles", action="store_true",
                   help="write per-finding evidence bundles")
    p.set_defaults(func=cmd_attacks_scan)

    synth = sub.add_parser("synth", help="synthetic chain generation")
    ssub = synth.add_subparsers(dest="subcommand", required=True)
    p = ssub.add_parser("generate", help="generate a scenario with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=int(_env_default("seed", 0)))
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--services", type=int, default=3)
    p.add_argument("--bots", action="append",
                   help="category:size[:cal], repeatable")
    p.add_argument("--attacks", action="append", help="kind:profit:day, repeatable")
    p.add_argument("--misuse", help="e.g. misuse:150,partial:300,benign:250")
    p.add_argument("--rate", type=float, default=1.0,
                   help="background traffic multiplier")
    p.add_argument("--silent", type=int, default=0)
    p.add_argument("--deep-chain", type=int, default=0)
    p.set_defaults(func=cmd_synth_generate)

    p = sub.add_parser("report", help="summarize stage outputs under --out")
    p.add_argument("--out", default=_env_default("out", "out"))
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ForensicsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
