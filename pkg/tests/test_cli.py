import hashlib
import json
from pathlib import Path

import pytest

from eosforensics.cli import EXIT_ERROR, EXIT_FINDINGS, EXIT_OK, main


@pytest.fixture(scope="module")
def files(scenario):
    out, _ = scenario
    return {
        "trace": str(out / "trace.ndjson"),
        "snapshot": str(out / "snapshot.ndjson"),
        "dapps": str(out / "dapps.csv"),
        "incentives": str(out / "incentives.csv"),
        "labels": str(out / "labels.csv"),
    }


def _common(files, out, days="30"):
    return ["--trace", files["trace"], "--snapshot", files["snapshot"],
            "--days", days, "--out", str(out)]


def _tree_hash(path):
    digest = hashlib.sha256()
    for f in sorted(Path(path).rglob("*")):
        if f.is_file():
            digest.update(str(f.relative_to(path)).encode())
            digest.update(f.read_bytes())
    return digest.hexdigest()


def test_ingest(files, tmp_path, capsys):
    code = main(["ingest"] + _common(files, tmp_path))
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "ingest.json").read_text())
    assert summary["malformed_lines"] == 0
    assert "genuine transfers" in capsys.readouterr().out


def test_graph_build(files, tmp_path):
    code = main(["graph", "build"] + _common(files, tmp_path))
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "graphs.json").read_text())
    assert summary["emfg"]["nodes"] > 0
    assert (tmp_path / "emfg_edges.csv").exists()
    assert (tmp_path / "silent_accounts.txt").exists()


def test_metrics_all_graphs(files, tmp_path):
    for graph in ("emfg", "eacg", "ecig"):
        code = main(["metrics"] + _common(files, tmp_path) + ["--graph", graph])
        assert code == EXIT_OK
        obj = json.loads((tmp_path / f"metrics_{graph}.json").read_text())
        assert obj["node_count"] > 0


def test_bots_detect_finds_planted(files, tmp_path, scenario):
    code = main(
        ["bots", "detect"] + _common(files, tmp_path)
        + ["--dapps", files["dapps"], "--incentives", files["incentives"],
           "--labels", files["labels"]]
    )
    assert code == EXIT_FINDINGS
    _, manifest = scenario
    verdicts = [json.loads(l) for l in
                (tmp_path / "bot_verdicts.ndjson").read_text().splitlines()]
    flagged = {v["account"] for v in verdicts}
    planted = {m for c in manifest["bot_communities"] for m in c["members"]}
    assert planted <= flagged


def test_bots_classify(files, tmp_path):
    code = main(
        ["bots", "classify"] + _common(files, tmp_path)
        + ["--dapps", files["dapps"], "--incentives", files["incentives"],
           "--labels", files["labels"]]
    )
    assert code in (EXIT_OK, EXIT_FINDINGS)
    training = json.loads((tmp_path / "bot_training.json").read_text())
    assert training["test_accuracy"] >= 0.95
    assert (tmp_path / "bot_model.json").exists()


def test_bots_classify_without_labels_errors(files, tmp_path):
    code = main(["bots", "classify"] + _common(files, tmp_path))
    assert code == EXIT_ERROR


def test_perms_audit(files, tmp_path, scenario):
    code = main(["perms", "audit"] + _common(files, tmp_path))
    assert code == EXIT_FINDINGS
    _, manifest = scenario
    summary = json.loads((tmp_path / "perm_summary.json").read_text())
    assert summary["by_severity"]["misuse"] == len(
        manifest["misuse_grants"]["misuse"]
    )


def test_attacks_scan_with_bundles(files, tmp_path, scenario):
    code = main(
        ["attacks", "scan", "--trace", files["trace"], "--days", "30",
         "--out", str(tmp_path), "--dapps", files["dapps"], "--bundles"]
    )
    assert code == EXIT_FINDINGS
    _, manifest = scenario
    findings = [json.loads(l) for l in
                (tmp_path / "attack_findings.ndjson").read_text().splitlines()]
    assert len(findings) == len(manifest["attacks"])
    bundles = list((tmp_path / "bundles").iterdir())
    assert len(bundles) == len(findings)
    for bundle in bundles:
        assert (bundle / "manifest.json").exists()


def test_attacks_scan_missing_trace_is_error(tmp_path):
    code = main(["attacks", "scan", "--trace", str(tmp_path / "none.ndjson"),
                 "--out", str(tmp_path)])
    assert code == EXIT_ERROR


def test_synth_generate_deterministic(tmp_path):
    args = ["synth", "generate", "--seed", "7", "--days", "15", "--users", "20",
            "--services", "2", "--bots", "click_fraud:32:cal",
            "--attacks", "fake_transfer:100:5", "--misuse", "misuse:2,benign:1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert _tree_hash(a) == _tree_hash(b)


def test_synth_generate_bad_spec(tmp_path):
    code = main(["synth", "generate", "--out", str(tmp_path / "x"),
                 "--bots", "justonefield"])
    assert code == EXIT_ERROR


def test_stage_rerun_byte_identical(files, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["graph", "build"] + _common(files, out)) == EXIT_OK
        main(["metrics"] + _common(files, out))
        main(["perms", "audit"] + _common(files, out))
    assert _tree_hash(a) == _tree_hash(b)


def test_threads_do_not_change_outputs(files, tmp_path):
    a, b = tmp_path / "t1", tmp_path / "t8"
    main(["metrics"] + _common(files, a) + ["--threads", "1"])
    main(["metrics"] + _common(files, b) + ["--threads", "8"])
    assert _tree_hash(a) == _tree_hash(b)


def test_env_override(files, tmp_path, monkeypatch):
    monkeypatch.setenv("EOSFOR_MIN_CHILDREN", "5000")
    from eosforensics.cli import build_parser

    args = build_parser().parse_args(
        ["bots", "detect"] + _common(files, tmp_path)
    )
    assert args.min_children == 5000


def test_report_aggregates(files, tmp_path, capsys):
    main(["metrics"] + _common(files, tmp_path))
    main(["perms", "audit"] + _common(files, tmp_path))
    code = main(["report", "--out", str(tmp_path)])
    assert code == EXIT_OK
    text = (tmp_path / "report.txt").read_text()
    assert "Graph metrics" in text
    assert "Permission audit" in text
    assert (tmp_path / "report_metrics.csv").exists()


def test_report_without_outputs_is_error(tmp_path):
    assert main(["report", "--out", str(tmp_path / "empty")]) == EXIT_ERROR
