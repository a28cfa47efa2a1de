"""Tests for the memory-engine command-line interface."""

import json

import pytest

from app.cli import build_parser, main

T0 = 1_700_000_000


def run(capsys, *argv: str) -> tuple[int, dict | None, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, json.loads(captured.out) if captured.out.strip() else None, captured.err


@pytest.fixture
def dialogue_file(tmp_path):
    path = tmp_path / "dialogue.jsonl"
    rows = [
        {"utterance": "The warranty is 1-year free.", "speaker": "assistant", "ts": T0},
        {"utterance": "Okay, I understand.", "speaker": "user", "ts": T0 + 30},
        {"utterance": "I live in Paris.", "speaker": "user", "ts": T0 + 60},
    ]
    path.write_text("".join(json.dumps(row) + "\n" for row in rows))
    return path


def test_command_is_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_ingest_then_query(test_db, capsys, dialogue_file):
    code, ingested, _ = run(capsys, "ingest", str(dialogue_file), "--space", "alice")

    assert code == 0
    assert ingested["utterances"] == 3
    assert ingested["fact_units"] == 2

    code, result, _ = run(capsys, "query", "warranty", "-k", "1", "--space", "alice", "--now", str(T0 + 120))

    assert code == 0
    assert "warranty" in result["hits"][0]["unit"]["content"]


def test_unknown_space_fails(test_db, capsys):
    code, result, err = run(capsys, "query", "anything", "--space", "nobody")

    assert code == 1
    assert result is None
    assert err.startswith("error:")
    assert err.strip().splitlines()[-1].startswith("error: ")


def test_prune_dry_run(test_db, capsys, dialogue_file):
    run(capsys, "ingest", str(dialogue_file), "--space", "alice")

    code, result, _ = run(capsys, "prune", "--space", "alice", "--dry-run", "--now", str(T0 + 120))

    assert code == 0
    assert result["dry_run"] is True
    assert result["prune"]["units_removed"] == 1


def test_purge_requires_confirm(test_db, capsys, dialogue_file):
    run(capsys, "ingest", str(dialogue_file), "--space", "alice")

    code, _, err = run(capsys, "purge", "--space", "alice")
    assert code == 1
    assert "confirm" in err

    code, result, _ = run(capsys, "purge", "--space", "alice", "--confirm")
    assert code == 0
    assert result["purged_units"] == 0


def test_export_and_import(test_db, capsys, dialogue_file, tmp_path):
    run(capsys, "ingest", str(dialogue_file), "--space", "alice")

    code, exported, _ = run(capsys, "export", "--space", "alice", "--out", str(tmp_path / "snap"))
    assert code == 0

    code, stats, _ = run(capsys, "import", exported["path"], "--space", "copy")
    assert code == 0
    assert stats["space_id"] == "copy"
    assert stats["units_by_kind"]["Fact"] == 2


def test_import_of_missing_snapshot_fails(test_db, capsys, tmp_path):
    code, _, err = run(capsys, "import", str(tmp_path / "nothing"))

    assert code == 1
    assert err.startswith("error:")
    assert "nothing" in err


def test_gen_corpus_then_bench(test_db, capsys, tmp_path):
    out = tmp_path / "corpus"
    code, generated, _ = run(capsys, "gen-corpus", "--facts", "6", "--dup", "2", "--out", str(out))

    assert code == 0
    assert generated["fact_keys"] == 6
    assert generated["turns"] == 12
    assert (out / "dialogue.jsonl").exists()

    code, report, _ = run(capsys, "bench", "--corpus", str(out), "-k", "2", "--target-ms", "10000")

    assert code == 0
    assert report["probes_total"] == 6
    assert report["within_target"] is True


def test_bench_space_needs_probes(test_db, capsys):
    code, _, err = run(capsys, "bench", "--space", "alice")

    assert code == 1
    assert "--probes" in err
