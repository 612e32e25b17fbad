import pytest

from conftest import FIXTURES
from pcot import __version__
from pcot.cli import EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION, main
from pcot.corpus import read_documents


def _run_mock(tmp_path) -> int:
    return main(["run", "--plan", str(FIXTURES / "mock_plan.yaml"), "--mock", "--output-dir", str(tmp_path / "out"),
                 "--cache-dir", str(tmp_path / "cache")])


def test_version(capsys):
    with pytest.raises(SystemExit) as excinfo:
        main(["--version"])
    assert excinfo.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_source_is_a_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["ingest", "--source", "Reddit", "--in", "x", "--out", "y"])
    assert excinfo.value.code == 2


def test_ingest_sample_validate(tmp_path, capsys):
    unified = tmp_path / "multidis.jsonl"
    manifest = tmp_path / "manifest.json"
    assert main(["ingest", "--source", "MultiDis", "--in", str(FIXTURES / "multidis_native.csv"),
                 "--out", str(unified), "--manifest", str(manifest)]) == EXIT_OK
    assert len(read_documents(unified)) == 20
    assert '"MultiDis": 20' in manifest.read_text(encoding="utf-8")

    sample = tmp_path / "sample.jsonl"
    assert main(["sample", "--in", str(unified), "--out", str(sample), "--n", "8", "--seed", "1"]) == EXIT_OK
    assert len(read_documents(sample)) == 8

    assert main(["validate", "--in", str(unified), "--expect-share", "0.25"]) == EXIT_OK
    assert main(["validate", "--in", str(unified), "--expect-share", "0.6"]) == EXIT_VALIDATION
    assert "FAIL" in capsys.readouterr().out


def test_corpus_group_matches_flat_commands(tmp_path):
    flat, grouped = tmp_path / "flat.jsonl", tmp_path / "grouped.jsonl"
    native = str(FIXTURES / "multidis_native.csv")
    assert main(["ingest", "--source", "MultiDis", "--in", native, "--out", str(flat)]) == EXIT_OK
    assert main(["corpus", "ingest", "--source", "MultiDis", "--in", native, "--out", str(grouped)]) == EXIT_OK
    assert grouped.read_text(encoding="utf-8") == flat.read_text(encoding="utf-8")

    sample = tmp_path / "sample.jsonl"
    assert main(["corpus", "sample", "--in", str(grouped), "--out", str(sample), "--n", "5", "--seed", "3"]) == EXIT_OK
    assert len(read_documents(sample)) == 5
    assert main(["corpus", "validate", "--in", str(grouped), "--expect-share", "0.25"]) == EXIT_OK


def test_corpus_group_needs_a_command():
    with pytest.raises(SystemExit) as excinfo:
        main(["corpus"])
    assert excinfo.value.code == 2


def test_sample_too_large(tmp_path, capsys):
    code = main(["sample", "--in", str(FIXTURES / "mock_docs.jsonl"), "--out", str(tmp_path / "s.jsonl"),
                 "--n", "450"])
    assert code == EXIT_VALIDATION
    assert "ERROR" in capsys.readouterr().err


def test_missing_plan_is_a_config_error(tmp_path, capsys):
    assert main(["plan", "--plan", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    assert "=" * 50 in capsys.readouterr().err


def test_plan_summary(capsys):
    assert main(["plan", "--plan", str(FIXTURES / "mock_plan.yaml")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "documents: 20" in out
    assert "cells:    40" in out


def test_dry_run(tmp_path, capsys):
    code = main(["dry-run", "--plan", str(FIXTURES / "mock_plan.yaml"), "--cache-dir", str(tmp_path / "cache")])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "stage-1 calls: 20" in out
    assert "stage-2 calls: 40" in out
    assert "net of cache: 60" in out


def test_mock_run_and_report(tmp_path, capsys):
    assert _run_mock(tmp_path) == EXIT_OK
    assert "40/40 records" in capsys.readouterr().out

    assert main(["report", "--store", str(tmp_path / "out"), "--tables", "distribution", "stage1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "## Persuasion strategy distribution by GoldLabel (pcot-van)" in out
    assert "## Stage-1 persuasion detection (micro F1)" in out

    # The mock plan has no baseline to pair PCoT with.
    assert main(["report", "--store", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_report_from_published_scores(tmp_path, capsys):
    args = ["report", "--external", str(FIXTURES / "published_main_scores.csv"), "--grouping", "Overall", "--with-std"]
    assert main(args) == EXIT_OK
    assert "| Average |  | 0.711 ± 0.055 | 0.815 (+14.6%) ± 0.027 |" in capsys.readouterr().out

    out_dir = tmp_path / "tables"
    assert main(args + ["--tables", "main", "summary", "--format", "Markdown", "CSV", "--out-dir", str(out_dir)]) == 0
    assert sorted(p.name for p in out_dir.iterdir()) == [
        "f1_by_model_and_method.csv", "f1_by_model_and_method.md",
        "prompting_methods_overall.csv", "prompting_methods_overall.md",
    ]


def test_report_errors(capsys):
    assert main(["report"]) == EXIT_CONFIG
    external = ["report", "--external", str(FIXTURES / "published_main_scores.csv")]
    assert main(external + ["--tables", "significance"]) == EXIT_VALIDATION
    assert main(external + ["--tables", "comparison"]) == EXIT_CONFIG
    assert main(external + ["--summary-group", "nonsense", "--tables", "summary"]) == EXIT_CONFIG
    assert "ERROR" in capsys.readouterr().err


def test_dump_prompts(tmp_path, capsys):
    out_dir = tmp_path / "prompts"
    code = main(["dump-prompts", "--in", str(FIXTURES / "mock_docs.jsonl"), "--doc-id", "isot-04",
                 "--variants", "baseline-van", "pcot-van", "--out-dir", str(out_dir)])
    assert code == EXIT_OK
    assert sorted(p.name for p in out_dir.iterdir()) == ["baseline-van.stage2.txt", "pcot-van.stage2.txt",
                                                         "stage1-dmt.txt"]
    assert "ATTACK_MARKER" in (out_dir / "stage1-dmt.txt").read_text(encoding="utf-8")
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert all(len(line.split(": ")[1]) == 64 for line in lines)

    assert main(["dump-prompts", "--in", str(FIXTURES / "mock_docs.jsonl"), "--doc-id", "nope",
                 "--variants", "baseline-van", "--out-dir", str(out_dir)]) == EXIT_CONFIG
    assert main(["dump-prompts", "--in", str(FIXTURES / "mock_docs.jsonl"), "--doc-id", "isot-04",
                 "--variants", "pcot-gpt", "--out-dir", str(out_dir)]) == EXIT_VALIDATION


def test_export_taxonomy(tmp_path, capsys):
    assert main(["export-taxonomy"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("# Attack on reputation [AR]\n")
    path = tmp_path / "taxonomy.txt"
    assert main(["export-taxonomy", "--output", str(path)]) == EXIT_OK
    assert path.read_text(encoding="utf-8").count("\n# ") == 5
