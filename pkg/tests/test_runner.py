import json

import pytest

from conftest import FIXTURES, make_doc
from pcot import config
from pcot.corpus import Label
from pcot.errors import ConfigError, UnsupportedVariant
from pcot.metrics import f1_binary
from pcot.prompt_engine import MethodVariant
from pcot.llm_gateway import LlmGateway, Provider, ProviderKind, ResponseCache, load_rulebook
from pcot.runner import RunPlan, dry_run, execute, load_corpora, load_plan, read_results
from pcot.taxonomy import StrategyId


def _mock_plan(tmp_path, name="out", **updates) -> RunPlan:
    plan = load_plan(FIXTURES / "mock_plan.yaml")
    return plan.model_copy(update={"output_dir": tmp_path / name, **updates})


def test_load_plan_resolves_paths():
    plan = load_plan(FIXTURES / "mock_plan.yaml")
    assert plan.name == "mock-smoke"
    assert [m.model_id for m in plan.models] == ["mock-analyst"]
    assert [v.slug for v in plan.variants] == ["pcot-van", "pcot-zcot"]
    assert plan.corpora[0].path == (FIXTURES / "mock_docs.jsonl").resolve()
    assert plan.output_dir.is_absolute()
    assert len(load_corpora(plan)) == 20


@pytest.mark.parametrize("body", [
    "models: [mock\n",
    "- just a list\n",
    "models: []\nvariants: [pcot-van]\ncorpora: [x.jsonl]\n",
    "models: [mock]\nvariants: [pcot-van, pcot-van]\ncorpora: [x.jsonl]\n",
    "models: [mock]\nvariants: [pcot-van]\ncorpora: [x.jsonl]\nparallelism: 0\n",
    "models: [gpt-9]\nvariants: [pcot-van]\ncorpora: [x.jsonl]\n",
])
def test_invalid_plans(tmp_path, body):
    path = tmp_path / "plan.yaml"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(ConfigError):
        load_plan(path)


def test_unknown_variant_in_plan(tmp_path):
    path = tmp_path / "plan.yaml"
    path.write_text("models: [mock]\nvariants: [pcot-gpt]\ncorpora: [x.jsonl]\n", encoding="utf-8")
    with pytest.raises(UnsupportedVariant):
        load_plan(path)


def test_missing_corpus_file(tmp_path):
    path = tmp_path / "plan.yaml"
    path.write_text("models: [mock]\nvariants: [pcot-van]\ncorpora: [missing.jsonl]\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="not found"):
        load_corpora(load_plan(path))


def test_plan_hash_ignores_output_location(tmp_path):
    plan = load_plan(FIXTURES / "mock_plan.yaml")
    moved = plan.model_copy(update={"output_dir": tmp_path, "parallelism": 1})
    assert plan.plan_hash() == moved.plan_hash()
    other = plan.model_copy(update={"budget": 1})
    assert plan.plan_hash() != other.plan_hash()


def test_mock_run_end_to_end(tmp_path, mock_gateway):
    gateway = mock_gateway()
    summary = execute(_mock_plan(tmp_path), gateway)
    assert summary.complete
    assert (summary.records, summary.expected) == (40, 40)
    # One shared DMT analysis per document, one verdict per method.
    assert gateway.stats["calls:stage1"] == 20
    assert gateway.stats["calls:stage2"] == 40
    assert summary.provider_calls == 60

    records = read_results(tmp_path / "out" / config.RESULTS_FILE)
    assert len(records) == 40
    van = [r for r in records if r.method.slug == "pcot-van"]
    assert f1_binary(van) == pytest.approx(18 / 22)
    by_doc = {r.doc_id: r for r in van}
    assert by_doc["isot-05"].predicted is Label.DISINFORMATION
    assert by_doc["isot-10"].predicted is Label.DISINFORMATION
    assert by_doc["isot-06"].predicted is Label.CREDIBLE
    assert not by_doc["isot-06"].analysis.has_persuasion()
    assert all(not r.flags for r in records)

    stage1_lines = (tmp_path / "out" / config.STAGE1_FILE).read_text(encoding="utf-8").splitlines()
    assert len(stage1_lines) == 20
    manifest = json.loads((tmp_path / "out" / config.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["counts"]["records"] == 40
    assert manifest["halted"] is None


def test_identical_runs_write_identical_stores(tmp_path, mock_gateway):
    execute(_mock_plan(tmp_path, "first"), mock_gateway(tmp_path / "cache-a"))
    execute(_mock_plan(tmp_path, "second", parallelism=1), mock_gateway(tmp_path / "cache-b"))
    for name in (config.RESULTS_FILE, config.STAGE1_FILE):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_resume_skips_finished_cells_and_uses_cache(tmp_path, mock_gateway):
    plan = _mock_plan(tmp_path)
    execute(plan, mock_gateway())
    results = tmp_path / "out" / config.RESULTS_FILE
    complete = results.read_bytes()
    lines = complete.decode("utf-8").splitlines(keepends=True)
    # A killed run leaves a partial last line behind.
    results.write_text("".join(lines[:30]) + lines[30][:17], encoding="utf-8")

    gateway = mock_gateway()
    summary = execute(plan, gateway)
    assert summary.complete
    assert summary.provider_calls == 0
    assert gateway.stats["cache_hits"] == 10
    assert results.read_bytes() == complete


def test_budget_halts_run(tmp_path, mock_gateway):
    summary = execute(_mock_plan(tmp_path), mock_gateway(budget=5))
    assert summary.halted.startswith("BudgetExceeded")
    assert not summary.complete
    assert summary.provider_calls == 5
    manifest = json.loads((tmp_path / "out" / config.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["halted"] == summary.halted
    assert manifest["counts"]["pending"] == 40 - summary.records


def test_dry_run_counts_full_matrix(tmp_path):
    docs = [make_doc(f"isot-{i:04d}", text=f"Report number {i}.") for i in range(450)]
    plan = RunPlan(models=["gpt-4o-mini", "gemini-1.5-flash", "claude-3-haiku", "llama-3.3-70b", "llama-3.1-8b"],
                   variants=["baseline-van", "pcot-van", "pcot-zcot", "pcot-defspec"],
                   corpora=[{"path": tmp_path / "unused.jsonl"}])
    estimate = dry_run(plan, docs=docs)
    assert (estimate.stage1, estimate.stage2, estimate.single_step) == (2250, 9000, 0)
    assert estimate.total == 11250
    assert estimate.net == 11250


def test_dry_run_other_adaptations(tmp_path):
    docs = [make_doc("isot-1"), make_doc("isot-2")]
    plan = RunPlan(models=["mock"], variants=["pcot-van@tat", "pcot-zcot@tat", "pcot-single-van", "pcot-bv-van",
                                              "pcot-bv-zcot"],
                   corpora=[{"path": tmp_path / "unused.jsonl"}])
    estimate = dry_run(plan, docs=docs)
    # Six single-strategy prompts shared by both TAT methods, one general analysis shared by both base versions.
    assert estimate.stage1 == 2 * (6 + 1)
    assert estimate.stage2 == 2 * 4
    assert estimate.single_step == 2


def test_dry_run_sees_cache(tmp_path, mock_gateway):
    plan = _mock_plan(tmp_path)
    gateway = mock_gateway()
    execute(plan, gateway)
    estimate = dry_run(plan, cache=gateway.cache)
    assert estimate.total == 60
    assert estimate.cached == 60
    assert estimate.net == 0


def test_other_adaptations_run_with_mock(tmp_path, mock_gateway):
    slugs = ["baseline-van", "pcot-noexp-van", "pcot-van@tat", "pcot-single-van", "pcot-bv-van"]
    plan = _mock_plan(tmp_path, variants=[MethodVariant.parse(s) for s in slugs])
    gateway = mock_gateway()
    summary = execute(plan, gateway)
    assert summary.complete
    assert summary.records == 100
    records = {(r.method.slug, r.doc_id): r for r in read_results(tmp_path / "out" / config.RESULTS_FILE)}

    assert records[("baseline-van", "isot-01")].predicted is Label.CREDIBLE
    assert records[("baseline-van", "isot-05")].predicted is Label.DISINFORMATION
    assert records[("baseline-van", "isot-01")].analysis is None
    assert records[("pcot-noexp-van", "isot-01")].predicted is Label.DISINFORMATION
    tat = records[("pcot-van@tat", "isot-04")]
    assert tat.analysis.present() == [StrategyId.ATTACK_ON_REPUTATION, StrategyId.MANIPULATIVE_WORDING]
    assert records[("pcot-single-van", "ectf-01")].analysis.has_persuasion()
    assert records[("pcot-bv-van", "isot-02")].predicted is Label.DISINFORMATION
    assert records[("pcot-bv-van", "isot-07")].predicted is Label.CREDIBLE
    assert records[("pcot-bv-van", "isot-07")].analysis is None


def test_missing_credentials_halt_run(tmp_path, monkeypatch):
    monkeypatch.delenv("OPENAI_API_KEY", raising=False)
    plan = RunPlan(models=["gpt-4o-mini"], variants=["pcot-van"],
                   corpora=[{"path": FIXTURES / "mock_docs.jsonl"}], output_dir=tmp_path / "out", parallelism=1)
    summary = execute(plan, LlmGateway(cache=ResponseCache(tmp_path / "cache")))
    assert summary.halted.startswith("ConfigError")
    assert "OPENAI_API_KEY" in summary.halted
    assert summary.records == 0
    manifest = json.loads((tmp_path / "out" / config.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["counts"]["pending"] == 20


class TrackingProvider(Provider):
    """Mock analyst that records whether it was closed; can be told to crash on every call."""
    kind = ProviderKind.MOCK

    def __init__(self, error: Exception | None = None):
        self.inner = load_rulebook()
        self.error = error
        self.closed = False

    async def generate(self, spec, prompt, max_output_tokens, temperature):
        if self.error is not None:
            raise self.error
        return await self.inner.generate(spec, prompt, max_output_tokens, temperature)

    async def close(self):
        self.closed = True


def test_execute_closes_the_gateway(tmp_path):
    provider = TrackingProvider()
    gateway = LlmGateway(cache=ResponseCache(tmp_path / "cache"), providers={ProviderKind.MOCK: provider})
    assert execute(_mock_plan(tmp_path), gateway).complete
    assert provider.closed


def test_unexpected_error_halts_and_keeps_store(tmp_path, mock_gateway):
    provider = TrackingProvider(error=RuntimeError("socket exploded"))
    gateway = LlmGateway(cache=ResponseCache(tmp_path / "cache"), providers={ProviderKind.MOCK: provider})
    summary = execute(_mock_plan(tmp_path, parallelism=1), gateway)
    assert summary.halted == "RuntimeError: socket exploded"
    assert summary.records == 0
    assert provider.closed

    out = tmp_path / "out"
    manifest = json.loads((out / config.MANIFEST_FILE).read_text(encoding="utf-8"))
    assert manifest["halted"] == summary.halted
    assert manifest["counts"]["pending"] == 40
    assert (out / config.STATE_FILE).exists()
    failed = [json.loads(line) for line in (out / config.FAILED_CELLS_LOG).read_text(encoding="utf-8").splitlines()]
    assert failed[0]["stage"] == "unexpected"

    # The same plan resumes normally once the cause is gone.
    assert execute(_mock_plan(tmp_path), mock_gateway()).complete
