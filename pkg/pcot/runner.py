"""
Runs the experiment matrix (datasets x documents x models x variants) through
the two-stage pipeline.

Work is split into units of (dataset, document, model). Inside a unit every
planned variant is evaluated in plan order, and each stage-1 analysis is
computed once and shared by all stage-2 methods that need it. Units run
concurrently under a semaphore; results are appended through one writer and
the store is rewritten in key order when the run finishes, so identical runs
produce identical files.
"""
import asyncio
import hashlib
import json
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator

from pcot import __version__, config
from pcot.corpus import Document, SourceDataset, read_documents, sample_test_set
from pcot.errors import AuthError, BudgetExceeded, ConfigError, ProviderError
from pcot.llm_gateway import (CompletionRequest, CompletionResult, LlmGateway, ModelSpec, ResponseCache,
                              load_rulebook, resolve_model, write_json_atomic)
from pcot.metrics import EvalRecord, RecordFlag, record_key
from pcot.prompt_engine import (Adaptation, MethodVariant, RenderedPrompt, Stage, Stage1Kind,
                                render_base_version_stage1, render_base_version_stage2, render_single_step,
                                render_stage1, render_stage2)
from pcot.response_parser import (ParseGrade, PersuasionAnalysis, Verdict, merge_strategy_answers, parse_analysis,
                                  parse_strategy_answer, parse_verdict)
from pcot.taxonomy import resolve_strategy

logger = logging.getLogger(__name__)

BASE_VERSION_KIND = "base-version"
CHECKPOINT_EVERY = 25


# --- Plan ---

class CorpusSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Path
    sample_size: int | None = Field(default=None, ge=0)
    seed: int = config.DEFAULT_SEED


class RunPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "run"
    models: list[ModelSpec]
    variants: list[MethodVariant]
    corpora: list[CorpusSpec]
    parallelism: int = Field(default=config.DEFAULT_PARALLELISM, ge=1)
    budget: int = Field(default=config.DEFAULT_REQUEST_BUDGET, ge=1)
    output_dir: Path = Path("results")
    cache_dir: Path | None = None

    @field_validator("models", mode="before")
    @classmethod
    def _resolve_models(cls, value):
        return [resolve_model(entry) for entry in value or []]

    @field_validator("variants", mode="before")
    @classmethod
    def _parse_variants(cls, value):
        return [MethodVariant.parse(v) if isinstance(v, str) else v for v in value or []]

    @field_serializer("variants")
    def _variant_slugs(self, variants: list[MethodVariant]) -> list[str]:
        return [v.slug for v in variants]

    @model_validator(mode="after")
    def _check_matrix(self) -> "RunPlan":
        if not self.models:
            raise ValueError("plan lists no models")
        if not self.variants:
            raise ValueError("plan lists no variants")
        if not self.corpora:
            raise ValueError("plan lists no corpora")
        slugs = [v.slug for v in self.variants]
        if len(set(slugs)) != len(slugs):
            raise ValueError("plan lists a variant twice")
        model_ids = [m.model_id for m in self.models]
        if len(set(model_ids)) != len(model_ids):
            raise ValueError("plan lists a model twice")
        return self

    def plan_hash(self) -> str:
        payload = self.model_dump(mode="json", exclude={"output_dir", "cache_dir", "parallelism"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_mock_models(self) -> "RunPlan":
        return self.model_copy(update={"models": [ModelSpec.from_alias("mock")]})


def load_plan(path: str | os.PathLike) -> RunPlan:
    """Reads a YAML plan; relative corpus, output and cache paths resolve against the plan's directory."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"Plan {path} is not valid YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Plan {path} must be a mapping")

    base = path.resolve().parent
    corpora = []
    for entry in data.get("corpora") or []:
        entry = {"path": entry} if isinstance(entry, str) else dict(entry)
        entry["path"] = base / Path(entry["path"])
        corpora.append(entry)
    data["corpora"] = corpora
    for key in ("output_dir", "cache_dir"):
        if data.get(key):
            data[key] = base / Path(data[key])
    try:
        return RunPlan.model_validate(data)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'plan'}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"Invalid plan {path}: {details}") from e


def load_corpora(plan: RunPlan) -> list[Document]:
    """Documents in matrix order: corpora in plan order, documents by id."""
    docs: list[Document] = []
    seen: set[tuple[SourceDataset, str]] = set()
    for corpus in plan.corpora:
        if not corpus.path.exists():
            raise ConfigError(f"Corpus file not found: {corpus.path}")
        loaded = read_documents(corpus.path)
        if corpus.sample_size is not None:
            loaded = sample_test_set(loaded, corpus.sample_size, corpus.seed)
        for doc in sorted(loaded, key=lambda d: d.id):
            key = (doc.source_dataset, doc.id)
            if key in seen:
                raise ConfigError(f"Document {doc.id} of {doc.source_dataset.value} appears in two corpora")
            seen.add(key)
            docs.append(doc)
    return docs


def expected_keys(plan: RunPlan, docs: list[Document]) -> list[str]:
    return [record_key(m.model_id, v.slug, d.source_dataset.value, d.id)
            for d in docs for m in plan.models for v in plan.variants]


# --- State ---

class Stage1Outcome(BaseModel):
    """A persisted stage-1 result, shared by every stage-2 method of the same kind."""
    model_config = ConfigDict(frozen=True)

    model_id: str
    kind: str
    dataset: SourceDataset
    doc_id: str
    analysis: PersuasionAnalysis | None = None
    analysis_text: str = ""
    flags: tuple[RecordFlag, ...] = ()

    @field_validator("flags", mode="before")
    @classmethod
    def _sorted_flags(cls, value):
        return tuple(sorted({RecordFlag(f) for f in value or ()}, key=lambda f: f.value))

    @property
    def key(self) -> str:
        return stage1_key(self.model_id, self.kind, self.dataset.value, self.doc_id)


def stage1_key(model_id: str, kind: str, dataset: str, doc_id: str) -> str:
    return f"{model_id}|{kind}|{dataset}|{doc_id}"


@dataclass
class RunState:
    completed: set[str] = field(default_factory=set)
    pending: set[str] = field(default_factory=set)
    stage1_cache: dict[str, Stage1Outcome] = field(default_factory=dict)

    def mark_done(self, key: str) -> None:
        self.completed.add(key)
        self.pending.discard(key)

    def to_json(self) -> dict:
        return {"completed": sorted(self.completed), "pending": sorted(self.pending),
                "stage1": sorted(self.stage1_cache)}


@dataclass
class RunSummary:
    output_dir: Path
    expected: int
    records: int
    provider_calls: int
    cache_hits: int
    parse_stats: dict[str, int]
    halted: str | None = None

    @property
    def complete(self) -> bool:
        return self.halted is None and self.records >= self.expected

    def describe(self) -> str:
        lines = [f"{self.records}/{self.expected} records in {self.output_dir}",
                 f"provider calls: {self.provider_calls}, cache hits: {self.cache_hits}"]
        if self.parse_stats:
            lines.append("flags: " + ", ".join(f"{k}={v}" for k, v in sorted(self.parse_stats.items())))
        if self.halted:
            lines.append(f"HALTED: {self.halted}")
        return "\n".join(lines)


def _read_jsonl(path: Path, model: type[BaseModel]) -> list:
    items = []
    if not path.exists():
        return items
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                items.append(model.model_validate_json(line))
            except ValidationError as e:
                # A killed run can leave a partial last line.
                logger.warning("Skipping unreadable line %d of %s: %s", line_no, path.name, e.errors()[0]["msg"])
    return items


def read_results(path: str | os.PathLike) -> list[EvalRecord]:
    """Records of a results store, last write wins per key."""
    by_key = {r.key: r for r in _read_jsonl(Path(path), EvalRecord)}
    return [by_key[k] for k in sorted(by_key)]


def _rewrite_sorted(path: Path, items: dict[str, BaseModel]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for key in sorted(items):
            f.write(items[key].model_dump_json() + "\n")
    os.replace(tmp, path)


class ResultWriter:
    """Single writer for the store files; every append goes through one lock."""

    def __init__(self, output_dir: Path):
        self.output_dir = output_dir
        self.results_path = output_dir / config.RESULTS_FILE
        self.stage1_path = output_dir / config.STAGE1_FILE
        self.failed_path = output_dir / config.FAILED_CELLS_LOG
        self.state_path = output_dir / config.STATE_FILE
        self.manifest_path = output_dir / config.MANIFEST_FILE
        self._lock = asyncio.Lock()
        self.records: dict[str, EvalRecord] = {}
        self.stage1: dict[str, Stage1Outcome] = {}
        self.failed_cells = 0

    def load_existing(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.records = {r.key: r for r in _read_jsonl(self.results_path, EvalRecord)}
        self.stage1 = {o.key: o for o in _read_jsonl(self.stage1_path, Stage1Outcome)}
        if self.records or self.stage1:
            logger.info("Resuming: %d records and %d stage-1 analyses already stored",
                        len(self.records), len(self.stage1))

    async def add_record(self, record: EvalRecord) -> None:
        async with self._lock:
            self.records[record.key] = record
            with open(self.results_path, "a", encoding="utf-8") as f:
                f.write(record.model_dump_json() + "\n")

    async def add_stage1(self, outcome: Stage1Outcome) -> None:
        async with self._lock:
            self.stage1[outcome.key] = outcome
            with open(self.stage1_path, "a", encoding="utf-8") as f:
                f.write(outcome.model_dump_json() + "\n")

    async def log_failed_cell(self, key: str, stage: str, error: Exception, raw_text: str = "") -> None:
        async with self._lock:
            self.failed_cells += 1
            entry = {"key": key, "stage": stage, "error": f"{type(error).__name__}: {error}", "raw_text": raw_text,
                     "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
            with open(self.failed_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry, ensure_ascii=False) + "\n")

    async def checkpoint(self, state: RunState) -> None:
        async with self._lock:
            write_json_atomic(self.state_path, state.to_json())

    def finalize(self, plan: RunPlan, state: RunState, halted: str | None) -> dict[str, int]:
        _rewrite_sorted(self.results_path, self.records)
        _rewrite_sorted(self.stage1_path, self.stage1)
        write_json_atomic(self.state_path, state.to_json())
        parse_stats = Counter(flag.value for r in self.records.values() for flag in r.flags)
        write_json_atomic(self.manifest_path, {
            "plan_name": plan.name,
            "plan_hash": plan.plan_hash(),
            "version": __version__,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "models": [m.model_id for m in plan.models],
            "variants": [v.slug for v in plan.variants],
            "counts": {
                "records": len(self.records),
                "expected": len(state.completed) + len(state.pending),
                "pending": len(state.pending),
                "stage1": len(self.stage1),
                "failed_cells": self.failed_cells,
            },
            "parse_stats": dict(sorted(parse_stats.items())),
            "halted": halted,
        })
        return dict(parse_stats)


# --- Execution ---

def _verdict_flags(verdict: Verdict, truncated: bool) -> set[RecordFlag]:
    flags = set()
    if verdict.parse_grade is ParseGrade.REPAIRED:
        flags.add(RecordFlag.STAGE_TWO_REPAIRED)
    elif verdict.parse_grade is ParseGrade.FAILED:
        flags.add(RecordFlag.STAGE_TWO_FAILED)
    if truncated:
        flags.add(RecordFlag.TRUNCATED)
    return flags


def _analysis_flags(analysis: PersuasionAnalysis) -> set[RecordFlag]:
    if analysis.parse_grade is ParseGrade.FAILED:
        return {RecordFlag.STAGE_ONE_FAILED}
    if analysis.parse_grade is ParseGrade.REPAIRED:
        return {RecordFlag.STAGE_ONE_REPAIRED}
    return set()


def _unparseable(prompt: RenderedPrompt, text: str) -> bool:
    if prompt.target_strategy is None:
        return parse_analysis(text).failed
    return parse_strategy_answer(text, resolve_strategy(prompt.target_strategy)).parse_grade is ParseGrade.FAILED


def combine_stage1(prompts: list[RenderedPrompt], texts: list[str]) -> PersuasionAnalysis:
    """One analysis from a multi-strategy response, or merged from six single-strategy responses."""
    if len(prompts) == 1 and prompts[0].target_strategy is None:
        return parse_analysis(texts[0])
    answers = {}
    for prompt, text in zip(prompts, texts):
        strategy = resolve_strategy(prompt.target_strategy)
        answers[strategy.id] = parse_strategy_answer(text, strategy)
    return merge_strategy_answers(answers)


class ExperimentRunner:
    def __init__(self, plan: RunPlan, gateway: LlmGateway, docs: list[Document] | None = None):
        self.plan = plan
        self.gateway = gateway
        self.docs = docs if docs is not None else load_corpora(plan)
        self.writer = ResultWriter(Path(plan.output_dir))
        self.state = RunState()
        self._halt = asyncio.Event()
        self.halted: str | None = None
        self._since_checkpoint = 0

    def _request(self, model: ModelSpec, prompt: RenderedPrompt, doc: Document) -> CompletionRequest:
        tag = f"{prompt.stage.value}:{model.model_id}:{prompt.cache_scope}:{doc.source_dataset.value}:{doc.id}"
        return CompletionRequest(model=model, prompt=prompt, request_tag=tag)

    async def _complete(self, model: ModelSpec, prompt: RenderedPrompt, doc: Document,
                        bypass_cache: bool = False) -> CompletionResult:
        return await self.gateway.complete(self._request(model, prompt, doc), bypass_cache=bypass_cache)

    # Stage 1

    async def _strategy_stage1(self, variant: MethodVariant, doc: Document, model: ModelSpec) -> Stage1Outcome:
        kind = variant.stage1_kind
        key = stage1_key(model.model_id, kind.value, doc.source_dataset.value, doc.id)
        if key in self.state.stage1_cache:
            return self.state.stage1_cache[key]

        prompts = render_stage1(variant, doc, model_id=model.model_id)
        texts, truncated = [], False
        for prompt in prompts:
            result = await self._complete(model, prompt, doc)
            if _unparseable(prompt, result.text):
                logger.warning("Unparseable stage-1 answer (%s) for %s; asking again", prompt.cache_scope, doc.id)
                result = await self._complete(model, prompt, doc, bypass_cache=True)
            texts.append(result.text)
            truncated = truncated or result.truncated

        analysis = combine_stage1(prompts, texts)
        flags = _analysis_flags(analysis) | ({RecordFlag.TRUNCATED} if truncated else set())
        if analysis.failed:
            await self.writer.log_failed_cell(key, Stage.STAGE1.value, ValueError("stage-1 analysis unparseable"),
                                              "\n---\n".join(texts))
        outcome = Stage1Outcome(model_id=model.model_id, kind=kind.value, dataset=doc.source_dataset,
                                doc_id=doc.id, analysis=analysis, flags=tuple(flags))
        self.state.stage1_cache[key] = outcome
        await self.writer.add_stage1(outcome)
        return outcome

    async def _base_version_stage1(self, variant: MethodVariant, doc: Document, model: ModelSpec) -> Stage1Outcome:
        key = stage1_key(model.model_id, BASE_VERSION_KIND, doc.source_dataset.value, doc.id)
        if key in self.state.stage1_cache:
            return self.state.stage1_cache[key]

        prompt = render_base_version_stage1(variant.stage2_kind, doc, model_id=model.model_id)
        result = await self._complete(model, prompt, doc)
        if not result.text.strip():
            logger.warning("Empty general persuasion analysis for %s; asking again", doc.id)
            result = await self._complete(model, prompt, doc, bypass_cache=True)
        flags = set()
        if not result.text.strip():
            flags.add(RecordFlag.STAGE_ONE_FAILED)
        if result.truncated:
            flags.add(RecordFlag.TRUNCATED)
        outcome = Stage1Outcome(model_id=model.model_id, kind=BASE_VERSION_KIND, dataset=doc.source_dataset,
                                doc_id=doc.id, analysis_text=result.text.strip(), flags=tuple(flags))
        self.state.stage1_cache[key] = outcome
        await self.writer.add_stage1(outcome)
        return outcome

    # Stage 2

    async def evaluate(self, variant: MethodVariant, doc: Document, model: ModelSpec) -> EvalRecord:
        flags: set[RecordFlag] = set()
        analysis = None
        if variant.adaptation is Adaptation.PCOT_SINGLE_STEP:
            prompt = render_single_step(variant.stage2_kind, doc, model_id=model.model_id)
            result = await self._complete(model, prompt, doc)
            # One response carries both the analysis and the verdict.
            analysis = parse_analysis(result.text)
            flags |= _analysis_flags(analysis)
        elif variant.adaptation is Adaptation.PCOT_BASE_VERSION:
            outcome = await self._base_version_stage1(variant, doc, model)
            flags |= set(outcome.flags)
            prompt = render_base_version_stage2(variant.stage2_kind, doc, outcome.analysis_text, model_id=model.model_id)
            result = await self._complete(model, prompt, doc)
        elif variant.uses_analysis:
            outcome = await self._strategy_stage1(variant, doc, model)
            flags |= set(outcome.flags)
            analysis = outcome.analysis
            prompt = render_stage2(variant, doc, analysis, model_id=model.model_id)
            result = await self._complete(model, prompt, doc)
        else:
            prompt = render_stage2(variant, doc, model_id=model.model_id)
            result = await self._complete(model, prompt, doc)

        verdict = parse_verdict(result.text)
        flags |= _verdict_flags(verdict, result.truncated)
        return EvalRecord(
            doc_id=doc.id,
            gold_label=doc.gold_label,
            predicted=verdict.label,
            analysis=analysis,
            model_id=model.model_id,
            method=variant,
            dataset=doc.source_dataset,
            flags=tuple(flags),
            genre=doc.genre,
            cutoff_class=doc.cutoff_class,
            gold_strategies=doc.gold_strategies,
            raw_response=result.text,
        )

    def _stop(self, error: Exception) -> None:
        if not self._halt.is_set():
            self.halted = f"{type(error).__name__}: {error}"
            logger.error("Halting run: %s", self.halted)
            self._halt.set()

    async def _process_unit(self, doc: Document, model: ModelSpec, semaphore: asyncio.Semaphore) -> None:
        async with semaphore:
            if self._halt.is_set():
                return
            logger.debug("Unit %s/%s on %s", doc.source_dataset.value, doc.id, model.model_id)
            for variant in self.plan.variants:
                key = record_key(model.model_id, variant.slug, doc.source_dataset.value, doc.id)
                if key in self.state.completed:
                    continue
                try:
                    record = await self.evaluate(variant, doc, model)
                except (BudgetExceeded, AuthError, ConfigError) as e:
                    self._stop(e)
                    return
                except ProviderError as e:
                    logger.error("Cell %s failed: %s", key, e)
                    await self.writer.log_failed_cell(key, "provider", e)
                    continue
                except Exception as e:
                    logger.exception("Unexpected error in cell %s", key)
                    await self.writer.log_failed_cell(key, "unexpected", e)
                    self._stop(e)
                    return
                await self.writer.add_record(record)
                self.state.mark_done(key)
                self._since_checkpoint += 1
                if self._since_checkpoint >= CHECKPOINT_EVERY:
                    self._since_checkpoint = 0
                    await self.writer.checkpoint(self.state)

    async def run(self) -> RunSummary:
        self.writer.load_existing()
        keys = expected_keys(self.plan, self.docs)
        self.state.completed = {k for k in keys if k in self.writer.records}
        self.state.pending = set(keys) - self.state.completed
        self.state.stage1_cache = dict(self.writer.stage1)

        calls_needed = dry_run(self.plan, docs=self.docs).total
        if self.plan.budget < calls_needed:
            logger.warning("Budget of %d calls is below the %d calls this plan needs without cache",
                           self.plan.budget, calls_needed)

        logger.info("Running %d cells (%d already done) with parallelism %d",
                    len(keys), len(self.state.completed), self.plan.parallelism)
        semaphore = asyncio.Semaphore(self.plan.parallelism)
        tasks = [self._process_unit(doc, model, semaphore) for doc in self.docs for model in self.plan.models]
        try:
            await asyncio.gather(*tasks)
        except BaseException as e:
            # Interrupted: keep the store resumable before propagating.
            self.halted = self.halted or type(e).__name__
            self.writer.finalize(self.plan, self.state, self.halted)
            raise

        parse_stats = self.writer.finalize(self.plan, self.state, self.halted)
        summary = RunSummary(
            output_dir=self.writer.output_dir,
            expected=len(keys),
            records=len(self.state.completed),
            provider_calls=self.gateway.stats["provider_calls"],
            cache_hits=self.gateway.stats["cache_hits"],
            parse_stats=parse_stats,
            halted=self.halted,
        )
        logger.info(summary.describe())
        return summary


def build_gateway(plan: RunPlan, mock_rulebook_path: str | os.PathLike | None = None,
                  cache_dir: str | os.PathLike | None = None) -> LlmGateway:
    cache = ResponseCache(config.cache_dir(cache_dir or plan.cache_dir))
    mock = load_rulebook(mock_rulebook_path) if mock_rulebook_path else None
    return LlmGateway(cache=cache, budget=plan.budget, mock=mock)


async def execute_async(plan: RunPlan, gateway: LlmGateway, docs: list[Document] | None = None) -> RunSummary:
    runner = ExperimentRunner(plan, gateway, docs)
    return await runner.run()


def execute(plan: RunPlan, gateway: LlmGateway | None = None, docs: list[Document] | None = None) -> RunSummary:
    """Synchronous entry point; the results store is written under plan.output_dir.

    The gateway is closed when the run ends, since its HTTP sessions belong to this call's event loop.
    """
    async def _main() -> RunSummary:
        gw = gateway or build_gateway(plan)
        try:
            return await execute_async(plan, gw, docs)
        finally:
            await gw.close()

    return asyncio.run(_main())


# --- Dry run ---

@dataclass(frozen=True)
class DryRunEstimate:
    stage1: int
    stage2: int
    single_step: int
    cached: int

    @property
    def total(self) -> int:
        return self.stage1 + self.stage2 + self.single_step

    @property
    def net(self) -> int:
        return self.total - self.cached

    def describe(self) -> str:
        return (f"stage-1 calls: {self.stage1}\nstage-2 calls: {self.stage2}\nsingle-step calls: {self.single_step}\n"
                f"total: {self.total}\ncached: {self.cached}\nnet of cache: {self.net}")


def _cached_text(cache: ResponseCache | None, model: ModelSpec, prompt: RenderedPrompt) -> str | None:
    if cache is None:
        return None
    entry = cache.get(model.model_id, prompt.content_hash)
    return entry["text"] if entry else None


def dry_run(plan: RunPlan, cache: ResponseCache | None = None, docs: list[Document] | None = None) -> DryRunEstimate:
    """
    Exact call counts for the plan assuming nothing is cached, plus how many of
    those calls the cache already answers. Stage-2 prompts that embed an
    analysis count as cached only when their stage-1 answers are cached too.
    """
    docs = docs if docs is not None else load_corpora(plan)
    stage1 = stage2 = single = cached = 0
    for doc in docs:
        for model in plan.models:
            analyses: dict[Stage1Kind, PersuasionAnalysis | None] = {}
            base_text: str | None = None
            base_counted = False
            for variant in plan.variants:
                if variant.adaptation is Adaptation.PCOT_SINGLE_STEP:
                    single += 1
                    prompt = render_single_step(variant.stage2_kind, doc, model_id=model.model_id)
                    cached += _cached_text(cache, model, prompt) is not None
                    continue

                if variant.adaptation is Adaptation.PCOT_BASE_VERSION:
                    if not base_counted:
                        base_counted = True
                        stage1 += 1
                        base_text = _cached_text(cache, model, render_base_version_stage1(
                            variant.stage2_kind, doc, model_id=model.model_id))
                        cached += base_text is not None
                    stage2 += 1
                    if base_text is not None:
                        prompt = render_base_version_stage2(variant.stage2_kind, doc, base_text.strip(),
                                                            model_id=model.model_id)
                        cached += _cached_text(cache, model, prompt) is not None
                    continue

                analysis = None
                if variant.uses_analysis:
                    if variant.stage1_kind not in analyses:
                        prompts = render_stage1(variant, doc, model_id=model.model_id)
                        stage1 += len(prompts)
                        texts = [_cached_text(cache, model, p) for p in prompts]
                        cached += sum(t is not None for t in texts)
                        analyses[variant.stage1_kind] = combine_stage1(prompts, texts) if all(
                            t is not None for t in texts) else None
                    analysis = analyses[variant.stage1_kind]
                    if analysis is None:
                        stage2 += 1
                        continue
                stage2 += 1
                prompt = render_stage2(variant, doc, analysis, model_id=model.model_id)
                cached += _cached_text(cache, model, prompt) is not None
    return DryRunEstimate(stage1=stage1, stage2=stage2, single_step=single, cached=cached)
