"""
Renders every stage-1, stage-2, single-step and base-version prompt.

Prompts are assembled from template files in PROMPTS_DIR using {{placeholder}}
substitution. Rendering is a pure function of its inputs, so each prompt can
be pinned by a golden file and hashed for the response cache.
"""
import hashlib
import json
import re
from enum import Enum
from functools import lru_cache

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from pcot.config import PROMPTS_DIR
from pcot.corpus import Document
from pcot.errors import MissingAnalysis, TemplateError, UnsupportedVariant
from pcot.response_parser import PersuasionAnalysis, serialize_analysis, strip_explanations
from pcot.taxonomy import PersuasionStrategy, all_strategies

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


class Stage1Kind(str, Enum):
    BASE_MT = "BaseMT"
    MT = "MT"
    DMT = "DMT"
    TAT = "TAT"
    DTAT = "DTAT"
    TATB = "TATB"


class Stage2Kind(str, Enum):
    VAN = "VaN"
    ZCOT = "ZCoT"
    DEFSPEC = "DeFSpeC"


class Adaptation(str, Enum):
    BASELINE = "Baseline"
    PCOT = "PCoT"
    PCOT_NO_EXPLANATION = "PCoTNoExplanation"
    PCOT_SINGLE_STEP = "PCoTSingleStep"
    PCOT_BASE_VERSION = "PCoTBaseVersion"


class Stage(str, Enum):
    STAGE1 = "stage1"
    STAGE2 = "stage2"
    SINGLE_STEP = "single-step"


MULTITASK_KINDS = frozenset({Stage1Kind.BASE_MT, Stage1Kind.MT, Stage1Kind.DMT})
TECHNIQUE_KINDS = frozenset({Stage1Kind.DMT, Stage1Kind.DTAT})
ANALYSIS_ADAPTATIONS = frozenset({Adaptation.PCOT, Adaptation.PCOT_NO_EXPLANATION})

_ADAPTATION_SLUGS = {
    Adaptation.BASELINE: "baseline",
    Adaptation.PCOT: "pcot",
    Adaptation.PCOT_NO_EXPLANATION: "pcot-noexp",
    Adaptation.PCOT_SINGLE_STEP: "pcot-single",
    Adaptation.PCOT_BASE_VERSION: "pcot-bv",
}
_STAGE2_SLUGS = {Stage2Kind.VAN: "van", Stage2Kind.ZCOT: "zcot", Stage2Kind.DEFSPEC: "defspec"}
STAGE2_DISPLAY = {Stage2Kind.VAN: "VaN", Stage2Kind.ZCOT: "Z-CoT", Stage2Kind.DEFSPEC: "DeF-SpeC"}
_ADAPTATION_DISPLAY = {
    Adaptation.BASELINE: "",
    Adaptation.PCOT: "PCoT",
    Adaptation.PCOT_NO_EXPLANATION: "PCoT No Exp",
    Adaptation.PCOT_SINGLE_STEP: "PCoT Single Step",
    Adaptation.PCOT_BASE_VERSION: "PCoT BV",
}


class MethodVariant(BaseModel):
    """One prompting method: adaptation of a stage-2 method, with its stage-1 kind."""
    model_config = ConfigDict(frozen=True)

    stage1_kind: Stage1Kind | None = None
    stage2_kind: Stage2Kind
    adaptation: Adaptation

    @model_validator(mode="after")
    def _check_stage1_kind(self) -> "MethodVariant":
        if self.adaptation in ANALYSIS_ADAPTATIONS and self.stage1_kind is None:
            raise ValueError(f"{self.adaptation.value} needs a stage-1 kind")
        if self.adaptation not in ANALYSIS_ADAPTATIONS and self.stage1_kind is not None:
            raise ValueError(f"{self.adaptation.value} has no separate strategy analysis stage")
        return self

    @property
    def slug(self) -> str:
        slug = f"{_ADAPTATION_SLUGS[self.adaptation]}-{_STAGE2_SLUGS[self.stage2_kind]}"
        if self.stage1_kind not in (None, Stage1Kind.DMT):
            slug += f"@{self.stage1_kind.value.lower()}"
        return slug

    @property
    def display_name(self) -> str:
        name = STAGE2_DISPLAY[self.stage2_kind]
        prefix = _ADAPTATION_DISPLAY[self.adaptation]
        if prefix:
            name = f"{prefix} {name}"
        if self.stage1_kind not in (None, Stage1Kind.DMT):
            name += f" ({self.stage1_kind.value})"
        return name

    @property
    def uses_analysis(self) -> bool:
        return self.adaptation in ANALYSIS_ADAPTATIONS

    @classmethod
    def parse(cls, slug: str) -> "MethodVariant":
        """Parses slugs such as 'baseline-van', 'pcot-zcot' or 'pcot-van@dtat'."""
        text = slug.strip().lower()
        body, _, kind = text.partition("@")
        adaptation_slug, _, stage2_slug = body.rpartition("-")
        adaptations = {v: k for k, v in _ADAPTATION_SLUGS.items()}
        stage2s = {v: k for k, v in _STAGE2_SLUGS.items()}
        kinds = {k.value.lower(): k for k in Stage1Kind}
        if adaptation_slug not in adaptations or stage2_slug not in stage2s or (kind and kind not in kinds):
            raise UnsupportedVariant(f"Unknown method variant {slug!r}")
        adaptation = adaptations[adaptation_slug]
        stage1 = kinds[kind] if kind else (Stage1Kind.DMT if adaptation in ANALYSIS_ADAPTATIONS else None)
        try:
            return cls(stage1_kind=stage1, stage2_kind=stage2s[stage2_slug], adaptation=adaptation)
        except ValueError as e:
            raise UnsupportedVariant(f"Invalid method variant {slug!r}: {e}") from e

    def __str__(self) -> str:
        return self.slug


class PromptComponentSet(BaseModel):
    """The blocks a prompt is assembled from. Optional blocks are left out of the template values."""
    model_config = ConfigDict(frozen=True)

    impersonation: str
    knowledge: str | None = None
    guidelines: str | None = None  # None when the template carries its own guidelines
    analysis: str | None = None
    document_text: str

    @field_validator("document_text")
    @classmethod
    def _document_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("document_text must not be empty")
        return value

    def template_values(self) -> dict[str, str]:
        values = {"impersonation": self.impersonation, "document": fence_document(self.document_text)}
        for key in ("knowledge", "guidelines", "analysis"):
            if getattr(self, key) is not None:
                values[key] = getattr(self, key)
        return values


class RenderedPrompt(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str
    content_hash: str
    variant: MethodVariant
    stage: Stage
    target_strategy: str | None = None  # shortcut, single-strategy prompts only

    @property
    def cache_scope(self) -> str:
        return _cache_scope(self.variant, self.stage, self.target_strategy)


# --- Template loading ---

@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    path = PROMPTS_DIR / f"{name}.txt"
    try:
        return path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise TemplateError(f"Prompt template not found: {path}") from None


def load_block(name: str) -> str:
    return load_template(name).rstrip("\n")


def fill_template(template: str, values: dict[str, str]) -> str:
    """Single-pass {{name}} substitution; substituted text is never re-scanned."""
    def _replace(match: re.Match) -> str:
        key = match.group(1)
        if key not in values or values[key] is None:
            raise TemplateError(f"Unresolved placeholder {{{{{key}}}}}")
        return values[key]

    return PLACEHOLDER_RE.sub(_replace, template)


def fill_components(template: str, components: PromptComponentSet, **extra: str) -> str:
    return fill_template(template, components.template_values() | extra)


def fence_document(text: str) -> str:
    return f"BEGIN TEXT\n{text}\nEND TEXT"


def content_hash(scope: str, model_id: str, text: str) -> str:
    canonical = json.dumps({"model_id": model_id, "text": text, "variant": scope},
                           sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _cache_scope(variant: MethodVariant, stage: Stage, target: str | None) -> str:
    # Stage-1 prompts do not depend on the stage-2 method, so they share a scope.
    if stage is Stage.STAGE1:
        kind = variant.stage1_kind.value if variant.stage1_kind else "base-version"
        return f"stage1:{kind}" + (f":{target}" if target else "")
    return variant.slug


def _rendered(text: str, variant: MethodVariant, stage: Stage, model_id: str,
              target: str | None = None) -> RenderedPrompt:
    scope = _cache_scope(variant, stage, target)
    return RenderedPrompt(text=text, content_hash=content_hash(scope, model_id, text),
                          variant=variant, stage=stage, target_strategy=target)


# --- Knowledge blocks ---

def strategy_block(strategy: PersuasionStrategy, with_techniques: bool) -> str:
    lines = [f"{strategy.name} [{strategy.shortcut}] - {strategy.definition}"]
    if with_techniques:
        lines.append("  Techniques:")
        lines.extend(f"  * {t.name}: {t.definition}" for t in strategy.techniques)
    return "\n".join(lines)


def knowledge_block(kind: Stage1Kind, taxonomy: list[PersuasionStrategy],
                    target: PersuasionStrategy | None = None) -> str:
    if kind is Stage1Kind.BASE_MT:
        return "Persuasion strategies:\n" + "\n".join(f"- {s.name}" for s in taxonomy)
    if kind in (Stage1Kind.TAT, Stage1Kind.DTAT):
        covered = [target]
    else:
        covered = taxonomy
    blocks = [strategy_block(s, with_techniques=kind in TECHNIQUE_KINDS) for s in covered]
    return "Persuasion strategies and definitions:\n\n" + "\n\n".join(blocks)


# --- Renderers ---

def render_stage1(variant: MethodVariant, doc: Document, taxonomy: list[PersuasionStrategy] | None = None,
                  model_id: str = "") -> list[RenderedPrompt]:
    """One prompt for BaseMT/MT/DMT; six single-strategy prompts for TAT/DTAT/TATB."""
    if variant.stage1_kind is None:
        raise UnsupportedVariant(f"{variant.slug} has no stage-1 strategy analysis")
    taxonomy = taxonomy or all_strategies()
    kind = variant.stage1_kind
    impersonation = load_block("impersonation_persuasion")

    if kind in MULTITASK_KINDS:
        components = PromptComponentSet(impersonation=impersonation, knowledge=knowledge_block(kind, taxonomy),
                                        guidelines=load_block("guidelines_persuasion"), document_text=doc.text)
        text = fill_components(load_template("stage1_multitask"), components)
        return [_rendered(text, variant, Stage.STAGE1, model_id)]

    prompts = []
    for strategy in taxonomy:
        components = PromptComponentSet(impersonation=impersonation,
                                        knowledge=knowledge_block(kind, taxonomy, target=strategy),
                                        guidelines=load_block("guidelines_persuasion_single"), document_text=doc.text)
        text = fill_components(load_template("stage1_single_strategy"), components, target_strategy=strategy.name)
        prompts.append(_rendered(text, variant, Stage.STAGE1, model_id, target=strategy.shortcut))
    return prompts


def _instructions(stage2_kind: Stage2Kind) -> str:
    return load_block(f"instructions_{_STAGE2_SLUGS[stage2_kind]}")


def render_stage2(variant: MethodVariant, doc: Document, analysis: PersuasionAnalysis | None = None,
                  model_id: str = "") -> RenderedPrompt:
    if variant.adaptation in (Adaptation.PCOT_SINGLE_STEP, Adaptation.PCOT_BASE_VERSION):
        raise UnsupportedVariant(f"{variant.slug} is rendered by its own renderer")
    components = PromptComponentSet(impersonation=load_block("impersonation_disinformation"),
                                    guidelines=load_block("guidelines_disinformation"), document_text=doc.text)
    instructions = _instructions(variant.stage2_kind)
    if variant.adaptation is Adaptation.BASELINE:
        text = fill_components(load_template("stage2_baseline"), components, instructions=instructions)
        return _rendered(text, variant, Stage.STAGE2, model_id)

    if analysis is None:
        raise MissingAnalysis(f"{variant.slug} needs a stage-1 analysis")
    if variant.adaptation is Adaptation.PCOT_NO_EXPLANATION:
        if not analysis.failed:
            analysis = strip_explanations(analysis)
        serialized = serialize_analysis(analysis, include_explanations=False)
    else:
        serialized = serialize_analysis(analysis)
    components = components.model_copy(update={"analysis": serialized})
    text = fill_components(load_template("stage2_pcot"), components, instructions=instructions,
                           analysis_guidelines=load_block("guidelines_analysis"))
    return _rendered(text, variant, Stage.STAGE2, model_id)


def render_single_step(stage2_kind: Stage2Kind, doc: Document, taxonomy: list[PersuasionStrategy] | None = None,
                       model_id: str = "") -> RenderedPrompt:
    """Persuasion analysis and the disinformation decision in one prompt."""
    taxonomy = taxonomy or all_strategies()
    variant = MethodVariant(stage2_kind=stage2_kind, adaptation=Adaptation.PCOT_SINGLE_STEP)
    components = PromptComponentSet(impersonation=load_block("impersonation_disinformation"),
                                    knowledge=knowledge_block(Stage1Kind.DMT, taxonomy),
                                    guidelines=load_block("guidelines_single_step"), document_text=doc.text)
    text = fill_components(load_template("single_step"), components, instructions=_instructions(stage2_kind))
    return _rendered(text, variant, Stage.SINGLE_STEP, model_id)


def render_base_version_stage1(stage2_kind: Stage2Kind, doc: Document, model_id: str = "") -> RenderedPrompt:
    variant = MethodVariant(stage2_kind=stage2_kind, adaptation=Adaptation.PCOT_BASE_VERSION)
    components = PromptComponentSet(impersonation=load_block("impersonation_persuasion"), document_text=doc.text)
    text = fill_components(load_template("stage1_base_version"), components)
    return _rendered(text, variant, Stage.STAGE1, model_id)


def render_base_version_stage2(stage2_kind: Stage2Kind, doc: Document, analysis_text: str,
                               model_id: str = "") -> RenderedPrompt:
    variant = MethodVariant(stage2_kind=stage2_kind, adaptation=Adaptation.PCOT_BASE_VERSION)
    components = PromptComponentSet(impersonation=load_block("impersonation_disinformation"),
                                    guidelines=load_block("guidelines_disinformation"),
                                    analysis=analysis_text.strip(), document_text=doc.text)
    text = fill_components(load_template("stage2_base_version"), components, instructions=_instructions(stage2_kind),
                           analysis_guidelines=load_block("guidelines_analysis"))
    return _rendered(text, variant, Stage.STAGE2, model_id)


def render_base_version(stage2_kind: Stage2Kind, doc: Document, analysis_text: str,
                        model_id: str = "") -> tuple[RenderedPrompt, RenderedPrompt]:
    """The generic-persuasion stage-1 prompt and the stage-2 prompt embedding its free-form output."""
    return (render_base_version_stage1(stage2_kind, doc, model_id),
            render_base_version_stage2(stage2_kind, doc, analysis_text, model_id))


def render_all(doc: Document, variants: list[MethodVariant], model_id: str = "",
               analysis: PersuasionAnalysis | None = None, analysis_text: str = "") -> dict[str, RenderedPrompt]:
    """Every prompt the given variants would send for one document, keyed by a file-friendly name."""
    prompts: dict[str, RenderedPrompt] = {}
    for variant in variants:
        if variant.adaptation is Adaptation.PCOT_SINGLE_STEP:
            prompts[f"{variant.slug}.single-step"] = render_single_step(variant.stage2_kind, doc, model_id=model_id)
        elif variant.adaptation is Adaptation.PCOT_BASE_VERSION:
            stage1, stage2 = render_base_version(variant.stage2_kind, doc, analysis_text or "(no analysis)", model_id)
            prompts[f"{variant.slug}.stage1"] = stage1
            prompts[f"{variant.slug}.stage2"] = stage2
        else:
            if variant.uses_analysis:
                for prompt in render_stage1(variant, doc, model_id=model_id):
                    suffix = f".{prompt.target_strategy}" if prompt.target_strategy else ""
                    prompts[f"stage1-{variant.stage1_kind.value.lower()}{suffix}"] = prompt
            stage2_analysis = analysis or PersuasionAnalysis.sentinel()
            prompts[f"{variant.slug}.stage2"] = render_stage2(variant, doc, stage2_analysis, model_id)
    return prompts
