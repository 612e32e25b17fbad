"""
Decodes raw model text into persuasion analyses (stage 1) and verdicts (stage 2).

Every parser here is total: malformed input never raises, it lowers the
parse grade instead (Strict -> Repaired -> Failed).
"""
import json
import logging
from dataclasses import dataclass
from enum import Enum

import regex
from pydantic import BaseModel, ConfigDict, model_validator

from pcot.corpus import Label
from pcot.errors import FailedAnalysis, UnknownStrategy
from pcot.taxonomy import PersuasionStrategy, StrategyId, all_strategies, normalize_key, resolve_strategy, strategy_ids

logger = logging.getLogger(__name__)


class ParseGrade(str, Enum):
    STRICT = "Strict"
    REPAIRED = "Repaired"
    FAILED = "Failed"


class PersuasionAnalysis(BaseModel):
    model_config = ConfigDict(frozen=True)

    labels: dict[StrategyId, bool]
    explanations: dict[StrategyId, str]
    parse_grade: ParseGrade

    @model_validator(mode="after")
    def _check_shape(self) -> "PersuasionAnalysis":
        expected = set(strategy_ids())
        if set(self.labels) != expected:
            raise ValueError("labels must cover exactly the six strategies")
        if set(self.explanations) != expected:
            raise ValueError("explanations must cover exactly the six strategies")
        if self.parse_grade is ParseGrade.FAILED:
            if any(self.labels.values()) or any(self.explanations.values()):
                raise ValueError("a failed analysis must be the all-No sentinel")
        return self

    @classmethod
    def build(cls, labels: dict[StrategyId, bool], explanations: dict[StrategyId, str] | None,
              grade: ParseGrade) -> "PersuasionAnalysis":
        """Builds an analysis with keys in taxonomy order."""
        explanations = explanations or {}
        ids = strategy_ids()
        return cls(
            labels={sid: bool(labels[sid]) for sid in ids},
            explanations={sid: explanations.get(sid, "") for sid in ids},
            parse_grade=grade,
        )

    @classmethod
    def sentinel(cls) -> "PersuasionAnalysis":
        return cls.build({sid: False for sid in strategy_ids()}, None, ParseGrade.FAILED)

    @property
    def failed(self) -> bool:
        return self.parse_grade is ParseGrade.FAILED

    def present(self) -> list[StrategyId]:
        return [sid for sid, yes in self.labels.items() if yes]

    def has_persuasion(self) -> bool:
        return any(self.labels.values())


class Verdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    label: Label
    raw_text: str
    parse_grade: ParseGrade


@dataclass(frozen=True)
class StrategyAnswer:
    """One strategy's answer from a single-strategy (TAT-family) prompt."""
    label: bool
    explanation: str
    parse_grade: ParseGrade


# --- Label / JSON helpers ---

_YES = frozenset({"yes", "true", "present", "y"})
_NO = frozenset({"no", "false", "absent", "n"})
_FENCE_RE = regex.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\r?\n?(.*?)```", regex.DOTALL)
_TRAILING_COMMA_RE = regex.compile(r",(\s*[}\]])")
_VERDICT_TOKEN_RE = regex.compile(r"(?<![\p{L}\p{N}_])(yes|no)(?![\p{L}\p{N}_])", regex.IGNORECASE)
_SMART_QUOTES = str.maketrans({"“": '"', "”": '"', "„": '"'})

ANALYSIS_WRAPPER_KEYS = ("persuasion analysis", "analysis", "persuasion")
VERDICT_KEY = "disinformation"


def _as_text(raw) -> str:
    if raw is None:
        return ""
    if isinstance(raw, (bytes, bytearray)):
        return bytes(raw).decode("utf-8", errors="replace")
    return str(raw)


def _label_value(value) -> bool | None:
    """Maps a label value or synonym to True/False, or None when unrecognized."""
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        token = value.strip().strip(".!").casefold()
        if token in _YES:
            return True
        if token in _NO:
            return False
    return None


def _loads(text: str):
    try:
        return json.loads(text)
    except (ValueError, RecursionError):
        return None


def _balanced_objects(text: str) -> list[str]:
    """Extracts every top-level balanced {...} span, respecting JSON strings."""
    spans, depth, start = [], 0, None
    in_string = escape = False
    for i, ch in enumerate(text):
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = depth > 0
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth:
            depth -= 1
            if depth == 0:
                spans.append(text[start:i + 1])
    return spans


def _repair_candidates(text: str) -> list:
    """Syntax-only repairs: fences, smart quotes, surrounding prose, trailing commas."""
    stripped = text.translate(_SMART_QUOTES)
    fenced = [m.group(1) for m in _FENCE_RE.finditer(stripped)]
    sources = fenced + [stripped]
    objects = []
    for source in sources:
        for candidate in [source.strip(), *_balanced_objects(source)]:
            parsed = _loads(candidate)
            if parsed is None:
                parsed = _loads(_TRAILING_COMMA_RE.sub(r"\1", candidate))
            if isinstance(parsed, dict):
                objects.append(parsed)
    return objects


def _unwrap_analysis(payload: dict) -> dict:
    for key, value in payload.items():
        if isinstance(key, str) and normalize_key(key) in ANALYSIS_WRAPPER_KEYS and isinstance(value, dict):
            return value
    return payload


# --- Stage 1 ---

def _strict_analysis(payload: dict) -> PersuasionAnalysis | None:
    names = {s.name: s.id for s in all_strategies()}
    if set(payload) != set(names):
        return None
    labels, explanations = {}, {}
    for name, sid in names.items():
        entry = payload[name]
        if not isinstance(entry, dict) or set(entry) - {"label", "explanation"}:
            return None
        if entry.get("label") not in ("Yes", "No") or not isinstance(entry.get("explanation", ""), str):
            return None
        labels[sid] = entry["label"] == "Yes"
        explanations[sid] = entry.get("explanation", "")
    return PersuasionAnalysis.build(labels, explanations, ParseGrade.STRICT)


def _entry_label(entry) -> tuple[bool | None, str]:
    if isinstance(entry, dict):
        fields = {normalize_key(str(k)): v for k, v in entry.items()}
        value = next((fields[k] for k in ("label", "present", "detected", "answer", "value") if k in fields), None)
        explanation = next((fields[k] for k in ("explanation", "reason", "rationale") if k in fields), "")
        return _label_value(value), explanation if isinstance(explanation, str) else str(explanation)
    return _label_value(entry), ""


def _repaired_analysis(payload: dict) -> PersuasionAnalysis | None:
    labels: dict[StrategyId, bool] = {}
    explanations: dict[StrategyId, str] = {}
    for key, entry in payload.items():
        try:
            strategy = resolve_strategy(str(key))
        except UnknownStrategy:
            continue
        label, explanation = _entry_label(entry)
        if label is None:
            return None
        if strategy.id in labels and labels[strategy.id] != label:
            return None
        labels[strategy.id] = label
        explanations[strategy.id] = explanation
    if set(labels) != set(strategy_ids()):
        return None
    return PersuasionAnalysis.build(labels, explanations, ParseGrade.REPAIRED)


def parse_analysis(raw) -> PersuasionAnalysis:
    """Parses a stage-1 response; unparseable input yields the all-No Failed sentinel."""
    text = _as_text(raw)
    payload = _loads(text.strip())
    if isinstance(payload, dict):
        strict = _strict_analysis(_unwrap_analysis(payload))
        if strict is not None:
            return strict
    for candidate in _repair_candidates(text):
        repaired = _repaired_analysis(_unwrap_analysis(candidate))
        if repaired is not None:
            logger.debug("Stage-1 response needed repair")
            return repaired
    return PersuasionAnalysis.sentinel()


def parse_strategy_answer(raw, strategy: PersuasionStrategy) -> StrategyAnswer:
    """Parses a single-strategy response; keyed by the strategy or a bare {label, explanation}."""
    text = _as_text(raw)
    payload = _loads(text.strip())
    if isinstance(payload, dict) and set(payload) == {strategy.name}:
        entry = payload[strategy.name]
        if isinstance(entry, dict) and entry.get("label") in ("Yes", "No") and isinstance(entry.get("explanation", ""), str):
            return StrategyAnswer(entry["label"] == "Yes", entry.get("explanation", ""), ParseGrade.STRICT)

    for candidate in _repair_candidates(text):
        entry = candidate
        for key, value in candidate.items():
            try:
                if resolve_strategy(str(key)).id is strategy.id:
                    entry = value
                    break
            except UnknownStrategy:
                continue
        label, explanation = _entry_label(entry)
        if label is not None:
            return StrategyAnswer(label, explanation, ParseGrade.REPAIRED)

    tokens = _VERDICT_TOKEN_RE.findall(text)
    if tokens:
        return StrategyAnswer(tokens[-1].casefold() == "yes", "", ParseGrade.REPAIRED)
    return StrategyAnswer(False, "", ParseGrade.FAILED)


def merge_strategy_answers(answers: dict[StrategyId, StrategyAnswer]) -> PersuasionAnalysis:
    """Joins six single-strategy answers; any missing or failed answer fails the whole analysis."""
    if set(answers) != set(strategy_ids()) or any(a.parse_grade is ParseGrade.FAILED for a in answers.values()):
        return PersuasionAnalysis.sentinel()
    grade = ParseGrade.STRICT
    if any(a.parse_grade is ParseGrade.REPAIRED for a in answers.values()):
        grade = ParseGrade.REPAIRED
    return PersuasionAnalysis.build(
        {sid: a.label for sid, a in answers.items()},
        {sid: a.explanation for sid, a in answers.items()},
        grade,
    )


def strip_explanations(analysis: PersuasionAnalysis) -> PersuasionAnalysis:
    if analysis.failed:
        raise FailedAnalysis("Cannot strip explanations from a failed analysis")
    return PersuasionAnalysis.build(dict(analysis.labels), None, analysis.parse_grade)


def serialize_analysis(analysis: PersuasionAnalysis, include_explanations: bool = True) -> str:
    """Stable JSON, strategy name -> {label, explanation}, in taxonomy order."""
    payload = {}
    for strategy in all_strategies():
        entry = {"label": "Yes" if analysis.labels[strategy.id] else "No"}
        if include_explanations:
            entry["explanation"] = analysis.explanations[strategy.id]
        payload[strategy.name] = entry
    return json.dumps(payload, indent=2, ensure_ascii=False)


# --- Stage 2 ---

def _verdict_from_payload(payload: dict) -> bool | None:
    for key, value in payload.items():
        if isinstance(key, str) and normalize_key(key) == VERDICT_KEY:
            return _label_value(value)
    return None


def parse_verdict(raw, abstain: Label = Label.CREDIBLE) -> Verdict:
    """
    Reads the {"disinformation": "Yes"|"No"} answer.
    Falls back to the last JSON object carrying the answer, then to the last
    word-bounded yes/no token; otherwise Failed with the abstain label.
    """
    text = _as_text(raw)
    payload = _loads(text.strip())
    if isinstance(payload, dict) and payload.get(VERDICT_KEY) in ("Yes", "No"):
        label = Label.DISINFORMATION if payload[VERDICT_KEY] == "Yes" else Label.CREDIBLE
        return Verdict(label=label, raw_text=text, parse_grade=ParseGrade.STRICT)

    for candidate in reversed(_repair_candidates(text)):
        answer = _verdict_from_payload(candidate)
        if answer is not None:
            return Verdict(label=Label.DISINFORMATION if answer else Label.CREDIBLE,
                           raw_text=text, parse_grade=ParseGrade.REPAIRED)

    tokens = _VERDICT_TOKEN_RE.findall(text)
    if tokens:
        answer = tokens[-1].casefold() == "yes"
        return Verdict(label=Label.DISINFORMATION if answer else Label.CREDIBLE,
                       raw_text=text, parse_grade=ParseGrade.REPAIRED)
    return Verdict(label=abstain, raw_text=text, parse_grade=ParseGrade.FAILED)
