"""
Evaluation records and every statistic the reports are built from.

All scores are computed in double precision; rounding happens only when a
table is rendered.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterable, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator
from scipy.stats import chi2

from pcot import config
from pcot.corpus import CutoffClass, Genre, Label, SourceDataset
from pcot.errors import AllZero, EmptyInput, IdMismatch, MetricsError
from pcot.prompt_engine import Adaptation, MethodVariant
from pcot.response_parser import PersuasionAnalysis
from pcot.taxonomy import StrategyId, all_strategies, resolve_strategy

logger = logging.getLogger(__name__)


class RecordFlag(str, Enum):
    STAGE_ONE_FAILED = "StageOneFailed"
    STAGE_ONE_REPAIRED = "StageOneRepaired"
    STAGE_TWO_REPAIRED = "StageTwoRepaired"
    STAGE_TWO_FAILED = "StageTwoFailed"
    TRUNCATED = "Truncated"


class EvalRecord(BaseModel):
    """One (model, method, dataset, document) outcome."""
    model_config = ConfigDict(frozen=True)

    doc_id: str
    gold_label: Label
    predicted: Label
    analysis: PersuasionAnalysis | None = None
    model_id: str
    method: MethodVariant
    dataset: SourceDataset
    flags: tuple[RecordFlag, ...] = ()
    genre: Genre | None = None
    cutoff_class: CutoffClass | None = None
    gold_strategies: tuple[StrategyId, ...] | None = None
    raw_response: str = ""

    @field_validator("method", mode="before")
    @classmethod
    def _method_from_slug(cls, value):
        return MethodVariant.parse(value) if isinstance(value, str) else value

    @field_serializer("method")
    def _method_to_slug(self, method: MethodVariant) -> str:
        return method.slug

    @field_validator("flags", mode="before")
    @classmethod
    def _sorted_flags(cls, value):
        return tuple(sorted({RecordFlag(f) for f in value or ()}, key=lambda f: f.value))

    @model_validator(mode="after")
    def _analysis_matches_method(self) -> "EvalRecord":
        if self.analysis is not None and self.method.adaptation in (Adaptation.BASELINE, Adaptation.PCOT_BASE_VERSION):
            raise ValueError(f"{self.method.slug} records carry no strategy analysis")
        return self

    @property
    def key(self) -> str:
        return record_key(self.model_id, self.method.slug, self.dataset.value, self.doc_id)

    @property
    def stage_two_failed(self) -> bool:
        return RecordFlag.STAGE_TWO_FAILED in self.flags

    @property
    def stage_one_failed(self) -> bool:
        return RecordFlag.STAGE_ONE_FAILED in self.flags

    @property
    def effective_prediction(self) -> Label:
        """A failed verdict always counts as a wrong answer."""
        if self.stage_two_failed:
            return Label.CREDIBLE if self.gold_label is Label.DISINFORMATION else Label.DISINFORMATION
        return self.predicted

    @property
    def correct(self) -> bool:
        return self.effective_prediction is self.gold_label


def record_key(model_id: str, method_slug: str, dataset: str, doc_id: str) -> str:
    return f"{model_id}|{method_slug}|{dataset}|{doc_id}"


# --- F1 ---

@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def binary_confusion(records: Iterable[EvalRecord]) -> Confusion:
    tp = fp = fn = tn = 0
    for record in records:
        gold = record.gold_label is Label.DISINFORMATION
        pred = record.effective_prediction is Label.DISINFORMATION
        if gold and pred:
            tp += 1
        elif pred:
            fp += 1
        elif gold:
            fn += 1
        else:
            tn += 1
    return Confusion(tp, fp, fn, tn)


def f1_binary(records: Iterable[EvalRecord]) -> float:
    """F1 of the Disinformation class; StageTwoFailed records count as wrong."""
    records = list(records)
    if not records:
        raise EmptyInput("f1_binary needs at least one record")
    counts = binary_confusion(records)
    return f1_from_counts(counts.tp, counts.fp, counts.fn)


def _as_sets(mapping: dict) -> dict[str, set[StrategyId]]:
    return {doc_id: {resolve_strategy(s).id for s in strategies} for doc_id, strategies in mapping.items()}


def multilabel_counts(gold: dict, pred: dict, strategies: Iterable[StrategyId] | None = None) -> Confusion:
    if set(gold) != set(pred):
        missing = sorted(set(gold) ^ set(pred))[:5]
        raise IdMismatch(f"Gold and predicted strategy sets cover different documents, e.g. {missing}")
    gold_sets, pred_sets = _as_sets(gold), _as_sets(pred)
    scope = set(strategies) if strategies is not None else {s.id for s in all_strategies()}
    tp = fp = fn = 0
    for doc_id, gold_set in gold_sets.items():
        gold_set, pred_set = gold_set & scope, pred_sets[doc_id] & scope
        tp += len(gold_set & pred_set)
        fp += len(pred_set - gold_set)
        fn += len(gold_set - pred_set)
    return Confusion(tp=tp, fp=fp, fn=fn)


def f1_micro_multilabel(gold: dict, pred: dict) -> float:
    """TP/FP/FN pooled over all strategies and documents, then one F1 of the sums."""
    counts = multilabel_counts(gold, pred)
    return f1_from_counts(counts.tp, counts.fp, counts.fn)


def f1_per_strategy(gold: dict, pred: dict) -> dict[StrategyId, float]:
    scores = {}
    for strategy in all_strategies():
        counts = multilabel_counts(gold, pred, strategies=[strategy.id])
        scores[strategy.id] = f1_from_counts(counts.tp, counts.fp, counts.fn)
    return scores


# --- McNemar ---

class ContingencyTable2x2(BaseModel):
    """
    Paired outcomes of methods A and B on the same documents.
      n00: both correct   n01: only A wrong
      n10: only B wrong   n11: both wrong
    """
    model_config = ConfigDict(frozen=True)

    n00: int = Field(ge=0)
    n01: int = Field(ge=0)
    n10: int = Field(ge=0)
    n11: int = Field(ge=0)

    @property
    def total(self) -> int:
        return self.n00 + self.n01 + self.n10 + self.n11

    @property
    def discordant(self) -> int:
        return self.n01 + self.n10

    @classmethod
    def from_records(cls, a: Iterable[EvalRecord], b: Iterable[EvalRecord]) -> "ContingencyTable2x2":
        """Pairs the two methods' records on (dataset, doc_id); only shared documents count."""
        a_by_doc = {(r.dataset, r.doc_id): r for r in a}
        b_by_doc = {(r.dataset, r.doc_id): r for r in b}
        shared = a_by_doc.keys() & b_by_doc.keys()
        if not shared:
            raise EmptyInput("The two methods share no documents")
        cells = {(False, False): "n00", (True, False): "n01", (False, True): "n10", (True, True): "n11"}
        counts = dict.fromkeys(cells.values(), 0)
        for doc in shared:
            counts[cells[(not a_by_doc[doc].correct, not b_by_doc[doc].correct)]] += 1
        return cls(**counts)

    def as_matrix(self) -> list[list[int]]:
        return [[self.n00, self.n01], [self.n10, self.n11]]


class McNemarMode(str, Enum):
    EXACT = "Exact"
    CHI_SQUARED_CC = "ChiSquaredCC"
    AUTO = "Auto"


def mcnemar_exact(n01: int, n10: int) -> Fraction:
    """Two-sided binomial test with p=0.5 on the discordant pairs, as an exact fraction."""
    n = n01 + n10
    if n == 0:
        return Fraction(1)
    k = min(n01, n10)
    tail = Fraction(sum(math.comb(n, i) for i in range(k + 1)), 2 ** n)
    return min(Fraction(1), 2 * tail)


def mcnemar_statistic(n01: int, n10: int) -> float:
    """Continuity-corrected chi-square statistic."""
    return (abs(n01 - n10) - 1) ** 2 / (n01 + n10)


def mcnemar(table: ContingencyTable2x2, mode: McNemarMode = McNemarMode.AUTO) -> float:
    if table.discordant == 0:
        return 1.0
    mode = McNemarMode(mode)
    if mode is McNemarMode.AUTO:
        mode = McNemarMode.EXACT if table.discordant < config.MCNEMAR_EXACT_BELOW else McNemarMode.CHI_SQUARED_CC
    if mode is McNemarMode.EXACT:
        return float(mcnemar_exact(table.n01, table.n10))
    return float(chi2.sf(mcnemar_statistic(table.n01, table.n10), df=1))


def significance_level(p_value: float, levels: Iterable[float] = config.SIGNIFICANCE_LEVELS) -> float | None:
    """Strictest level the p-value reaches, or None."""
    reached = [level for level in levels if p_value <= level]
    return min(reached) if reached else None


# --- MCC ---

def mcc(tp: int, tn: int, fp: int, fn: int) -> float:
    if tp == tn == fp == fn == 0:
        raise AllZero("mcc needs at least one non-zero count")
    denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denominator == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denominator)


def mcc_from_vectors(x: Iterable[bool], y: Iterable[bool]) -> float:
    """MCC of two paired binary vectors; x plays the role of gold."""
    x, y = list(x), list(y)
    if len(x) != len(y):
        raise IdMismatch("mcc vectors differ in length")
    tp = sum(1 for a, b in zip(x, y) if a and b)
    tn = sum(1 for a, b in zip(x, y) if not a and not b)
    fp = sum(1 for a, b in zip(x, y) if not a and b)
    fn = sum(1 for a, b in zip(x, y) if a and not b)
    return mcc(tp, tn, fp, fn)


# --- Changes and spread ---

def percentage_change(base: float, new: float) -> float:
    if base <= 0:
        raise MetricsError(f"percentage_change needs a positive base, got {base}")
    return 100.0 * (new - base) / base


def percentage_point_change(base: float, new: float) -> float:
    return 100.0 * (new - base)


def mean_std(values: Iterable[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (ddof=1); std is 0 for a single value."""
    array = np.asarray(list(values), dtype=float)
    if array.size == 0:
        raise EmptyInput("mean_std needs at least one value")
    std = float(np.std(array, ddof=1)) if array.size > 1 else 0.0
    return float(np.mean(array)), std


# --- Persuasion subsets ---

class SubsetSplit(NamedTuple):
    persuasion: list[EvalRecord]
    no_persuasion: list[EvalRecord]
    excluded: int


def subset_split(records: Iterable[EvalRecord], analyses: dict[tuple, PersuasionAnalysis | None] | None = None) -> SubsetSplit:
    """
    Partitions records by whether their analysis names at least one strategy.
    Records without a usable analysis (missing, or the failed sentinel) are
    excluded and counted. `analyses`, keyed by (model_id, dataset, doc_id),
    supplies the analysis for records that carry none of their own.
    """
    persuasion, no_persuasion, excluded = [], [], 0
    for record in records:
        analysis = record.analysis
        if analysis is None and analyses is not None:
            analysis = analyses.get((record.model_id, record.dataset, record.doc_id))
        if analysis is None or analysis.failed:
            excluded += 1
            continue
        (persuasion if analysis.has_persuasion() else no_persuasion).append(record)
    if excluded:
        logger.info("subset_split excluded %d records without a usable analysis", excluded)
    return SubsetSplit(persuasion, no_persuasion, excluded)


class DistributionBy(str, Enum):
    GOLD_LABEL = "GoldLabel"
    PREDICTED_LABEL = "PredictedLabel"


CLASS_ROWS = {Label.DISINFORMATION: "DIS", Label.CREDIBLE: "REL"}


def strategy_distribution(records: Iterable[EvalRecord], by: DistributionBy = DistributionBy.GOLD_LABEL) -> dict[str, dict[str, float]]:
    """
    Percentage of documents per class with each strategy present, plus ALL
    (at least one strategy). Classes with no documents are left out.
    Grouping by predicted label uses the parsed verdict and skips records
    whose verdict failed to parse.
    """
    by_gold = DistributionBy(by) is DistributionBy.GOLD_LABEL
    buckets: dict[Label, list[PersuasionAnalysis]] = {Label.DISINFORMATION: [], Label.CREDIBLE: []}
    excluded = 0
    for record in records:
        if record.analysis is None or record.analysis.failed or record.stage_one_failed:
            excluded += 1
            continue
        if not by_gold and record.stage_two_failed:
            excluded += 1
            continue
        label = record.gold_label if by_gold else record.predicted
        buckets[label].append(record.analysis)
    if excluded:
        logger.info("strategy_distribution excluded %d records without a usable analysis or verdict", excluded)

    table = {}
    for label, analyses in buckets.items():
        if not analyses:
            continue
        n = len(analyses)
        row = {s.shortcut: 100.0 * sum(a.labels[s.id] for a in analyses) / n for s in all_strategies()}
        row["ALL"] = 100.0 * sum(a.has_persuasion() for a in analyses) / n
        table[CLASS_ROWS[label]] = row
    return table
