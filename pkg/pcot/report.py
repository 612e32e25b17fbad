"""
Report tables built from a results store.

A ResultStore is either a JSONL store of EvalRecords written by the runner, or
an "external" store of published scores (CSV with columns model, variant,
grouping, f1). Every builder returns a Table, which renders to Markdown or CSV.
Scores are rounded only when a cell is formatted.
"""
import logging
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from pcot import config
from pcot.corpus import CutoffClass, Genre, Label
from pcot.errors import EmptyInput, MissingVariant, ReportError, UnsupportedVariant
from pcot.metrics import (ContingencyTable2x2, DistributionBy, EvalRecord, f1_binary, f1_from_counts, mcc_from_vectors,
                          mcnemar, mean_std, multilabel_counts, percentage_change, percentage_point_change,
                          significance_level, strategy_distribution, subset_split)
from pcot.prompt_engine import STAGE2_DISPLAY, Adaptation, MethodVariant, Stage1Kind
from pcot.response_parser import PersuasionAnalysis
from pcot.runner import read_results
from pcot.taxonomy import all_strategies

logger = logging.getLogger(__name__)


class Grouping(str, Enum):
    OVERALL = "Overall"
    ARTICLES = "Articles"
    POSTS = "Posts"
    PRIOR_CUTOFF = "PriorCutoff"
    POST_CUTOFF = "PostCutoff"
    PERSUASION = "Persuasion"
    NO_PERSUASION = "NoPersuasion"

    @property
    def label(self) -> str:
        return _GROUPING_LABELS[self]

    @classmethod
    def parse(cls, text: str) -> "Grouping":
        wanted = re.sub(r"[\s_\-]+", "", str(text)).casefold()
        for grouping in cls:
            if grouping.value.casefold() == wanted:
                return grouping
        raise ReportError(f"Unknown grouping {text!r}")


_GROUPING_LABELS = {
    Grouping.OVERALL: "Overall",
    Grouping.ARTICLES: "Articles",
    Grouping.POSTS: "Posts",
    Grouping.PRIOR_CUTOFF: "Prior Cutoff",
    Grouping.POST_CUTOFF: "Post Cutoff",
    Grouping.PERSUASION: "Persuasion",
    Grouping.NO_PERSUASION: "No Persuasion",
}
MAIN_GROUPINGS = (Grouping.OVERALL, Grouping.ARTICLES, Grouping.POSTS, Grouping.PRIOR_CUTOFF, Grouping.POST_CUTOFF)
SUBSET_GROUPINGS = (Grouping.PERSUASION, Grouping.NO_PERSUASION)


class ReportFormat(str, Enum):
    MARKDOWN = "Markdown"
    CSV = "CSV"


class ReportSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    groupings: tuple[Grouping, ...] = MAIN_GROUPINGS
    compare: tuple[tuple[str, str], ...] = ()
    significance_level: float = config.DEFAULT_SIGNIFICANCE_LEVEL
    formats: tuple[ReportFormat, ...] = (ReportFormat.MARKDOWN,)
    with_std: bool = False

    @field_validator("significance_level")
    @classmethod
    def _known_level(cls, value: float) -> float:
        if value not in config.SIGNIFICANCE_LEVELS:
            raise ValueError(f"significance level must be one of {config.SIGNIFICANCE_LEVELS}")
        return value

    @field_validator("compare", mode="before")
    @classmethod
    def _parse_pairs(cls, value):
        pairs = []
        for pair in value or ():
            if isinstance(pair, str):
                base, sep, new = pair.partition(":")
                if not sep or not base or not new:
                    raise ValueError(f"compare pair {pair!r} must look like base:new")
                pair = (base.strip(), new.strip())
            pairs.append(tuple(pair))
        return tuple(pairs)


@dataclass
class Table:
    title: str
    columns: list[str]
    rows: list[list[str]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_markdown(self) -> str:
        lines = ["| " + " | ".join(self.columns) + " |",
                 "| " + " | ".join("---" for _ in self.columns) + " |"]
        lines.extend("| " + " | ".join(row) + " |" for row in self.rows)
        return "\n".join(lines) + "\n"

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, lineterminator="\n")

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.title.lower()).strip("_")


# --- Store ---

def display_model(model_id: str) -> str:
    for entry in config.MODEL_MATRIX.values():
        if entry["model_id"] == model_id:
            return entry.get("display_name", model_id)
    return model_id


def _model_order(model_id: str) -> tuple[int, str]:
    ids = [entry["model_id"] for entry in config.MODEL_MATRIX.values()]
    return (ids.index(model_id) if model_id in ids else len(ids), model_id)


def _parse_variant(label: str) -> MethodVariant | None:
    try:
        return MethodVariant.parse(label)
    except UnsupportedVariant:
        return None


def method_label(label: str) -> str:
    variant = _parse_variant(label)
    return variant.display_name if variant else label


def pair_label(new: str) -> str:
    """Method column of a Base vs PCoT row: the stage-2 method name when the PCoT side is plain PCoT."""
    variant = _parse_variant(new)
    if variant is not None and variant.adaptation is Adaptation.PCOT and variant.stage1_kind is Stage1Kind.DMT:
        return STAGE2_DISPLAY[variant.stage2_kind]
    return method_label(new)


def _fmt(score: float | None) -> str:
    return "-" if score is None else f"{score:.3f}"


def _fmt_change(base: float | None, new: float | None) -> str:
    if new is None:
        return "-"
    if base is None or base <= 0:
        return _fmt(new)
    return f"{new:.3f} ({percentage_change(base, new):+.1f}%)"


class ResultStore:
    """Scores per (model, variant, grouping), computed from records or read from a published table."""

    def __init__(self, records: list[EvalRecord] | None = None,
                 external: dict[tuple[str, str, Grouping], float] | None = None):
        self.records = list(records or [])
        self.external = dict(external or {})
        self._analysis_index: dict[tuple, PersuasionAnalysis] | None = None

    @classmethod
    def from_jsonl(cls, path: str | os.PathLike) -> "ResultStore":
        path = Path(path)
        if path.is_dir():
            path = path / config.RESULTS_FILE
        if not path.exists():
            raise FileNotFoundError(f"Results store not found: {path}")
        return cls(records=read_results(path))

    @classmethod
    def from_external_csv(cls, path: str | os.PathLike) -> "ResultStore":
        frame = pd.read_csv(path, dtype={"model": str, "variant": str, "grouping": str})
        missing = {"model", "variant", "grouping", "f1"} - set(frame.columns)
        if missing:
            raise ReportError(f"External store {path} lacks columns: {', '.join(sorted(missing))}")
        scores = {}
        for row in frame.itertuples(index=False):
            scores[(row.model.strip(), row.variant.strip(), Grouping.parse(row.grouping))] = float(row.f1)
        return cls(external=scores)

    @property
    def has_records(self) -> bool:
        return bool(self.records)

    def require_records(self, what: str) -> None:
        if not self.has_records:
            raise ReportError(f"{what} needs per-document records; an external score table cannot provide them")

    def models(self) -> list[str]:
        if self.records:
            return sorted({r.model_id for r in self.records}, key=_model_order)
        seen: dict[str, None] = {}
        for model, _, _ in self.external:
            seen.setdefault(model, None)
        return list(seen)

    def variants(self) -> list[str]:
        labels = {r.method.slug for r in self.records} | {v for _, v, _ in self.external}
        return sorted(labels)

    def require_variants(self, labels) -> None:
        known = set(self.variants())
        for label in labels:
            if label not in known:
                raise MissingVariant(f"Variant {label!r} is not in the store (has: {', '.join(sorted(known)) or 'none'})")

    @property
    def analysis_index(self) -> dict[tuple, PersuasionAnalysis]:
        """(model_id, dataset, doc_id) -> the strategy analysis a PCoT record used for that document."""
        if self._analysis_index is None:
            index: dict[tuple, PersuasionAnalysis] = {}
            ranked = sorted(
                (r for r in self.records if r.analysis is not None),
                key=lambda r: (r.method.adaptation is not Adaptation.PCOT, r.method.stage1_kind is not Stage1Kind.DMT,
                               r.method.slug),
            )
            for record in ranked:
                index.setdefault((record.model_id, record.dataset, record.doc_id), record.analysis)
            self._analysis_index = index
        return self._analysis_index

    def _in_grouping(self, record: EvalRecord, grouping: Grouping) -> bool:
        if grouping is Grouping.OVERALL:
            return True
        if grouping is Grouping.ARTICLES:
            return record.genre is Genre.ARTICLE
        if grouping is Grouping.POSTS:
            return record.genre is Genre.POST
        if grouping is Grouping.PRIOR_CUTOFF:
            return record.cutoff_class is CutoffClass.PRIOR
        if grouping is Grouping.POST_CUTOFF:
            return record.cutoff_class is CutoffClass.POST
        analysis = record.analysis or self.analysis_index.get((record.model_id, record.dataset, record.doc_id))
        if analysis is None or analysis.failed:
            return False
        return analysis.has_persuasion() == (grouping is Grouping.PERSUASION)

    def records_for(self, model: str, variant: str, grouping: Grouping = Grouping.OVERALL) -> list[EvalRecord]:
        selected = [r for r in self.records if r.model_id == model and r.method.slug == variant]
        if grouping in SUBSET_GROUPINGS:
            split = subset_split(selected, self.analysis_index)
            return split.persuasion if grouping is Grouping.PERSUASION else split.no_persuasion
        return [r for r in selected if self._in_grouping(r, grouping)]

    def score(self, model: str, variant: str, grouping: Grouping = Grouping.OVERALL) -> float | None:
        if (model, variant, grouping) in self.external:
            return self.external[(model, variant, grouping)]
        records = self.records_for(model, variant, grouping)
        return f1_binary(records) if records else None

    def p_value(self, model: str, base: str, new: str, grouping: Grouping) -> float | None:
        if not self.has_records:
            return None
        try:
            table = ContingencyTable2x2.from_records(self.records_for(model, base, grouping),
                                                     self.records_for(model, new, grouping))
        except EmptyInput:
            return None
        return mcnemar(table)


def _model_name(store: ResultStore, model: str) -> str:
    return display_model(model) if store.has_records else model


def _default_pairs(store: ResultStore) -> tuple[tuple[str, str], ...]:
    """baseline-X paired with pcot-X for every stage-2 method present in both forms."""
    labels = set(store.variants())
    pairs = []
    for stage2 in STAGE2_DISPLAY:
        base = MethodVariant(stage2_kind=stage2, adaptation=Adaptation.BASELINE).slug
        new = MethodVariant(stage2_kind=stage2, stage1_kind=Stage1Kind.DMT, adaptation=Adaptation.PCOT).slug
        if base in labels and new in labels:
            pairs.append((base, new))
    return tuple(pairs)


def _pairs(store: ResultStore, spec: ReportSpec) -> tuple[tuple[str, str], ...]:
    pairs = spec.compare or _default_pairs(store)
    if not pairs:
        raise MissingVariant("No comparison pairs given and no baseline/PCoT pairs found in the store")
    store.require_variants(label for pair in pairs for label in pair)
    return pairs


# --- Builders ---

def build_main_table(store: ResultStore, spec: ReportSpec) -> Table:
    """F1 per model and method, Base vs PCoT per grouping, with change and significance mark."""
    pairs = _pairs(store, spec)
    columns = ["Model", "Method"]
    for grouping in spec.groupings:
        columns += [f"{grouping.label} Base", f"{grouping.label} PCoT"]
    table = Table("F1 by model and method", columns)

    cells: dict[Grouping, tuple[list[float], list[float]]] = {g: ([], []) for g in spec.groupings}
    for model in store.models():
        for base, new in pairs:
            row = [_model_name(store, model), pair_label(new)]
            for grouping in spec.groupings:
                base_score, new_score = store.score(model, base, grouping), store.score(model, new, grouping)
                cell = _fmt_change(base_score, new_score)
                p = store.p_value(model, base, new, grouping)
                if p is not None and p <= spec.significance_level and new_score is not None:
                    cell += "†"
                row += [_fmt(base_score), cell]
                if base_score is not None and new_score is not None:
                    cells[grouping][0].append(base_score)
                    cells[grouping][1].append(new_score)
            table.rows.append(row)

    average = ["Average", ""]
    for grouping in spec.groupings:
        base_scores, new_scores = cells[grouping]
        if not base_scores:
            average += ["-", "-"]
            continue
        base_mean, base_std = mean_std(base_scores)
        new_mean, new_std = mean_std(new_scores)
        base_cell, new_cell = _fmt(base_mean), _fmt_change(base_mean, new_mean)
        if spec.with_std:
            base_cell += f" ± {base_std:.3f}"
            new_cell += f" ± {new_std:.3f}"
        average += [base_cell, new_cell]
    table.rows.append(average)
    if store.has_records:
        table.notes.append(f"† McNemar p ≤ {spec.significance_level}")
    return table


def build_subset_table(store: ResultStore, spec: ReportSpec) -> Table:
    """Persuasion vs No Persuasion F1 per model, mean ± std over the compared methods."""
    pairs = _pairs(store, spec)
    columns = ["Model"]
    for grouping in SUBSET_GROUPINGS:
        columns += [f"{grouping.label} PCoT", f"{grouping.label} Base"]
    table = Table("F1 on texts with and without predicted persuasion", columns)

    means: dict[Grouping, tuple[list[float], list[float]]] = {g: ([], []) for g in SUBSET_GROUPINGS}
    for model in store.models():
        row = [_model_name(store, model)]
        for grouping in SUBSET_GROUPINGS:
            base_scores = [s for s in (store.score(model, b, grouping) for b, _ in pairs) if s is not None]
            new_scores = [s for s in (store.score(model, n, grouping) for _, n in pairs) if s is not None]
            if not base_scores or not new_scores:
                row += ["-", "-"]
                continue
            base_mean, base_std = mean_std(base_scores)
            new_mean, new_std = mean_std(new_scores)
            row += [f"{_fmt_change(base_mean, new_mean)} ± {new_std:.3f}", f"{base_mean:.3f} ± {base_std:.3f}"]
            means[grouping][0].append(base_mean)
            means[grouping][1].append(new_mean)
        table.rows.append(row)

    average = ["Average"]
    for grouping in SUBSET_GROUPINGS:
        base_means, new_means = means[grouping]
        if not base_means:
            average += ["-", "-"]
            continue
        base_mean, _ = mean_std(base_means)
        new_mean, _ = mean_std(new_means)
        average += [_fmt_change(base_mean, new_mean), _fmt(base_mean)]
    table.rows.append(average)
    return table


def build_subset_detail_tables(store: ResultStore, spec: ReportSpec) -> list[Table]:
    """One Persuasion / No Persuasion table per compared method."""
    tables = []
    for base, new in _pairs(store, spec):
        columns = ["Model"]
        for grouping in SUBSET_GROUPINGS:
            columns += [f"{grouping.label} PCoT", f"{grouping.label} Base"]
        table = Table(f"Persuasion subsets for {method_label(new)}", columns)
        for model in store.models():
            row = [_model_name(store, model)]
            for grouping in SUBSET_GROUPINGS:
                base_score, new_score = store.score(model, base, grouping), store.score(model, new, grouping)
                row += [_fmt_change(base_score, new_score), _fmt(base_score)]
            table.rows.append(row)
        tables.append(table)
    return tables


def _analysis_variant(store: ResultStore, variant: str | None) -> str:
    if variant is not None:
        store.require_variants([variant])
        return variant
    candidates = sorted({r.method.slug for r in store.records if r.analysis is not None},
                        key=lambda s: (not s.startswith("pcot-van"), s))
    if not candidates:
        raise ReportError("The store holds no persuasion analyses")
    return candidates[0]


def build_distribution_heatmap_data(store: ResultStore, by: DistributionBy = DistributionBy.GOLD_LABEL,
                                    variant: str | None = None) -> Table:
    """Percentage of texts per class with each strategy, averaged across models."""
    store.require_records("The strategy distribution")
    variant = _analysis_variant(store, variant)
    per_model = []
    for model in store.models():
        records = [r for r in store.records if r.model_id == model and r.method.slug == variant]
        if records:
            per_model.append(strategy_distribution(records, by))

    shortcuts = [s.shortcut for s in all_strategies()] + ["ALL"]
    table = Table(f"Persuasion strategy distribution by {DistributionBy(by).value} ({variant})",
                  ["Class"] + shortcuts)
    for row_name in ("DIS", "REL"):
        rows = [d[row_name] for d in per_model if row_name in d]
        if not rows:
            table.notes.append(f"No {row_name} texts; row omitted")
            continue
        table.rows.append([row_name] + [f"{sum(r[c] for r in rows) / len(rows):.1f}" for c in shortcuts])
    return table


def build_mcc_table(store: ResultStore, against: str = "gold", variant: str | None = None) -> Table:
    """MCC between each predicted strategy (and any persuasion) and the gold or predicted label."""
    store.require_records("The MCC table")
    if against not in ("gold", "predicted"):
        raise ReportError("against must be 'gold' or 'predicted'")
    if against == "gold":
        variants = [_analysis_variant(store, variant)]
    else:
        variants = [variant] if variant else sorted(
            {r.method.slug for r in store.records if r.analysis is not None and r.method.adaptation is Adaptation.PCOT})
        store.require_variants(variants)
    strategies = all_strategies()
    table = Table(f"MCC between strategies and {against} label",
                  ["Model", "Method"] + [s.shortcut for s in strategies] + ["Persuasion"])
    for model in store.models():
        for label in variants:
            records = [r for r in store.records if r.model_id == model and r.method.slug == label
                       and r.analysis is not None and not r.analysis.failed]
            if not records:
                continue
            if against == "gold":
                target = [r.gold_label is Label.DISINFORMATION for r in records]
            else:
                target = [r.effective_prediction is Label.DISINFORMATION for r in records]
            row = [display_model(model), method_label(label)]
            for strategy in strategies:
                row.append(f"{mcc_from_vectors(target, [r.analysis.labels[strategy.id] for r in records]):.3f}")
            row.append(f"{mcc_from_vectors(target, [r.analysis.has_persuasion() for r in records]):.3f}")
            table.rows.append(row)
    return table


def build_significance_table(store: ResultStore, spec: ReportSpec) -> Table:
    """Strongest McNemar level reached per model, method pair and grouping."""
    store.require_records("The significance table")
    pairs = _pairs(store, spec)
    table = Table("McNemar significance", ["Model", "Method"] + [g.label for g in spec.groupings])
    for model in store.models():
        for base, new in pairs:
            row = [display_model(model), method_label(new)]
            for grouping in spec.groupings:
                p = store.p_value(model, base, new, grouping)
                level = significance_level(p) if p is not None else None
                row.append("-" if p is None else (str(level) if level is not None else "Non-Significant"))
            table.rows.append(row)
    return table


def default_method_groups(store: ResultStore) -> dict[str, list[str]]:
    """Variants grouped by adaptation, e.g. Base -> [baseline-van, baseline-zcot, ...]."""
    names = {
        Adaptation.BASELINE: "Base",
        Adaptation.PCOT: "PCoT",
        Adaptation.PCOT_NO_EXPLANATION: "PCoT No Explanation",
        Adaptation.PCOT_SINGLE_STEP: "PCoT Single Step",
        Adaptation.PCOT_BASE_VERSION: "PCoT Base Version",
    }
    groups: dict[str, list[str]] = {}
    for label in store.variants():
        variant = _parse_variant(label)
        if variant is None:
            groups.setdefault(label, []).append(label)
        elif variant.adaptation is Adaptation.PCOT and variant.stage1_kind is not Stage1Kind.DMT:
            groups.setdefault(f"PCoT ({variant.stage1_kind.value})", []).append(label)
        else:
            groups.setdefault(names[variant.adaptation], []).append(label)
    return groups


def build_method_summary(store: ResultStore, groups: dict[str, list[str]] | None = None, reference: str = "Base",
                         grouping: Grouping = Grouping.OVERALL) -> Table:
    """Mean ± std F1 over every (model, variant) cell of each method group, with change vs the reference group."""
    groups = groups or default_method_groups(store)
    if reference not in groups:
        raise MissingVariant(f"Reference group {reference!r} is not among {', '.join(groups)}")
    stats = {}
    for name, labels in groups.items():
        store.require_variants(labels)
        scores = [s for s in (store.score(m, v, grouping) for m in store.models() for v in labels) if s is not None]
        if not scores:
            raise MissingVariant(f"Method group {name!r} has no scores for {grouping.label}")
        stats[name] = mean_std(scores)

    ref_mean = stats[reference][0]
    table = Table(f"Prompting methods ({grouping.label})", ["Method", "F1", "Change (pp)", "Change (%)"])
    for name, (mean, std) in stats.items():
        if name == reference:
            table.rows.append([name, f"{mean:.3f} ± {std:.3f}", "-", "-"])
        else:
            table.rows.append([name, f"{mean:.3f} ± {std:.3f}", f"{percentage_point_change(ref_mean, mean):+.1f}",
                               f"{percentage_change(ref_mean, mean):+.1f}%"])
    return table


STAGE1_ORDER = (Stage1Kind.BASE_MT, Stage1Kind.MT, Stage1Kind.DMT, Stage1Kind.TAT, Stage1Kind.DTAT, Stage1Kind.TATB)


def _stage1_predictions(store: ResultStore, model: str, kind: Stage1Kind) -> tuple[dict, dict]:
    gold, pred = {}, {}
    for record in store.records:
        if record.model_id != model or record.method.stage1_kind is not kind:
            continue
        if record.gold_strategies is None or record.analysis is None:
            continue
        doc = f"{record.dataset.value}|{record.doc_id}"
        gold[doc] = set(record.gold_strategies)
        pred[doc] = set(record.analysis.present())
    return gold, pred


def build_stage1_table(store: ResultStore) -> Table:
    """Per-strategy and pooled micro F1 of each stage-1 prompt kind against gold strategies."""
    store.require_records("The stage-1 table")
    strategies = all_strategies()
    results: dict[Stage1Kind, tuple[list[list[float]], list[float]]] = {}
    for kind in STAGE1_ORDER:
        per_strategy: list[list[float]] = [[] for _ in strategies]
        micro: list[float] = []
        for model in store.models():
            gold, pred = _stage1_predictions(store, model, kind)
            if not gold:
                continue
            counts = multilabel_counts(gold, pred)
            micro.append(f1_from_counts(counts.tp, counts.fp, counts.fn))
            for i, strategy in enumerate(strategies):
                c = multilabel_counts(gold, pred, strategies=[strategy.id])
                per_strategy[i].append(f1_from_counts(c.tp, c.fp, c.fn))
        if micro:
            results[kind] = (per_strategy, micro)
    if not results:
        raise ReportError("No records carry both a stage-1 analysis and gold strategies")

    base_mean = mean_std(results[Stage1Kind.BASE_MT][1])[0] if Stage1Kind.BASE_MT in results else None
    table = Table("Stage-1 persuasion detection (micro F1)",
                  ["Method"] + [s.shortcut for s in strategies] + ["F1 Micro", "Change vs Base MT"])
    for kind, (per_strategy, micro) in results.items():
        mean, std = mean_std(micro)
        change = "-" if base_mean in (None, 0) or kind is Stage1Kind.BASE_MT else \
            f"{percentage_change(base_mean, mean):+.1f}%"
        table.rows.append([kind.value] + [f"{mean_std(v)[0]:.3f}" for v in per_strategy]
                          + [f"{mean:.3f} ± {std:.3f}", change])
    return table


def build_comparison_table(store: ResultStore, reference: str, others: list[str],
                           groupings: tuple[Grouping, ...] = MAIN_GROUPINGS) -> Table:
    """Mean F1 over models per variant and grouping, with change vs a reference variant."""
    store.require_variants([reference, *others])
    table = Table(f"Comparison against {method_label(reference)}", ["Method"] + [g.label for g in groupings])
    ref_means = {}
    for label in [reference, *others]:
        row = [method_label(label)]
        for grouping in groupings:
            scores = [s for s in (store.score(m, label, grouping) for m in store.models()) if s is not None]
            if not scores:
                row.append("-")
                continue
            mean, _ = mean_std(scores)
            if label == reference:
                ref_means[grouping] = mean
                row.append(_fmt(mean))
            else:
                row.append(_fmt_change(ref_means.get(grouping), mean))
        table.rows.append(row)
    return table


# --- Output ---

def render_markdown(tables: list[Table]) -> str:
    parts = []
    for table in tables:
        parts.append(f"## {table.title}\n\n{table.to_markdown()}")
        parts.extend(f"\n{note}\n" for note in table.notes)
    return "\n".join(parts)


def write_tables(tables: list[Table], out_dir: str | os.PathLike,
                 formats: tuple[ReportFormat, ...] = (ReportFormat.MARKDOWN, ReportFormat.CSV)) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for table in tables:
        if ReportFormat.MARKDOWN in formats:
            path = out_dir / f"{table.slug}.md"
            path.write_text(f"## {table.title}\n\n{table.to_markdown()}", encoding="utf-8")
            written.append(path)
        if ReportFormat.CSV in formats:
            path = out_dir / f"{table.slug}.csv"
            path.write_text(table.to_csv(), encoding="utf-8")
            written.append(path)
    return written
