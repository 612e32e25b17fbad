"""
Dataset ingestion into one Document schema, class-balance checks and seeded sampling.

Each upstream corpus ships in its own CSV/JSON layout; an adapter (ColumnMapping)
translates rows into Documents. The unified on-disk format is JSONL with one
Document per line.
"""
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from enum import Enum
from pathlib import Path

import pandas as pd
import regex
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from pcot.config import POST_CUTOFF_EARLIEST
from pcot.errors import CorpusError, EmptyDataset, SampleTooLarge, SchemaMismatch
from pcot.taxonomy import StrategyId, all_strategies, resolve_strategy

logger = logging.getLogger(__name__)


class Label(str, Enum):
    DISINFORMATION = "Disinformation"
    CREDIBLE = "Credible"


class SourceDataset(str, Enum):
    COAID = "CoAID"
    ISOT = "ISOT"
    ECTF = "ECTF"
    MULTIDIS = "MultiDis"
    EUDISINFO = "EUDisinfo"


class Genre(str, Enum):
    ARTICLE = "Article"
    POST = "Post"


class CutoffClass(str, Enum):
    PRIOR = "Prior"
    POST = "Post"


POST_CUTOFF_SOURCES = frozenset({SourceDataset.MULTIDIS, SourceDataset.EUDISINFO})
_POST_CUTOFF_EARLIEST = date.fromisoformat(POST_CUTOFF_EARLIEST)


class Document(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    text: str
    gold_label: Label
    source_dataset: SourceDataset
    genre: Genre
    published_date: date | None = None
    topic: str | None = None
    cutoff_class: CutoffClass
    # Only persuasion-annotated corpora carry these.
    gold_strategies: tuple[StrategyId, ...] | None = None

    @field_validator("text")
    @classmethod
    def _text_not_blank(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("text must not be empty")
        return value

    @field_validator("published_date", mode="before")
    @classmethod
    def _iso_date_only(cls, value):
        if value in (None, ""):
            return None
        if isinstance(value, date):
            return value
        # ISO-8601 only; adapters normalize upstream formats first.
        return date.fromisoformat(str(value)[:10])

    @field_validator("gold_strategies", mode="before")
    @classmethod
    def _resolve_gold_strategies(cls, value):
        if value is None:
            return None
        wanted = {resolve_strategy(str(v)).id for v in value}
        return tuple(s.id for s in all_strategies() if s.id in wanted)

    @model_validator(mode="after")
    def _check_source_invariants(self) -> "Document":
        if self.source_dataset in POST_CUTOFF_SOURCES:
            if self.cutoff_class is not CutoffClass.POST:
                raise ValueError(f"{self.source_dataset.value} documents are post-cutoff")
            if self.published_date is not None and self.published_date < _POST_CUTOFF_EARLIEST:
                raise ValueError(f"post-cutoff document dated {self.published_date} before {_POST_CUTOFF_EARLIEST}")
        elif self.cutoff_class is not CutoffClass.PRIOR:
            raise ValueError(f"{self.source_dataset.value} documents are prior-cutoff")
        if self.source_dataset is SourceDataset.ECTF and self.genre is not Genre.POST:
            raise ValueError("ECTF documents are social posts")
        if self.source_dataset not in (SourceDataset.ECTF, SourceDataset.COAID) and self.genre is not Genre.ARTICLE:
            raise ValueError(f"{self.source_dataset.value} documents are articles")
        return self


class CorpusManifest(BaseModel):
    counts: dict[SourceDataset, int]
    disinformation_share: dict[SourceDataset, float]
    seed: int | None = None
    sample_sizes: dict[SourceDataset, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_ranges(self) -> "CorpusManifest":
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("counts must be non-negative")
        if any(not 0.0 <= s <= 1.0 for s in self.disinformation_share.values()):
            raise ValueError("disinformation share must lie in [0, 1]")
        return self


# --- Adapters ---

@dataclass(frozen=True)
class ColumnMapping:
    """How one upstream layout maps onto Document fields."""
    text: tuple[str, ...]  # joined with a blank line, empty parts skipped
    label: str
    labels: dict[str, Label | None]  # normalized value -> Label; None drops the row
    id: str | None = "id"
    date: str | None = None
    date_formats: tuple[str, ...] = ("%Y-%m-%d",)
    topic: str | None = None
    genre: str | None = None
    genre_values: dict[str, Genre] = field(default_factory=dict)
    fixed_genre: Genre = Genre.ARTICLE
    gold_strategies: str | None = None


_FAKE_REAL = {"fake": Label.DISINFORMATION, "real": Label.CREDIBLE, "true": Label.CREDIBLE,
              "1": Label.DISINFORMATION, "0": Label.CREDIBLE}
_CREDIBILITY = {
    "disinformation": Label.DISINFORMATION,
    "credible information": Label.CREDIBLE,
    "credible": Label.CREDIBLE,
    "hard to say": None,
    "inconsistent with the topic": None,
}

ADAPTERS: dict[SourceDataset, ColumnMapping] = {
    # Combined news + social-post export; "type" says which.
    SourceDataset.COAID: ColumnMapping(
        text=("title", "content"),
        label="label",
        labels=_FAKE_REAL,
        date="publish_date",
        genre="type",
        genre_values={"news": Genre.ARTICLE, "article": Genre.ARTICLE, "post": Genre.POST, "tweet": Genre.POST},
    ),
    SourceDataset.ISOT: ColumnMapping(
        text=("title", "text"),
        label="label",
        labels=_FAKE_REAL,
        date="date",
        date_formats=("%B %d, %Y", "%b %d, %Y", "%d-%b-%y", "%Y-%m-%d"),
        topic="subject",
    ),
    SourceDataset.ECTF: ColumnMapping(
        text=("tweet",),
        label="label",
        labels=_FAKE_REAL,
        fixed_genre=Genre.POST,
    ),
    SourceDataset.MULTIDIS: ColumnMapping(
        text=("title", "text"),
        label="label",
        labels=_CREDIBILITY,
        date="date",
        topic="topic",
    ),
    SourceDataset.EUDISINFO: ColumnMapping(
        text=("title", "text"),
        label="label",
        labels=_CREDIBILITY,
        date="date",
    ),
}


@dataclass
class RowError:
    row: int
    reason: str


@dataclass
class IngestReport:
    source: SourceDataset
    documents: list[Document]
    dropped: Counter = field(default_factory=Counter)
    row_errors: list[RowError] = field(default_factory=list)

    def summary(self) -> str:
        parts = [f"{self.source.value}: {len(self.documents)} documents"]
        if self.dropped:
            parts.append("dropped " + ", ".join(f"{k}={v}" for k, v in sorted(self.dropped.items())))
        if self.row_errors:
            parts.append(f"{len(self.row_errors)} rejected rows")
        return "; ".join(parts)


def _normalize_value(value: str) -> str:
    return regex.sub(r"[\s_\-]+", " ", value).strip().casefold()


def _read_table(path: Path) -> pd.DataFrame:
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return pd.read_csv(path, dtype=str, keep_default_na=False)
    if suffix in (".json", ".jsonl"):
        with open(path, "r", encoding="utf-8") as f:
            if suffix == ".jsonl":
                records = [json.loads(line) for line in f if line.strip()]
            else:
                records = json.load(f)
        if isinstance(records, dict):
            records = records.get("records") or records.get("data") or []
        frame = pd.DataFrame.from_records(records)
        return frame.astype(object).where(frame.notna(), "")
    raise SchemaMismatch(f"Unsupported file type for {path}: expected .csv, .json or .jsonl")


def _parse_date(raw: str, formats: tuple[str, ...]) -> date | None:
    raw = raw.strip()
    if not raw:
        return None
    for fmt in formats:
        try:
            return datetime.strptime(raw, fmt).date()
        except ValueError:
            continue
    try:
        return date.fromisoformat(raw[:10])
    except ValueError:
        raise ValueError(f"unparseable date {raw!r}") from None


def _cell(row: dict, column: str | None) -> str:
    if not column:
        return ""
    value = row.get(column, "")
    return "" if value is None else str(value).strip()


def ingest_dataset(path: str | Path, schema: SourceDataset | str) -> IngestReport:
    """Loads a native dataset file and reports what was kept, dropped and rejected."""
    path = Path(path)
    source = SourceDataset(schema) if not isinstance(schema, SourceDataset) else schema
    mapping = ADAPTERS[source]

    frame = _read_table(path)
    required = {mapping.label, *mapping.text}
    if mapping.genre:
        required.add(mapping.genre)
    missing = sorted(c for c in required if c not in frame.columns)
    # Text columns other than the last may be absent (e.g. posts without titles).
    missing = [c for c in missing if c not in mapping.text[:-1]]
    if missing:
        raise SchemaMismatch(f"{path.name} is missing columns for {source.value}: {', '.join(missing)}")

    report = IngestReport(source=source, documents=[])
    seen_ids: set[str] = set()
    cutoff = CutoffClass.POST if source in POST_CUTOFF_SOURCES else CutoffClass.PRIOR

    for index, row in enumerate(frame.to_dict(orient="records")):
        label_key = _normalize_value(_cell(row, mapping.label))
        if label_key not in mapping.labels:
            report.row_errors.append(RowError(index, f"unknown label {_cell(row, mapping.label)!r}"))
            continue
        gold = mapping.labels[label_key]
        if gold is None:
            report.dropped[label_key] += 1
            continue

        if not _cell(row, mapping.text[-1]):
            report.row_errors.append(RowError(index, f"empty {mapping.text[-1]!r}"))
            continue
        text = "\n\n".join(part for part in (_cell(row, c) for c in mapping.text) if part)
        doc_id = _cell(row, mapping.id) or f"{source.value.lower()}-{index:05d}"
        if doc_id in seen_ids:
            report.row_errors.append(RowError(index, f"duplicate id {doc_id!r}"))
            continue

        genre = mapping.fixed_genre
        if mapping.genre:
            genre_key = _normalize_value(_cell(row, mapping.genre))
            if genre_key not in mapping.genre_values:
                report.row_errors.append(RowError(index, f"unknown genre {_cell(row, mapping.genre)!r}"))
                continue
            genre = mapping.genre_values[genre_key]

        try:
            published = _parse_date(_cell(row, mapping.date), mapping.date_formats) if mapping.date else None
            strategies = _cell(row, mapping.gold_strategies)
            document = Document(
                id=doc_id,
                text=text,
                gold_label=gold,
                source_dataset=source,
                genre=genre,
                published_date=published,
                topic=_cell(row, mapping.topic) or None,
                cutoff_class=cutoff,
                gold_strategies=[s for s in strategies.split(";") if s.strip()] if strategies else None,
            )
        except ValidationError as e:
            reason = "; ".join(f"{'.'.join(map(str, err['loc'])) or 'row'}: {err['msg']}" for err in e.errors())
            report.row_errors.append(RowError(index, reason))
            continue
        except ValueError as e:
            report.row_errors.append(RowError(index, str(e)))
            continue

        seen_ids.add(doc_id)
        report.documents.append(document)

    if not report.documents:
        raise EmptyDataset(f"No valid documents in {path}")
    return report


def load_dataset(path: str | Path, schema: SourceDataset | str) -> list[Document]:
    report = ingest_dataset(path, schema)
    logger.info(report.summary())
    for error in report.row_errors:
        logger.warning("  %s row %d rejected: %s", report.source.value, error.row, error.reason)
    return report.documents


# --- Unified JSONL ---

def write_documents(docs: list[Document], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(doc.model_dump_json(exclude_none=True) + "\n")


def read_documents(path: str | Path) -> list[Document]:
    """Reads the unified JSONL schema; an empty file yields an empty list."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                doc = Document.model_validate_json(line)
            except ValidationError as e:
                raise SchemaMismatch(f"{path}:{line_no}: {e.errors()[0]['msg']}") from e
            if doc.id in seen:
                raise SchemaMismatch(f"{path}:{line_no}: duplicate id {doc.id!r}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


# --- Balance / sampling ---

@dataclass(frozen=True)
class BalanceReport:
    n: int
    observed_share: float
    expected_share: float
    tolerance: float
    passed: bool

    def describe(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}: disinformation share {self.observed_share:.3f} over {self.n} documents "
                f"(expected {self.expected_share:.3f} ± {self.tolerance:.3f})")


def disinformation_share(docs: list[Document]) -> float:
    if not docs:
        raise EmptyDataset("No documents")
    return sum(d.gold_label is Label.DISINFORMATION for d in docs) / len(docs)


def validate_balance(docs: list[Document], expected_share: float, tolerance: float) -> BalanceReport:
    observed = disinformation_share(docs)
    return BalanceReport(
        n=len(docs),
        observed_share=observed,
        expected_share=expected_share,
        tolerance=tolerance,
        passed=abs(observed - expected_share) <= tolerance + 1e-12,
    )


def sample_test_set(docs: list[Document], n: int, seed: int) -> list[Document]:
    """Uniform sample without replacement, reproducible from seed, sorted by id."""
    if n > len(docs):
        raise SampleTooLarge(f"Requested {n} documents but only {len(docs)} are available")
    if n < 0:
        raise CorpusError("Sample size must be non-negative")
    ordered = sorted(docs, key=lambda d: d.id)
    chosen = random.Random(seed).sample(ordered, n)
    return sorted(chosen, key=lambda d: d.id)


def build_manifest(corpora: dict[SourceDataset, list[Document]], seed: int | None = None,
                   sample_sizes: dict[SourceDataset, int] | None = None) -> CorpusManifest:
    return CorpusManifest(
        counts={ds: len(docs) for ds, docs in corpora.items()},
        disinformation_share={ds: disinformation_share(docs) for ds, docs in corpora.items() if docs},
        seed=seed,
        sample_sizes=sample_sizes or {},
    )
