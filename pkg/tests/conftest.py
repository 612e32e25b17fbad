from pathlib import Path

import pytest

from pcot.corpus import CutoffClass, Document, Genre, Label, SourceDataset
from pcot.llm_gateway import LlmGateway, ResponseCache, load_rulebook
from pcot.response_parser import ParseGrade, PersuasionAnalysis
from pcot.taxonomy import StrategyId, strategy_ids

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


def make_doc(doc_id: str = "isot-x", text: str = "The council met on Monday.",
             label: Label = Label.CREDIBLE, source: SourceDataset = SourceDataset.ISOT, **overrides) -> Document:
    genre = Genre.POST if source is SourceDataset.ECTF else Genre.ARTICLE
    cutoff = CutoffClass.POST if source in (SourceDataset.MULTIDIS, SourceDataset.EUDISINFO) else CutoffClass.PRIOR
    fields = dict(id=doc_id, text=text, gold_label=label, source_dataset=source, genre=genre, cutoff_class=cutoff)
    fields.update(overrides)
    return Document(**fields)


def make_analysis(*present: StrategyId, grade: ParseGrade = ParseGrade.STRICT) -> PersuasionAnalysis:
    labels = {sid: sid in present for sid in strategy_ids()}
    explanations = {sid: ("Present." if sid in present else "Absent.") for sid in strategy_ids()}
    return PersuasionAnalysis.build(labels, explanations, grade)


async def _no_sleep(_seconds: float) -> None:
    return None


@pytest.fixture
def mock_docs_path() -> Path:
    return FIXTURES / "mock_docs.jsonl"


@pytest.fixture
def mock_gateway(tmp_path):
    def _build(cache_dir: Path | None = None, budget: int = 10_000) -> LlmGateway:
        cache = ResponseCache(cache_dir or tmp_path / "cache")
        return LlmGateway(cache=cache, budget=budget, mock=load_rulebook(), sleep=_no_sleep)

    return _build
