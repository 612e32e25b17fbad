import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError
from statsmodels.stats.contingency_tables import mcnemar as sm_mcnemar

from conftest import make_analysis
from pcot.corpus import CutoffClass, Genre, Label, SourceDataset
from pcot.errors import AllZero, EmptyInput, IdMismatch, MetricsError
from pcot.metrics import (ContingencyTable2x2, DistributionBy, EvalRecord, McNemarMode, RecordFlag, f1_binary,
                          f1_from_counts, f1_micro_multilabel, f1_per_strategy, mcc, mcc_from_vectors, mcnemar,
                          mcnemar_exact, mean_std, percentage_change, percentage_point_change, significance_level,
                          strategy_distribution, subset_split)
from pcot.response_parser import PersuasionAnalysis
from pcot.taxonomy import StrategyId

DIS, REL = Label.DISINFORMATION, Label.CREDIBLE
AR, J, S, MW = (StrategyId.ATTACK_ON_REPUTATION, StrategyId.JUSTIFICATION, StrategyId.SIMPLIFICATION,
                StrategyId.MANIPULATIVE_WORDING)

# Overall F1 of the three stage-2 methods on five models, Base then PCoT.
PUBLISHED_OVERALL = [
    (0.759, 0.845), (0.765, 0.846), (0.772, 0.834),
    (0.681, 0.810), (0.689, 0.808), (0.744, 0.834),
    (0.710, 0.797), (0.588, 0.774), (0.780, 0.795),
    (0.740, 0.845), (0.722, 0.843), (0.732, 0.832),
    (0.627, 0.792), (0.660, 0.791), (0.697, 0.773),
]


def _record(doc_id, gold, predicted, method="pcot-van", analysis=None, flags=(), model="m",
            dataset=SourceDataset.ISOT) -> EvalRecord:
    return EvalRecord(doc_id=doc_id, gold_label=gold, predicted=predicted, analysis=analysis, model_id=model,
                      method=method, dataset=dataset, flags=flags, genre=Genre.ARTICLE, cutoff_class=CutoffClass.PRIOR)


def test_f1_binary():
    records = [_record("1", DIS, DIS), _record("2", DIS, REL), _record("3", REL, DIS), _record("4", REL, REL),
               _record("5", DIS, DIS)]
    # tp=2 fp=1 fn=1
    assert f1_binary(records) == pytest.approx(2 / 3)
    assert f1_binary([_record("1", REL, REL)]) == 0.0
    with pytest.raises(EmptyInput):
        f1_binary([])


def test_failed_verdict_counts_as_wrong():
    failed_dis = _record("1", DIS, REL, flags=[RecordFlag.STAGE_TWO_FAILED])
    failed_rel = _record("2", REL, REL, flags=[RecordFlag.STAGE_TWO_FAILED])
    assert failed_dis.effective_prediction is REL
    assert failed_rel.effective_prediction is DIS
    assert not failed_rel.correct
    # fn=1 and fp=1
    assert f1_binary([failed_dis, failed_rel]) == 0.0


def test_record_round_trip_and_key():
    record = _record("7", DIS, DIS, method="pcot-zcot@tat", analysis=make_analysis(MW),
                     flags=["Truncated", "StageOneRepaired", "Truncated"])
    assert record.flags == (RecordFlag.STAGE_ONE_REPAIRED, RecordFlag.TRUNCATED)
    data = record.model_dump_json()
    assert '"method":"pcot-zcot@tat"' in data
    assert EvalRecord.model_validate_json(data) == record
    assert record.key == "m|pcot-zcot@tat|ISOT|7"


def test_baseline_records_carry_no_analysis():
    with pytest.raises(ValidationError):
        _record("1", DIS, DIS, method="baseline-van", analysis=make_analysis())


def test_f1_micro_multilabel_pools_counts():
    gold = {"d1": {"AR", "J", "S"}, "d2": {"AR"}}
    pred = {"d1": {"J", "S"}, "d2": {"J"}}
    # tp=2 fp=1 fn=2
    assert f1_micro_multilabel(gold, pred) == pytest.approx(4 / 7)
    per_strategy = f1_per_strategy(gold, pred)
    assert per_strategy[AR] == 0.0
    assert per_strategy[J] == pytest.approx(2 / 3)
    assert per_strategy[S] == 1.0
    assert per_strategy[MW] == 0.0


def test_multilabel_needs_same_documents():
    with pytest.raises(IdMismatch):
        f1_micro_multilabel({"d1": set()}, {"d2": set()})


def test_f1_from_counts_all_zero():
    assert f1_from_counts(0, 0, 0) == 0.0


def test_contingency_orientation():
    a = [_record("1", DIS, REL), _record("2", DIS, DIS), _record("3", REL, REL), _record("4", REL, DIS),
         _record("only-a", DIS, DIS)]
    b = [_record("1", DIS, DIS), _record("2", DIS, REL), _record("3", REL, REL), _record("4", REL, DIS)]
    table = ContingencyTable2x2.from_records(a, b)
    assert table.as_matrix() == [[1, 1], [1, 1]]
    assert table.total == 4
    only_a_wrong = ContingencyTable2x2.from_records([_record("1", DIS, REL)], [_record("1", DIS, DIS)])
    assert (only_a_wrong.n01, only_a_wrong.n10) == (1, 0)
    with pytest.raises(EmptyInput):
        ContingencyTable2x2.from_records(a, [_record("x", DIS, DIS)])


def test_mcnemar_exact_worked_example():
    assert mcnemar_exact(8, 2) == Fraction(7, 64)
    assert float(mcnemar_exact(8, 2)) == 0.109375
    assert mcnemar_exact(3, 3) == 1
    assert mcnemar(ContingencyTable2x2(n00=40, n01=8, n10=2, n11=0)) == pytest.approx(0.109375)


def test_mcnemar_no_discordant_pairs():
    assert mcnemar(ContingencyTable2x2(n00=10, n01=0, n10=0, n11=5), McNemarMode.CHI_SQUARED_CC) == 1.0


@pytest.mark.parametrize("n01, n10", [(20, 10), (40, 12), (15, 15), (3, 30)])
def test_mcnemar_matches_statsmodels(n01, n10):
    table = ContingencyTable2x2(n00=100, n01=n01, n10=n10, n11=20)
    chi = sm_mcnemar(table.as_matrix(), exact=False, correction=True).pvalue
    exact = sm_mcnemar(table.as_matrix(), exact=True).pvalue
    assert mcnemar(table, McNemarMode.CHI_SQUARED_CC) == pytest.approx(chi, rel=1e-9)
    assert mcnemar(table, McNemarMode.EXACT) == pytest.approx(exact, rel=1e-9)
    expected_auto = exact if n01 + n10 < 25 else chi
    assert mcnemar(table) == pytest.approx(expected_auto, rel=1e-9)


@given(st.integers(0, 60), st.integers(0, 60))
def test_exact_p_value_is_a_probability_and_symmetric(n01, n10):
    p = mcnemar_exact(n01, n10)
    assert 0 < p <= 1
    assert p == mcnemar_exact(n10, n01)


@pytest.mark.parametrize("p, level", [(0.004, 0.01), (0.01, 0.01), (0.03, 0.05), (0.2, None)])
def test_significance_level(p, level):
    assert significance_level(p) == level


def test_mcc():
    assert mcc(5, 5, 0, 0) == 1.0
    assert mcc(0, 0, 5, 5) == -1.0
    assert mcc(3, 0, 2, 0) == 0.0
    with pytest.raises(AllZero):
        mcc(0, 0, 0, 0)


def test_mcc_matches_pearson_on_binary_vectors():
    rng = np.random.default_rng(3)
    x = rng.integers(0, 2, 200).astype(bool)
    y = (x ^ (rng.random(200) < 0.3))
    assert mcc_from_vectors(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1])
    with pytest.raises(IdMismatch):
        mcc_from_vectors([True], [True, False])


def test_published_overall_average_and_spread():
    base_mean, base_std = mean_std(b for b, _ in PUBLISHED_OVERALL)
    pcot_mean, pcot_std = mean_std(p for _, p in PUBLISHED_OVERALL)
    assert base_mean == pytest.approx(0.71107, abs=1e-5)
    assert pcot_mean == pytest.approx(0.8146, abs=1e-5)
    assert round(base_std, 3) == 0.055
    assert round(pcot_std, 3) == 0.027
    assert round(percentage_change(base_mean, pcot_mean), 1) == 14.6


def test_changes():
    assert percentage_change(0.753, 0.847) == pytest.approx(12.483, abs=1e-3)
    assert round(percentage_change(0.664, 0.722), 1) == 8.7
    assert percentage_point_change(0.711, 0.815) == pytest.approx(10.4)
    with pytest.raises(MetricsError):
        percentage_change(0.0, 0.5)


def test_mean_std_edge_cases():
    assert mean_std([0.5]) == (0.5, 0.0)
    with pytest.raises(EmptyInput):
        mean_std([])


def test_subset_split_excludes_missing_and_failed_analyses():
    records = [
        _record("1", DIS, DIS, analysis=make_analysis(MW)),
        _record("2", REL, REL, analysis=make_analysis()),
        _record("3", REL, REL, analysis=PersuasionAnalysis.sentinel()),
        _record("4", DIS, DIS, method="baseline-van"),
        _record("5", DIS, REL, method="baseline-van"),
    ]
    index = {("m", SourceDataset.ISOT, "4"): make_analysis(AR)}
    split = subset_split(records, index)
    assert [r.doc_id for r in split.persuasion] == ["1", "4"]
    assert [r.doc_id for r in split.no_persuasion] == ["2"]
    assert split.excluded == 2


def test_strategy_distribution():
    records = [
        _record("1", DIS, DIS, analysis=make_analysis(MW, AR)),
        _record("2", DIS, REL, analysis=make_analysis(MW)),
        _record("3", REL, DIS, analysis=make_analysis()),
        _record("4", REL, REL, analysis=make_analysis(J)),
        _record("5", REL, REL, analysis=PersuasionAnalysis.sentinel()),
    ]
    by_gold = strategy_distribution(records, DistributionBy.GOLD_LABEL)
    assert by_gold["DIS"]["MW"] == 100.0
    assert by_gold["DIS"]["AR"] == 50.0
    assert by_gold["DIS"]["ALL"] == 100.0
    assert by_gold["REL"]["J"] == 50.0
    assert by_gold["REL"]["ALL"] == 50.0

    by_predicted = strategy_distribution(records, DistributionBy.PREDICTED_LABEL)
    assert by_predicted["DIS"]["ALL"] == 50.0
    assert by_predicted["REL"]["MW"] == 50.0

    only_credible = strategy_distribution(records[2:4])
    assert set(only_credible) == {"REL"}


def test_predicted_distribution_skips_failed_verdicts():
    records = [
        _record("1", DIS, DIS, analysis=make_analysis(MW)),
        # Abstained to Credible; the scoring view would count it as Disinformation.
        _record("2", REL, REL, analysis=make_analysis(AR), flags=[RecordFlag.STAGE_TWO_FAILED]),
        _record("3", REL, REL, analysis=make_analysis()),
    ]
    by_predicted = strategy_distribution(records, DistributionBy.PREDICTED_LABEL)
    assert by_predicted["DIS"]["MW"] == 100.0
    assert by_predicted["DIS"]["AR"] == 0.0
    assert by_predicted["REL"]["ALL"] == 0.0

    by_gold = strategy_distribution(records, DistributionBy.GOLD_LABEL)
    assert by_gold["REL"]["AR"] == 50.0


def _exact_by_enumeration(n01: int, n10: int) -> Fraction:
    # Sum of every outcome no more likely than the observed one.
    n = n01 + n10
    probabilities = [Fraction(math.comb(n, i), 2 ** n) for i in range(n + 1)]
    return sum((p for p in probabilities if p <= probabilities[n01]), Fraction(0)) if n else Fraction(1)


def test_exact_p_value_matches_enumeration():
    for n in range(21):
        for n01 in range(n + 1):
            assert mcnemar_exact(n01, n - n01) == _exact_by_enumeration(n01, n - n01), (n01, n - n01)


def test_mcc_worked_example():
    assert mcc(2, 2, 1, 1) == pytest.approx(1 / 3)


def test_mcc_matches_pearson_on_random_vectors():
    rng = np.random.default_rng(2025)
    checked = 0
    while checked < 1000:
        size = int(rng.integers(2, 60))
        x = rng.random(size) < rng.random()
        y = rng.random(size) < rng.random()
        if x.all() or not x.any() or y.all() or not y.any():
            continue
        assert abs(mcc_from_vectors(x, y) - np.corrcoef(x, y)[0, 1]) < 1e-9
        checked += 1


def test_micro_f1_matches_pooled_counts():
    rng = np.random.default_rng(7)
    shortcuts = ["AR", "J", "S", "D", "C", "MW"]
    for _ in range(500):
        docs = [f"d{i}" for i in range(int(rng.integers(1, 12)))]
        gold = {d: {s for s in shortcuts if rng.random() < 0.3} for d in docs}
        pred = {d: {s for s in shortcuts if rng.random() < 0.3} for d in docs}
        tp = sum(len(gold[d] & pred[d]) for d in docs)
        fp = sum(len(pred[d] - gold[d]) for d in docs)
        fn = sum(len(gold[d] - pred[d]) for d in docs)
        expected = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
        assert f1_micro_multilabel(gold, pred) == pytest.approx(expected)
