import json

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import FIXTURES, make_analysis
from pcot.corpus import Label
from pcot.errors import FailedAnalysis
from pcot.response_parser import (ParseGrade, PersuasionAnalysis, StrategyAnswer, merge_strategy_answers,
                                  parse_analysis, parse_strategy_answer, parse_verdict, serialize_analysis,
                                  strip_explanations)
from pcot.taxonomy import StrategyId, all_strategies, get_strategy, resolve_strategy, strategy_ids


def _strict_payload(**yes) -> dict:
    return {s.name: {"label": "Yes" if s.shortcut in yes else "No", "explanation": f"about {s.shortcut}"}
            for s in all_strategies()}


def test_strict_analysis():
    analysis = parse_analysis(json.dumps(_strict_payload(MW=True)))
    assert analysis.parse_grade is ParseGrade.STRICT
    assert analysis.present() == [StrategyId.MANIPULATIVE_WORDING]
    assert analysis.explanations[StrategyId.CALL] == "about C"


def test_analysis_in_fence_with_prose_is_repaired():
    text = "Here is my analysis:\n```json\n" + json.dumps(_strict_payload(AR=True)) + "\n```\nHope this helps."
    analysis = parse_analysis(text)
    assert analysis.parse_grade is ParseGrade.REPAIRED
    assert analysis.present() == [StrategyId.ATTACK_ON_REPUTATION]


def test_analysis_with_shortcuts_synonyms_and_trailing_comma():
    text = ('{"AR": {"present": "true", "reason": "x"}, "j": "no", "Simplification": false, '
            '"distraction": {"label": "Absent"}, "CALL": {"label": "No"}, "manipulative_wording": "Yes",}')
    analysis = parse_analysis(text)
    assert analysis.parse_grade is ParseGrade.REPAIRED
    assert analysis.present() == [StrategyId.ATTACK_ON_REPUTATION, StrategyId.MANIPULATIVE_WORDING]
    assert analysis.explanations[StrategyId.ATTACK_ON_REPUTATION] == "x"


def test_wrapped_analysis():
    analysis = parse_analysis(json.dumps({"persuasion_analysis": _strict_payload(C=True)}))
    assert analysis.parse_grade is ParseGrade.STRICT
    assert analysis.present() == [StrategyId.CALL]


@pytest.mark.parametrize("raw", [
    "",
    "I cannot help with that.",
    '{"Attack on reputation": {"label": "Yes"}}',
    '{"Attack on reputation": {"label": "Maybe"}, "J": "No", "S": "No", "D": "No", "C": "No", "MW": "No"}',
    None,
    b"\xff\xfe",
])
def test_unparseable_analysis_is_sentinel(raw):
    analysis = parse_analysis(raw)
    assert analysis.failed
    assert not analysis.has_persuasion()
    assert analysis == PersuasionAnalysis.sentinel()


def test_conflicting_duplicate_keys_fail():
    payload = _strict_payload()
    text = json.dumps(payload)[:-1] + ', "AR": "Yes"}'
    assert parse_analysis(text).failed


def test_strategy_answer_strict_and_repaired():
    strategy = get_strategy(StrategyId.CALL)
    strict = parse_strategy_answer('{"Call": {"label": "Yes", "explanation": "Vote now!"}}', strategy)
    assert strict == StrategyAnswer(True, "Vote now!", ParseGrade.STRICT)
    bare = parse_strategy_answer('Answer: {"label": "no", "explanation": "none"}', strategy)
    assert bare == StrategyAnswer(False, "none", ParseGrade.REPAIRED)
    token = parse_strategy_answer("After reading it, yes.", strategy)
    assert token.label and token.parse_grade is ParseGrade.REPAIRED
    assert parse_strategy_answer("unclear", strategy).parse_grade is ParseGrade.FAILED


def test_merge_strategy_answers():
    answers = {sid: StrategyAnswer(sid is StrategyId.JUSTIFICATION, "e", ParseGrade.STRICT) for sid in strategy_ids()}
    merged = merge_strategy_answers(answers)
    assert merged.parse_grade is ParseGrade.STRICT
    assert merged.present() == [StrategyId.JUSTIFICATION]

    answers[StrategyId.CALL] = StrategyAnswer(False, "", ParseGrade.REPAIRED)
    assert merge_strategy_answers(answers).parse_grade is ParseGrade.REPAIRED

    answers[StrategyId.CALL] = StrategyAnswer(False, "", ParseGrade.FAILED)
    assert merge_strategy_answers(answers).failed
    del answers[StrategyId.CALL]
    assert merge_strategy_answers(answers).failed


def test_serialize_and_strip():
    analysis = make_analysis(StrategyId.DISTRACTION)
    text = serialize_analysis(analysis)
    assert list(json.loads(text)) == [s.name for s in all_strategies()]
    assert parse_analysis(text) == analysis

    bare = strip_explanations(analysis)
    assert set(bare.explanations.values()) == {""}
    assert bare.labels == analysis.labels
    assert "explanation" not in serialize_analysis(bare, include_explanations=False)
    with pytest.raises(FailedAnalysis):
        strip_explanations(PersuasionAnalysis.sentinel())


@pytest.mark.parametrize("raw, label, grade", [
    ('{"disinformation": "Yes"}', Label.DISINFORMATION, ParseGrade.STRICT),
    ('{"disinformation": "No"}', Label.CREDIBLE, ParseGrade.STRICT),
    ('Reasoning...\n```json\n{"Disinformation": "yes"}\n```', Label.DISINFORMATION, ParseGrade.REPAIRED),
    ('{"disinformation": "No"} on reflection {"disinformation": "Yes"}', Label.DISINFORMATION, ParseGrade.REPAIRED),
    ("The claims are plausible, so no.", Label.CREDIBLE, ParseGrade.REPAIRED),
    ("Noted. The answer is Yes", Label.DISINFORMATION, ParseGrade.REPAIRED),
])
def test_parse_verdict(raw, label, grade):
    verdict = parse_verdict(raw)
    assert verdict.label is label
    assert verdict.parse_grade is grade
    assert verdict.raw_text == raw


def test_unparseable_verdict_abstains():
    verdict = parse_verdict("I am unable to determine this.")
    assert verdict.parse_grade is ParseGrade.FAILED
    assert verdict.label is Label.CREDIBLE
    assert parse_verdict("", abstain=Label.DISINFORMATION).label is Label.DISINFORMATION


_json_scalars = st.none() | st.booleans() | st.integers() | st.text(max_size=20)
_json_values = st.recursive(_json_scalars, lambda inner: st.lists(inner, max_size=4)
                            | st.dictionaries(st.text(max_size=12), inner, max_size=4), max_leaves=20)


@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.one_of(st.text(), st.binary().map(bytes), _json_values.map(json.dumps)))
def test_parsers_are_total(raw):
    analysis = parse_analysis(raw)
    assert analysis.parse_grade in ParseGrade
    if analysis.failed:
        assert not analysis.has_persuasion()
    verdict = parse_verdict(raw)
    assert verdict.label in Label
    for strategy in all_strategies():
        assert parse_strategy_answer(raw, strategy).parse_grade in ParseGrade


def _raw_responses() -> list[dict]:
    lines = (FIXTURES / "raw_responses.jsonl").read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


@pytest.mark.parametrize("case", _raw_responses(), ids=lambda c: c["case"])
def test_recorded_stage1_responses(case):
    analysis = parse_analysis(case["raw"])
    assert analysis.parse_grade is ParseGrade(case["grade"])
    assert analysis.present() == [resolve_strategy(s).id for s in case["present"]]
    if analysis.parse_grade is ParseGrade.STRICT:
        assert parse_analysis(serialize_analysis(analysis)) == analysis
