import pytest

from pcot.errors import UnknownStrategy
from pcot.taxonomy import (StrategyId, all_strategies, all_techniques, export_taxonomy, get_strategy, normalize_key,
                           resolve_strategy, strategy_ids)


def test_six_strategies_in_presentation_order():
    assert [s.shortcut for s in all_strategies()] == ["AR", "J", "S", "D", "C", "MW"]
    assert strategy_ids()[0] is StrategyId.ATTACK_ON_REPUTATION
    assert strategy_ids()[-1] is StrategyId.MANIPULATIVE_WORDING


def test_technique_counts():
    counts = {s.shortcut: len(s.techniques) for s in all_strategies()}
    assert counts == {"AR": 5, "J": 5, "S": 3, "D": 3, "C": 3, "MW": 4}
    assert len(all_techniques()) == 23
    assert len({t.name for t in all_techniques()}) == 23


def test_techniques_point_at_their_strategy():
    for strategy in all_strategies():
        assert all(t.parent is strategy.id for t in strategy.techniques)


@pytest.mark.parametrize("key", ["Attack on reputation", "AR", "ar", "  attack_on-reputation ", "AttackOnReputation"])
def test_resolve_strategy_variants(key):
    assert resolve_strategy(key).id is StrategyId.ATTACK_ON_REPUTATION


def test_resolve_strategy_accepts_enum():
    assert resolve_strategy(StrategyId.CALL).shortcut == "C"
    assert get_strategy(StrategyId.DISTRACTION).name == "Distraction"


def test_resolve_unknown_strategy():
    with pytest.raises(UnknownStrategy):
        resolve_strategy("Bandwagon")


def test_normalize_key():
    assert normalize_key(" Manipulative__wording ") == "manipulative wording"


def test_export_is_stable_and_complete():
    text = export_taxonomy()
    assert text == export_taxonomy()
    assert text.endswith("\n")
    assert text.count("# ") == 6
    for technique in all_techniques():
        assert f"- {technique.name}: " in text
