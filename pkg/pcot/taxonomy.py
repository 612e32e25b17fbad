"""
Persuasion strategies and their techniques, compiled in.

The six strategies are kept in a fixed presentation order (AR, J, S, D, C, MW);
prompt text, parser output and report columns all follow it.
"""
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import regex

from pcot.errors import UnknownStrategy


class StrategyId(str, Enum):
    ATTACK_ON_REPUTATION = "AttackOnReputation"
    JUSTIFICATION = "Justification"
    SIMPLIFICATION = "Simplification"
    DISTRACTION = "Distraction"
    CALL = "Call"
    MANIPULATIVE_WORDING = "ManipulativeWording"


@dataclass(frozen=True)
class PersuasionTechnique:
    name: str
    definition: str
    parent: StrategyId


@dataclass(frozen=True)
class PersuasionStrategy:
    id: StrategyId
    name: str
    shortcut: str
    definition: str
    techniques: tuple[PersuasionTechnique, ...]


def _techniques(parent: StrategyId, *pairs: tuple[str, str]) -> tuple[PersuasionTechnique, ...]:
    return tuple(PersuasionTechnique(name=n, definition=d, parent=parent) for n, d in pairs)


_STRATEGIES: tuple[PersuasionStrategy, ...] = (
    PersuasionStrategy(
        id=StrategyId.ATTACK_ON_REPUTATION,
        name="Attack on reputation",
        shortcut="AR",
        definition=(
            "the argument does not address the topic itself but targets the participant "
            "(personality, experience, etc.) to question and/or undermine their credibility. "
            "The object of the argumentation can also refer to a group of individuals, "
            "an organization, an object, or an activity."
        ),
        techniques=_techniques(
            StrategyId.ATTACK_ON_REPUTATION,
            ("Name Calling or Labelling",
             "a form of argument in which loaded labels are directed at an individual, group, "
             "object or activity, typically in an insulting or demeaning way, but also using "
             "labels the target audience finds desirable."),
            ("Guilt by Association",
             "attacking the opponent or an activity by associating it with another group, "
             "activity or concept that has sharp negative connotations for the target audience."),
            ("Casting Doubt",
             "questioning the character or personal attributes of someone or something in order "
             "to question their general credibility or quality."),
            ("Appeal to Hypocrisy",
             "the target of the technique is attacked on its reputation by charging them with "
             "hypocrisy/inconsistency."),
            ("Questioning the Reputation",
             "the target is attacked by making strong negative claims about it, focusing specially "
             "on undermining its character and moral stature rather than relying on an argument "
             "about the topic."),
        ),
    ),
    PersuasionStrategy(
        id=StrategyId.JUSTIFICATION,
        name="Justification",
        shortcut="J",
        definition=(
            "the argument is made of two parts, a statement and an explanation or appeal, "
            "where the latter is used to justify and/or to support the statement."
        ),
        techniques=_techniques(
            StrategyId.JUSTIFICATION,
            ("Flag Waving",
             "justifying an idea by exhaling the pride of a group or highlighting the benefits "
             "for that specific group."),
            ("Appeal to Authority",
             "a weight is given to an argument, an idea or information by simply stating that a "
             "particular entity considered as an authority is the source of the information."),
            ("Appeal to Popularity",
             'a weight is given to an argument or idea by justifying it on the basis that '
             'allegedly "everybody" (or the large majority) agrees with it or "nobody" '
             'disagrees with it.'),
            ("Appeal to Values",
             "a weight is given to an idea by linking it to values seen by the target audience "
             "as positive."),
            ("Appeal to Fear, Prejudice",
             "promotes or rejects an idea through the repulsion or fear of the audience towards "
             "this idea."),
        ),
    ),
    PersuasionStrategy(
        id=StrategyId.SIMPLIFICATION,
        name="Simplification",
        shortcut="S",
        definition=(
            "the argument excessively simplifies a problem, usually regarding the cause, "
            "the consequence, or the existence of choices."
        ),
        techniques=_techniques(
            StrategyId.SIMPLIFICATION,
            ("Causal Oversimplification",
             "assuming a single cause or reason when there are actually multiple causes for "
             "an issue."),
            ("False Dilemma or No Choice",
             "a logical fallacy that presents only two options or sides when there are many "
             "options or sides. In extreme, the author tells the audience exactly what actions "
             "to take, eliminating any other possible choices."),
            ("Consequential Oversimplification",
             'is an assertion one is making of some "first" event/action leading to a domino-like '
             'chain of events that have some significant negative (positive) effects and '
             'consequences that appear to be ludicrous or unwarranted or with each step in the '
             'chain more and more improbable.'),
        ),
    ),
    PersuasionStrategy(
        id=StrategyId.DISTRACTION,
        name="Distraction",
        shortcut="D",
        definition="the argument takes focus away from the main topic or argument to distract the reader.",
        techniques=_techniques(
            StrategyId.DISTRACTION,
            ("Strawman",
             "consists in making an impression of refuting an argument of the opponent’s "
             "proposition, whereas the real subject of the argument was not addressed or "
             "refuted, but instead replaced with a false one."),
            ("Red Herring",
             "consists in diverting the attention of the audience from the main topic being "
             "discussed, by introducing another topic, which is irrelevant."),
            ("Whataboutism",
             "a technique that attempts to discredit an opponent’s position by charging them "
             "with hypocrisy without directly disproving their argument."),
        ),
    ),
    PersuasionStrategy(
        id=StrategyId.CALL,
        name="Call",
        shortcut="C",
        definition=(
            "the text is not an argument, but an encouragement to act or to think in a "
            "particular way."
        ),
        techniques=_techniques(
            StrategyId.CALL,
            ("Slogans",
             "a brief and striking phrase, often acting like emotional appeals, that may include "
             "labeling and stereotyping."),
            ("Conversation Killer",
             "words or phrases that discourage critical thought and meaningful discussion about "
             "a given topic."),
            ("Appeal to Time",
             "the argument is centred around the idea that time has come for a particular action."),
        ),
    ),
    PersuasionStrategy(
        id=StrategyId.MANIPULATIVE_WORDING,
        name="Manipulative wording",
        shortcut="MW",
        definition=(
            "the text is not an argument per se, but uses specific language, which contains "
            "words or phrases that are either non-neutral, confusing, exaggerating, loaded, "
            "etc., in order to impact the reader emotionally."
        ),
        techniques=_techniques(
            StrategyId.MANIPULATIVE_WORDING,
            ("Loaded Language",
             "use of specific words and phrases with strong emotional implications (either "
             "positive or negative) to influence and convince the audience that an argument "
             "is valid."),
            ("Obfuscation, Intentional Vagueness, Confusion",
             "use of words that are deliberately not clear, vague or ambiguous so that the "
             "audience may have its own interpretations."),
            ("Exaggeration or Minimisation",
             "consists of either representing something in an excessive manner or making "
             "something seem less important or smaller than it really is."),
            ("Repetition",
             "the speaker uses the same phrase repeatedly with the hopes that the repetition "
             "will lead to persuade the audience."),
        ),
    ),
)


def all_strategies() -> list[PersuasionStrategy]:
    """Returns the six strategies in presentation order (AR, J, S, D, C, MW)."""
    return list(_STRATEGIES)


def all_techniques() -> list[PersuasionTechnique]:
    return [t for s in _STRATEGIES for t in s.techniques]


def strategy_ids() -> list[StrategyId]:
    return [s.id for s in _STRATEGIES]


def normalize_key(text: str) -> str:
    """Casefolds and collapses whitespace, underscores and hyphens into single spaces."""
    return regex.sub(r"[\s_\-]+", " ", text).strip().casefold()


@lru_cache(maxsize=1)
def _lookup() -> dict[str, PersuasionStrategy]:
    table: dict[str, PersuasionStrategy] = {}
    for strategy in _STRATEGIES:
        for key in (strategy.name, strategy.shortcut, strategy.id.value):
            table[normalize_key(key)] = strategy
    return table


def resolve_strategy(name_or_shortcut: str) -> PersuasionStrategy:
    """Matches a strategy name, shortcut or id name, ignoring case and surrounding whitespace."""
    if isinstance(name_or_shortcut, StrategyId):
        name_or_shortcut = name_or_shortcut.value
    strategy = _lookup().get(normalize_key(str(name_or_shortcut)))
    if strategy is None:
        raise UnknownStrategy(f"Unknown persuasion strategy: {name_or_shortcut!r}")
    return strategy


def get_strategy(strategy_id: StrategyId) -> PersuasionStrategy:
    return resolve_strategy(strategy_id.value)


def export_taxonomy() -> str:
    """Canonical UTF-8 text rendering, one block per strategy."""
    blocks = []
    for strategy in _STRATEGIES:
        lines = [f"# {strategy.name} [{strategy.shortcut}]", strategy.definition, ""]
        lines.extend(f"- {t.name}: {t.definition}" for t in strategy.techniques)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"
