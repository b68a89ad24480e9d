"""Built-in question template bank and relation rendering.

The bank holds deterministic, object-seeking question scaffolds per branch
level so generation works fully offline. Templates use the placeholders
{subject} and {relation}; {object} appears only in scaffolds that embed the
answer candidates in the question (comparison, conflict).
"""

from __future__ import annotations

import random
import string
from dataclasses import dataclass

from .errors import EmptyBank
from .kg import Level

RECOGNIZED_PLACEHOLDERS = {"subject", "relation", "object"}


@dataclass(frozen=True)
class Template:
    text: str
    level: Level
    style: str

    def __post_init__(self) -> None:
        names = {
            field for _, field, _, _ in string.Formatter().parse(self.text) if field
        }
        bad = names - RECOGNIZED_PLACEHOLDERS
        if bad:
            raise ValueError(f"unrecognized placeholders {sorted(bad)} in {self.text!r}")


def relation_phrase(relation: str) -> str:
    """Humanize a snake_case relation into a verb phrase.

    Past-participle heads get a passive "was": signed_in -> "was signed in",
    describes -> "describes".
    """
    tokens = relation.split("_")
    phrase = " ".join(tokens)
    if tokens and tokens[0].endswith("ed"):
        return "was " + phrase
    return phrase


_BANK: dict[Level, list[Template]] = {
    Level.ROOT: [
        Template("The {subject} {relation} what?", Level.ROOT, "definition"),
        Template(
            "Which option completes the statement: the {subject} {relation} ___?",
            Level.ROOT,
            "definition",
        ),
        Template(
            "According to the standard account, the {subject} {relation} which of the following?",
            Level.ROOT,
            "context",
        ),
        Template("As commonly taught, the {subject} {relation} what?", Level.ROOT, "context"),
        Template(
            "At the broadest level, the {subject} {relation} which of the following?",
            Level.ROOT,
            "role",
        ),
        Template(
            "What do standard references say the {subject} {relation}?", Level.ROOT, "role"
        ),
        Template(
            "For a domain-wide overview, the {subject} {relation} what?",
            Level.ROOT,
            "application",
        ),
        Template(
            "Anyone surveying this field should know: the {subject} {relation} which option?",
            Level.ROOT,
            "application",
        ),
    ],
    Level.INTERMEDIATE: [
        Template(
            "At the level of its field, the {subject} {relation} what?",
            Level.INTERMEDIATE,
            "definition",
        ),
        Template(
            "Within its branch of study, the {subject} {relation} which of the following?",
            Level.INTERMEDIATE,
            "definition",
        ),
        Template(
            "Considering its influence on related topics, the {subject} {relation} what?",
            Level.INTERMEDIATE,
            "context",
        ),
        Template(
            "In the context of surrounding developments, the {subject} {relation} which option?",
            Level.INTERMEDIATE,
            "context",
        ),
        Template(
            "Given its role among neighboring concepts, the {subject} {relation} what?",
            Level.INTERMEDIATE,
            "role",
        ),
        Template(
            "As it shaped its field, the {subject} {relation} which of the following?",
            Level.INTERMEDIATE,
            "role",
        ),
        Template(
            "For mid-level coursework, the {subject} {relation} what?",
            Level.INTERMEDIATE,
            "application",
        ),
        Template(
            "When connecting related concepts, the {subject} {relation} which option?",
            Level.INTERMEDIATE,
            "application",
        ),
    ],
    Level.LEAF: [
        Template("Precisely, the {subject} {relation} what?", Level.LEAF, "definition"),
        Template(
            "As a specific matter of record, the {subject} {relation} which of the following?",
            Level.LEAF,
            "definition",
        ),
        Template(
            "In fine-grained terms, the {subject} {relation} what?", Level.LEAF, "context"
        ),
        Template(
            "Down to the detail, the {subject} {relation} which option?", Level.LEAF, "context"
        ),
        Template("For specialists, the {subject} {relation} what?", Level.LEAF, "role"),
        Template(
            "At the most specific level, the {subject} {relation} which of the following?",
            Level.LEAF,
            "role",
        ),
        Template("In applied settings, the {subject} {relation} what?", Level.LEAF, "application"),
        Template(
            "In practice, the {subject} {relation} which option?", Level.LEAF, "application"
        ),
    ],
}


def builtin_bank(level: Level | str) -> list[Template]:
    level = Level(level)
    return list(_BANK[level])


def pick_templates(level: Level | str, count: int, seed: int) -> list[Template]:
    """Seeded sample of `count` distinct built-in templates for a level."""
    if count < 1:
        raise ValueError("count must be >= 1")
    bank = builtin_bank(level)
    if not bank:
        raise EmptyBank(f"no built-in templates for level {level!r}")
    if count > len(bank):
        raise EmptyBank(
            f"built-in bank for level {Level(level).value} holds {len(bank)} templates, "
            f"requested {count}"
        )
    return random.Random(seed).sample(bank, count)
