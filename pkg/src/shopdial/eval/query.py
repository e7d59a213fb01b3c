"""Conversational query generation: structured queries, the full-history
baseline and the rule-based reference extractor."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from ..catalog import fold
from ..dialogue.conversation import Conversation
from ..dialogue.tracker import TrackerConfig, track_conversation
from ..search import Entry, Interest, check_entries

ITEM_SEP = " ; "
_MARK = {Interest.WANTED: "+", Interest.UNWANTED: "-", Interest.OPTIONAL: "?"}
_ORDER = {Interest.WANTED: 0, Interest.UNWANTED: 1, Interest.OPTIONAL: 2}


class ExtractionError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructuredQuery:
    category: str
    wanted: tuple[tuple[str, str], ...] = ()
    unwanted: tuple[tuple[str, str], ...] = ()
    optional: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for name in ("wanted", "unwanted", "optional"):
            object.__setattr__(self, name, tuple(tuple(p) for p in getattr(self, name)))
        check_entries(self.entries())

    def entries(self) -> list[Entry]:
        return ([Entry(a, v, Interest.WANTED) for a, v in self.wanted]
                + [Entry(a, v, Interest.UNWANTED) for a, v in self.unwanted]
                + [Entry(a, v, Interest.OPTIONAL) for a, v in self.optional])

    @classmethod
    def from_entries(cls, category: str, entries: Iterable[Entry]) -> "StructuredQuery":
        entries = list(entries)
        return cls(category,
                   tuple((e.aspect, e.value) for e in entries if e.interest is Interest.WANTED),
                   tuple((e.aspect, e.value) for e in entries if e.interest is Interest.UNWANTED),
                   tuple((e.aspect, "") for e in entries if e.interest is Interest.OPTIONAL))

    def serialize(self) -> str:
        """Canonical string: category, then entries sorted by interest, aspect and value."""
        items = sorted(self.entries(), key=lambda e: (_ORDER[e.interest], fold(e.aspect), fold(e.value)))
        parts = [fold(self.category)]
        for e in items:
            body = f"{fold(e.aspect)}: {fold(e.value)}" if e.value else fold(e.aspect)
            parts.append(_MARK[e.interest] + body)
        return ITEM_SEP.join(parts)

    def to_record(self) -> dict:
        return {"category": self.category, "wanted": [list(p) for p in self.wanted],
                "unwanted": [list(p) for p in self.unwanted], "optional": [a for a, _ in self.optional]}


def gold_query(conversation: Conversation) -> StructuredQuery:
    """What the conversation was generated to convey: the category plus every planned step."""
    return StructuredQuery.from_entries(conversation.preference.category, conversation.plan_history)


def preference_query(preference) -> StructuredQuery:
    return StructuredQuery.from_entries(preference.category, preference.entries)


def baseline_query(conversation: Conversation) -> str:
    """Every utterance text in order, speaker tags dropped, joined by single spaces."""
    return " ".join(u.text for u in conversation.utterances)


_CATEGORY_RE = re.compile(
    r"\b(?:shopping for|looking for|looking to buy|want to buy|wants to buy|need|buy|get)\s+"
    r"(?:a |an |some |the |new )?(.+?)(?:\s+but\b|[.!?,;]|$)",
    re.IGNORECASE)


class ReferenceExtractor:
    """Runs the dialogue-state tracker over the full transcript.

    The category comes from the opening customer turn: the longest known
    category mentioned there if ``categories`` is given, else a phrase match.
    """

    def __init__(self, categories: Sequence[str] = (), tracker: TrackerConfig | None = None):
        self.categories = sorted(categories, key=len, reverse=True)
        self.tracker = tracker

    def category(self, conversation: Conversation) -> str:
        if not conversation.utterances:
            return ""
        opening = conversation.utterances[0].text
        for cat in self.categories:
            if re.search(r"(?<!\w)" + re.escape(fold(cat)) + r"(?!\w)", fold(opening)):
                return cat
        m = _CATEGORY_RE.search(opening)
        return m.group(1).strip() if m else ""

    def __call__(self, conversation: Conversation) -> StructuredQuery:
        state = track_conversation(conversation.utterances, conversation.plan_history, self.tracker)
        return StructuredQuery.from_entries(self.category(conversation), state.mentioned)


Extractor = Callable[[Conversation], StructuredQuery]


def extract_query(conversation: Conversation, extractor: Extractor | None = None) -> StructuredQuery:
    extractor = extractor or ReferenceExtractor()
    try:
        return extractor(conversation)
    except Exception as e:
        raise ExtractionError(f"episode {conversation.id!r}: extractor failed: {e}") from e
