"""Conversation records and transcript parsing."""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from ..preference import Preference
from ..search import Entry

MAX_CLOSING_TURNS = 3


class Speaker(str, enum.Enum):
    CUSTOMER = "customer"
    SELLER = "seller"

    def other(self) -> "Speaker":
        return Speaker.SELLER if self is Speaker.CUSTOMER else Speaker.CUSTOMER


@dataclass(frozen=True)
class Utterance:
    speaker: Speaker
    text: str
    turn_index: int

    def to_record(self) -> dict:
        return {"speaker": self.speaker.value, "text": self.text, "turn": self.turn_index}

    @classmethod
    def from_record(cls, rec: dict) -> "Utterance":
        return cls(Speaker(rec["speaker"]), rec["text"], rec["turn"])


class TranscriptError(ValueError):
    """Generated text does not follow the ``speaker: text`` line format."""


_LINE = re.compile(r"^\s*(customer|seller)\s*:\s*(.*?)\s*$", re.IGNORECASE)


def parse_transcript(text: str) -> list[Utterance]:
    """Parse ``customer: ...`` / ``seller: ...`` lines; blank lines are ignored.

    Any other line is an error: nothing is repaired or merged.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = _LINE.match(line)
        if not m:
            raise TranscriptError(f"line {lineno} has no speaker tag: {line[:80]!r}")
        if not m.group(2):
            raise TranscriptError(f"line {lineno} is an empty utterance")
        out.append(Utterance(Speaker(m.group(1).lower()), m.group(2), len(out)))
    if not out:
        raise TranscriptError("no utterances found")
    return out


def format_transcript(utterances) -> str:
    return "\n".join(f"{u.speaker.value}: {u.text}" for u in utterances)


@dataclass
class Conversation:
    id: str
    domain: str
    preference: Preference
    plan_history: list[Entry]
    recommended_product_id: str | None
    utterances: list[Utterance]
    recommendation_turn: int | None = None
    generation_meta: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "domain": self.domain,
            "preference": self.preference.to_record(),
            "plan_history": [e.to_record() for e in self.plan_history],
            "recommended_product_id": self.recommended_product_id,
            "recommendation_turn": self.recommendation_turn,
            "utterances": [u.to_record() for u in self.utterances],
            "generation_meta": self.generation_meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Conversation":
        return cls(
            id=rec["id"],
            domain=rec["domain"],
            preference=Preference.from_record(rec["preference"]),
            plan_history=[Entry.from_record(e) for e in rec["plan_history"]],
            recommended_product_id=rec.get("recommended_product_id"),
            utterances=[Utterance.from_record(u) for u in rec["utterances"]],
            recommendation_turn=rec.get("recommendation_turn"),
            generation_meta=rec.get("generation_meta", {}),
        )


def conversation_problems(conv: Conversation, converged_ids=None) -> list[str]:
    """Invariant violations of ``conv``; an empty list means it is well formed."""
    problems = []
    us = conv.utterances
    if not us:
        return ["conversation is empty"]
    if us[0].speaker is not Speaker.CUSTOMER:
        problems.append("turn 0 is not the customer")
    for i, u in enumerate(us):
        if u.turn_index != i:
            problems.append(f"turn index {u.turn_index} at position {i}")
            break
        if i and u.speaker is us[i - 1].speaker:
            problems.append(f"speakers do not alternate at turn {i}")
            break
    if conv.recommendation_turn is not None:
        r = conv.recommendation_turn
        if not 0 <= r < len(us) or us[r].speaker is not Speaker.SELLER:
            problems.append(f"recommendation turn {r} is not a seller turn")
        elif len(us) - 1 - r > MAX_CLOSING_TURNS:
            problems.append(f"{len(us) - 1 - r} turns after the recommendation (max {MAX_CLOSING_TURNS})")
    if converged_ids is not None and conv.recommended_product_id is not None \
            and conv.recommended_product_id not in converged_ids:
        problems.append("recommended product is not in the converged candidate set")
    return problems
