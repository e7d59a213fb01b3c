"""Dialogue-state tracking: which planned features the customer has voiced.

The rule layer matches aspect and value mentions in customer utterances.
An optional refiner (e.g. an LLM function call) can move further entries;
both layers only ever move entries from remaining to mentioned.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from ..catalog import fold
from ..search import Entry, Interest
from .conversation import Speaker, Utterance

logger = logging.getLogger(__name__)

DEFAULT_HEDGES = (
    "don't care", "do not care", "optional", "no preference", "flexible",
    "not mandatory", "doesn't matter", "does not matter", "not important",
    "no specific preference", "either way", "open to",
)

_TOKEN = re.compile(r"\w+(?:[.'’]\w+)*")


def _norm_token(tok: str) -> str:
    tok = tok.replace("’", "'")
    if len(tok) > 3 and "'" not in tok and tok.endswith("s") and not tok.endswith(("ss", "us", "is")):
        return tok[:-1]
    return tok


def tokens(text: str) -> list[str]:
    """Case-folded word tokens with a crude plural fold ("reviews" -> "review")."""
    return [_norm_token(t) for t in _TOKEN.findall(text.casefold())]


def contains(haystack: Sequence[str], needle: Sequence[str]) -> bool:
    n = len(needle)
    if n == 0:
        return False
    return any(list(haystack[i:i + n]) == list(needle) for i in range(len(haystack) - n + 1))


@dataclass
class TrackerConfig:
    hedges: Sequence[str] = DEFAULT_HEDGES
    # folded aspect key -> extra names the customer may use for it
    aliases: Mapping[str, Sequence[str]] = field(default_factory=dict)

    def names(self, aspect: str) -> list[list[str]]:
        return [tokens(aspect)] + [tokens(a) for a in self.aliases.get(fold(aspect), ())]


@dataclass(frozen=True)
class DialogueState:
    remaining: tuple[Entry, ...] = ()
    mentioned: tuple[Entry, ...] = ()

    @classmethod
    def start(cls, entries: Iterable[Entry] = ()) -> "DialogueState":
        return cls(tuple(entries), ())

    def sync(self, plan_history: Iterable[Entry]) -> "DialogueState":
        """Add plan entries not yet tracked to ``remaining``."""
        known = set(self.remaining) | set(self.mentioned)
        new = tuple(e for e in plan_history if e not in known)
        return DialogueState(self.remaining + new, self.mentioned) if new else self

    def move(self, entries: Iterable[Entry]) -> "DialogueState":
        moving = [e for e in entries if e in self.remaining]
        if not moving:
            return self
        moving_set = set(moving)
        return DialogueState(tuple(e for e in self.remaining if e not in moving_set),
                             self.mentioned + tuple(e for e in self.remaining if e in moving_set))

    def remaining_by(self, interest: Interest) -> list[Entry]:
        return [e for e in self.remaining if e.interest is interest]

    def mentioned_by(self, interest: Interest) -> list[Entry]:
        return [e for e in self.mentioned if e.interest is interest]

    @property
    def done(self) -> bool:
        return not self.remaining

    def to_record(self) -> dict:
        out = {}
        for part, entries in (("remaining", self.remaining), ("mentioned", self.mentioned)):
            for interest in Interest:
                out[f"{part}_{interest.value}"] = [[e.aspect, e.value] for e in entries if e.interest is interest]
        return out


Refiner = Callable[[DialogueState, Utterance], Iterable[Entry]]


def rule_matches(state: DialogueState, utterance: Utterance, config: TrackerConfig | None = None) -> list[Entry]:
    """Remaining entries the utterance covers under keyword matching.

    Wanted/unwanted entries need their value, plus either their aspect name
    or a value that no other remaining entry shares. Optional entries need
    their aspect name and a hedge phrase.
    """
    config = config or TrackerConfig()
    toks = tokens(utterance.text)
    hedged = any(contains(toks, tokens(h)) for h in config.hedges)

    def aspect_hit(e: Entry) -> bool:
        return any(contains(toks, name) for name in config.names(e.aspect))

    valued = [e for e in state.remaining if e.interest is not Interest.OPTIONAL and contains(toks, tokens(e.value))]
    moved = []
    for e in state.remaining:
        if e.interest is Interest.OPTIONAL:
            if hedged and aspect_hit(e):
                moved.append(e)
        elif e in valued:
            if aspect_hit(e):
                moved.append(e)
            elif len(valued) == 1:
                moved.append(e)
            else:
                logger.debug("ambiguous value mention for %s in %r", e, utterance.text)
    return moved


def update_state(state: DialogueState, utterance: Utterance, plan_history: Iterable[Entry] = (),
                 config: TrackerConfig | None = None, refiner: Refiner | None = None) -> DialogueState:
    """New state after ``utterance``. Seller utterances never move entries."""
    state = state.sync(plan_history)
    if utterance.speaker is not Speaker.CUSTOMER or state.done:
        return state
    state = state.move(rule_matches(state, utterance, config))
    if refiner is not None and not state.done:
        state = state.move(refiner(state, utterance))
    return state


def track_conversation(utterances: Iterable[Utterance], plan_history: Sequence[Entry],
                       config: TrackerConfig | None = None, refiner: Refiner | None = None) -> DialogueState:
    state = DialogueState.start(plan_history)
    for u in utterances:
        state = update_state(state, u, (), config, refiner)
    return state


class FunctionCallRefiner:
    """Refiner that asks a text backend to fill the state-update function arguments.

    The backend reply must hold a JSON object with ``mentioned_positive_features``,
    ``mentioned_optional_features`` and ``mentioned_negative_features`` maps
    (aspect -> value). Unknown or already-mentioned entries are ignored.
    """

    _KEYS = {
        Interest.WANTED: "mentioned_positive_features",
        Interest.OPTIONAL: "mentioned_optional_features",
        Interest.UNWANTED: "mentioned_negative_features",
    }

    def __init__(self, backend, template=None, params: dict | None = None):
        from .prompts import load_template

        self.backend = backend
        self.template = template or load_template("tracker")
        self.params = params or {}

    def __call__(self, state: DialogueState, utterance: Utterance) -> list[Entry]:
        from .prompts import render_prompt

        prompt = render_prompt(self.template, {"state": state, "utterance": utterance})
        reply = self.backend.generate([{"role": "user", "content": prompt}], self.params).text
        m = re.search(r"\{.*\}", reply, re.DOTALL)
        if not m:
            logger.info("state refiner reply has no JSON object")
            return []
        try:
            args = json.loads(m.group(0))
        except json.JSONDecodeError:
            logger.info("state refiner reply is not valid JSON")
            return []
        moved = []
        for e in state.remaining:
            got = args.get(self._KEYS[e.interest]) or {}
            if not isinstance(got, dict):
                continue
            for aspect, value in got.items():
                if fold(str(aspect)) == fold(e.aspect) and (
                        e.interest is Interest.OPTIONAL or fold(str(value)) == fold(e.value)):
                    moved.append(e)
                    break
        return moved
