"""Single-pass and interactive verbalization of a planned episode."""
from __future__ import annotations

import logging
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..catalog import Catalog, Product
from ..planner import EpisodePlanner, PlanResult
from ..preference import Preference
from ..search import Entry, top_values
from .backends import TurnRequest
from .conversation import (MAX_CLOSING_TURNS, Conversation, Speaker, TranscriptError, Utterance,
                           parse_transcript)
from .prompts import PromptTemplate, load_template, render_prompt
from .tracker import DialogueState, Refiner, TrackerConfig, tokens, update_state

logger = logging.getLogger(__name__)


class EpisodeFailed(RuntimeError):
    def __init__(self, reason: str, detail: str = "", utterances=(), meta=None):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail
        self.utterances = list(utterances)
        self.meta = meta or {}


@dataclass
class DialogueConfig:
    max_aspects_per_question: int = 2
    closing_turns: int = 2
    hint_count: int = 3
    deadlock_turns: int = 4
    max_turns: int = 80
    record_timing: bool = True
    params: dict = field(default_factory=dict)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    template_dir: str | None = None

    def __post_init__(self):
        if not 0 <= self.closing_turns <= MAX_CLOSING_TURNS:
            raise ValueError(f"closing_turns must be within 0..{MAX_CLOSING_TURNS}")
        if self.max_aspects_per_question < 1:
            raise ValueError("max_aspects_per_question must be positive")

    def template(self, name: str) -> PromptTemplate:
        return load_template(name, self.template_dir)


def plan_hints(plan: PlanResult, catalog: Catalog, k: int = 3) -> dict[str, list[str]]:
    """Top values of each planned aspect among the candidates of the iteration that planned it."""
    hints = {}
    for it in plan.trace:
        for step in it.plan:
            hints[step.aspect] = top_values(it.candidates, catalog, step.aspect, k)
    return hints


def chunk(steps: Sequence[Entry], size: int) -> list[list[Entry]]:
    return [list(steps[i:i + size]) for i in range(0, len(steps), size)]


def find_recommendation(utterances: Sequence[Utterance], title: str) -> int | None:
    """Index of the seller turn naming the product: full title, else most title tokens (>= 60%)."""
    want = title.casefold()
    for u in utterances:
        if u.speaker is Speaker.SELLER and want in u.text.casefold():
            return u.turn_index
    title_toks = set(tokens(title))
    best, best_cover = None, 0.6
    for u in utterances:
        if u.speaker is Speaker.SELLER and title_toks:
            cover = len(title_toks & set(tokens(u.text))) / len(title_toks)
            if cover >= best_cover:
                best, best_cover = u.turn_index, cover
    return best


def _merge_meta(total: dict, meta: dict) -> None:
    total["calls"] = total.get("calls", 0) + 1
    total["attempts"] = total.get("attempts", 0) + meta.get("attempts", 1)
    for key in ("model", "backend"):
        if key in meta:
            total[key] = meta[key]


def generate_single_pass(preference: Preference, plan_history: Sequence[Entry], product: Product,
                         hints: Mapping[str, Sequence[str]], backend, *, conv_id: str = "", domain: str = "",
                         config: DialogueConfig | None = None) -> Conversation:
    """Verbalize the whole plan with one backend call.

    Raises :class:`EpisodeFailed` ("unparseable output") if the reply does not
    follow the ``speaker: text`` format; the raw text is kept in ``meta``.
    """
    config = config or DialogueConfig()
    start = time.perf_counter()
    prompt = render_prompt(config.template("single_pass"),
                           {"preference": preference, "plan": plan_history, "hints": hints, "product": product})
    request = TurnRequest("script", preference.category, hints=dict(hints), product_title=product.title,
                          chunks=chunk(plan_history, config.max_aspects_per_question),
                          closing_turns=config.closing_turns)
    gen = backend.generate([{"role": "user", "content": prompt}], config.params, request)
    meta = {"strategy": "single-pass"}
    _merge_meta(meta, gen.meta)
    try:
        utterances = parse_transcript(gen.text)
    except TranscriptError as e:
        meta["raw_output"] = gen.text
        raise EpisodeFailed("unparseable output", str(e), meta=meta) from e
    if config.record_timing:
        meta["generation_time_s"] = round(time.perf_counter() - start, 3)
    return Conversation(conv_id, domain, preference, list(plan_history), product.id, utterances,
                        find_recommendation(utterances, product.title), meta)


class _Interaction:
    def __init__(self, preference, backend, config: DialogueConfig, refiner: Refiner | None):
        self.preference = preference
        self.backend = backend
        self.config = config
        self.refiner = refiner
        self.utterances: list[Utterance] = []
        self.state = DialogueState()
        self.meta = {"strategy": "interactive"}
        self.templates = {"seller": config.template("seller"), "customer": config.template("customer")}

    def turn(self, speaker: Speaker, request: TurnRequest, **extra) -> Utterance:
        if len(self.utterances) >= self.config.max_turns:
            raise EpisodeFailed("turn limit", f"{self.config.max_turns} utterances", self.utterances, self.meta)
        ctx = {"preference": self.preference, "conversation_history": self.utterances, "state": self.state,
               "hints": request.hints, **extra}
        prompt = render_prompt(self.templates[speaker.value], ctx)
        gen = self.backend.generate([{"role": "user", "content": prompt}], self.config.params, request)
        _merge_meta(self.meta, gen.meta)
        text = " ".join(gen.text.split())
        for tag in ("customer:", "seller:"):
            if text.casefold().startswith(tag):
                text = text[len(tag):].strip()
        if not text:
            raise EpisodeFailed("empty utterance", speaker.value, self.utterances, self.meta)
        u = Utterance(speaker, text, len(self.utterances))
        self.utterances.append(u)
        self.state = update_state(self.state, u, (), self.config.tracker, self.refiner)
        return u


def generate_interactive(preference: Preference, planner: EpisodePlanner, backend, catalog: Catalog,
                         rng: random.Random, *, conv_id: str = "", domain: str = "",
                         config: DialogueConfig | None = None, refiner: Refiner | None = None) -> Conversation:
    """Alternate seller and customer turns while the planner iterates.

    Stage 1 opens with the category, stage 2 asks about each iteration's plan
    (at most ``max_aspects_per_question`` aspects per seller turn) until the
    tracker has seen every step, stage 3 recommends a random converged
    candidate and closes.
    """
    config = config or DialogueConfig()
    start = time.perf_counter()
    run = _Interaction(preference, backend, config, refiner)
    cat = preference.category

    run.turn(Speaker.CUSTOMER, TurnRequest("open", cat))

    while (it := planner.step()) is not None:
        run.state = run.state.sync(it.plan)
        hints = {s.aspect: top_values(it.candidates, catalog, s.aspect, config.hint_count) for s in it.plan}
        stale = 0
        while not run.state.done:
            focus = list(run.state.remaining[:config.max_aspects_per_question])
            run.turn(Speaker.SELLER, TurnRequest("ask", cat, focus, hints))
            before = len(run.state.mentioned)
            run.turn(Speaker.CUSTOMER, TurnRequest("answer", cat, focus, hints))
            if len(run.state.mentioned) > before:
                stale = 0
            else:
                stale += 2
            if stale >= config.deadlock_turns:
                raise EpisodeFailed("tracker deadlock",
                                    f"no feature consumed in {stale} turns; remaining "
                                    + ", ".join(e.aspect for e in run.state.remaining),
                                    run.utterances, run.meta)

    candidates = planner.candidates
    product = catalog[rng.choice(candidates)]
    rec = run.turn(Speaker.SELLER, TurnRequest("recommend", cat, tuple(planner.plan_history),
                                               product_title=product.title),
                   product=product, recommend=True)
    for i in range(config.closing_turns):
        speaker = Speaker.CUSTOMER if i % 2 == 0 else Speaker.SELLER
        run.turn(speaker, TurnRequest("close", cat, closing_index=i), closing=True)

    meta = run.meta
    meta["tracker"] = run.state.to_record()
    if config.record_timing:
        meta["generation_time_s"] = round(time.perf_counter() - start, 3)
    return Conversation(conv_id, domain, preference, list(planner.plan_history), product.id,
                        run.utterances, rec.turn_index, meta)
