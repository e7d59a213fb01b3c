"""Prompt templates (jinja files shipped with the package) and rendering."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import jinja2

from ..search import Interest

TEMPLATE_NAMES = ("single_pass", "seller", "customer", "tracker")

_env = jinja2.Environment(undefined=jinja2.StrictUndefined, trim_blocks=True, lstrip_blocks=True,
                          keep_trailing_newline=False, autoescape=False)
_ROLE = re.compile(r"\{#\s*role:\s*([\w-]+)\s*#\}")


class PromptError(KeyError):
    """A template placeholder has no value in the render context."""

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    role: str
    body: str


def load_template(name: str, directory=None) -> PromptTemplate:
    """Load ``<name>.txt`` from ``directory`` or from the bundled templates."""
    if directory is not None:
        body = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        body = resources.files(__package__).joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    m = _ROLE.search(body)
    return PromptTemplate(name, m.group(1) if m else name, body)


def load_phrases(directory=None) -> dict:
    if directory is not None and (Path(directory) / "phrases.json").exists():
        text = (Path(directory) / "phrases.json").read_text(encoding="utf-8")
    else:
        text = resources.files(__package__).joinpath("templates", "phrases.json").read_text(encoding="utf-8")
    return json.loads(text)


def _variables(context: Mapping) -> dict:
    ctx = dict(context)
    out = {"recommend": False, "closing": False}
    pref = ctx.pop("preference", None)
    if pref is not None:
        out["ProductCategory"] = pref.category
    if "category" in ctx:
        out["ProductCategory"] = ctx.pop("category")

    plan = ctx.pop("plan", None)
    if plan is not None:
        out["wanted"] = [(e.aspect, e.value) for e in plan if e.interest is Interest.WANTED]
        out["optional"] = [e.aspect for e in plan if e.interest is Interest.OPTIONAL]
        out["unwanted"] = [(e.aspect, e.value) for e in plan if e.interest is Interest.UNWANTED]

    hints = ctx.pop("hints", None)
    if hints is not None:
        order = [e.aspect for e in plan] if plan is not None else list(hints)
        order += [a for a in hints if a not in order]
        out["hints"] = [(a, list(hints[a])) for a in order if hints.get(a)]

    history = ctx.pop("conversation_history", None)
    if history is not None:
        out["history"] = [(u.speaker.value, u.text) for u in history]

    product = ctx.pop("product", None)
    if product is not None:
        out["ProductTitle"] = product.title

    state = ctx.pop("state", None)
    if state is not None:
        hint_map = dict(out.get("hints", []))
        out["remaining"] = [(e.aspect, hint_map.get(e.aspect, [])) for e in state.remaining]
        out["remaining_wanted"] = [(e.aspect, e.value) for e in state.remaining_by(Interest.WANTED)]
        out["remaining_optional"] = [e.aspect for e in state.remaining_by(Interest.OPTIONAL)]
        out["remaining_unwanted"] = [(e.aspect, e.value) for e in state.remaining_by(Interest.UNWANTED)]
        out["mentioned"] = [(e.interest.value, e.aspect, e.value) for e in state.mentioned]
        out["state_json"] = json.dumps(state.to_record(), ensure_ascii=False)

    out.update(ctx)
    return out


def render_prompt(template: PromptTemplate, context: Mapping) -> str:
    """Fill ``template`` from ``context``.

    Recognized context keys: preference, category, plan, hints,
    conversation_history, product, state; anything else is passed through
    as a template variable. Raises :class:`PromptError` naming the first
    placeholder left unresolved.
    """
    try:
        text = _env.from_string(template.body).render(**_variables(context))
    except jinja2.UndefinedError as e:
        m = re.search(r"'(\w+)' is undefined", str(e))
        name = m.group(1) if m else str(e)
        raise PromptError(f"template {template.name!r}: missing placeholder {name!r}") from None
    return text.strip() + "\n"
