"""Episode orchestration and the line-delimited episode record format.

A run file holds one header record (schema version, tool version, run
config), one record per episode in index order, and a summary trailer.
"""
from __future__ import annotations

import json
import logging
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from . import __version__
from .catalog import Catalog, load_catalog
from .dialogue.backends import BackendError
from .dialogue.conversation import Conversation, conversation_problems
from .dialogue.generate import (DialogueConfig, EpisodeFailed, generate_interactive, generate_single_pass,
                                plan_hints)
from .dialogue.tracker import track_conversation
from .planner import EpisodePlanner, PlannerConfig, PlanningError
from .preference import DEFAULT_INTEREST_WEIGHTS, derive_seed, sample_preference, sample_target
from .synthetic import synthetic_catalog

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STRATEGIES = ("single-pass", "interactive")
SYNTHETIC_PREFIX = "synthetic:"


class RecordError(ValueError):
    """A run file is empty, truncated or of an unknown schema."""


@dataclass
class RunConfig:
    """Everything that determines a run's output. Serialized into every file header."""

    catalog: str = "synthetic:1000:0"
    domain: str = ""
    n: int = 10
    seed: int = 0
    interest_weights: tuple[float, float, float] = DEFAULT_INTEREST_WEIGHTS
    criterion: str = "gain-ratio"
    max_depth: int | None = None
    min_leaf: int = 1
    max_steps_per_turn: int | None = None
    refit_per_step: bool = False
    strategy: str = "interactive"
    backend: str = "template"
    template_dir: str | None = None
    # None: record wall-clock timing only for non-deterministic backends
    record_timing: bool | None = None

    def __post_init__(self):
        self.interest_weights = tuple(self.interest_weights)
        if self.n < 0:
            raise ValueError("episode count must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        self.planner_config()

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(self.criterion, self.max_depth, self.min_leaf, self.max_steps_per_turn,
                             self.refit_per_step)

    def dialogue_config(self, deterministic_backend: bool) -> DialogueConfig:
        timing = (not deterministic_backend) if self.record_timing is None else self.record_timing
        return DialogueConfig(record_timing=timing, template_dir=self.template_dir)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["interest_weights"] = list(self.interest_weights)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RunConfig":
        return cls(**rec)


def open_catalog(spec: str, domain: str = "") -> Catalog:
    """Load a catalog file, or build one from ``synthetic:N[:SEED]``."""
    if spec.startswith(SYNTHETIC_PREFIX):
        parts = spec[len(SYNTHETIC_PREFIX):].split(":")
        try:
            n = int(parts[0])
            seed = int(parts[1]) if len(parts) > 1 else 0
        except (ValueError, IndexError):
            raise ValueError(f"bad synthetic catalog spec {spec!r}; expected synthetic:N[:SEED]") from None
        return synthetic_catalog(n, seed, domain or "synthetic")
    return load_catalog(spec, domain)


def episode_seed(run_seed: int, index: int) -> int:
    return derive_seed("episode", run_seed, index)


def _failed(record: dict, reason: str, detail: str = "") -> dict:
    record["status"] = "failed"
    record["reason"] = reason
    record["detail"] = detail
    return record


def run_episode(catalog: Catalog, config: RunConfig, index: int, backend, refiner=None) -> dict:
    """Sample, plan and verbalize one episode; never raises for per-episode failures."""
    seed = episode_seed(config.seed, index)
    rng = random.Random(seed)
    domain = config.domain or catalog.domain
    target = sample_target(catalog, rng)
    preference = sample_preference(target, catalog, rng, config.interest_weights)
    dialogue_config = config.dialogue_config(getattr(backend, "deterministic", False))
    record = {"type": "episode", "index": index, "id": f"{domain}-{index:06d}", "domain": domain, "seed": seed,
              "status": "ok", "preference": preference.to_record()}

    planner = None
    conversation = None
    try:
        planner = EpisodePlanner(catalog, preference, config.planner_config())
        if config.strategy == "single-pass":
            plan = planner.run()
            product = catalog[rng.choice(plan.final_candidates)]
            conversation = generate_single_pass(preference, plan.plan_history, product,
                                                plan_hints(plan, catalog, dialogue_config.hint_count), backend,
                                                conv_id=record["id"], domain=domain, config=dialogue_config)
        else:
            conversation = generate_interactive(preference, planner, backend, catalog, rng, conv_id=record["id"],
                                                domain=domain, config=dialogue_config, refiner=refiner)
    except PlanningError as e:
        _failed(record, "planning error", str(e))
    except EpisodeFailed as e:
        _failed(record, e.reason, e.detail)
        record["partial_utterances"] = [u.to_record() for u in e.utterances]
        record["generation_meta"] = e.meta
    except BackendError as e:
        _failed(record, "backend error", f"{type(e).__name__}: {e}")

    if planner is not None:
        record["plan_history"] = [e.to_record() for e in planner.plan_history]
        record["trace"] = [it.to_record() for it in planner.trace]
        record["stop_reason"] = planner.stop_reason
        record["converged_ids"] = list(planner.candidates)
    if conversation is not None:
        conversation.generation_meta["seed"] = seed
        record["conversation"] = conversation.to_record()
        if record["status"] == "ok":
            problems = conversation_problems(conversation, planner.candidates)
            if getattr(backend, "deterministic", False):
                state = track_conversation(conversation.utterances, conversation.plan_history,
                                           dialogue_config.tracker, refiner)
                if not state.done:
                    problems.append("tracker coverage incomplete: "
                                    + ", ".join(e.aspect for e in state.remaining))
            if problems:
                _failed(record, "invariant violation", "; ".join(problems))
    return record


def header_record(config: RunConfig) -> dict:
    return {"type": "header", "schema_version": SCHEMA_VERSION, "tool": "shopdial", "version": __version__,
            "config": config.to_record()}


def summary_record(episodes: Iterable[dict]) -> dict:
    episodes = list(episodes)
    reasons = Counter(r["reason"] for r in episodes if r["status"] != "ok")
    ok = sum(1 for r in episodes if r["status"] == "ok")
    return {"type": "summary", "n": len(episodes), "ok": ok, "failed": len(episodes) - ok,
            "failure_reasons": dict(sorted(reasons.items()))}


def generate_records(catalog: Catalog, config: RunConfig, backend, workers: int = 1, refiner=None) -> Iterator[dict]:
    """Episode records in index order, whatever the completion order."""
    if workers <= 1:
        for i in range(config.n):
            yield run_episode(catalog, config, i, backend, refiner)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(lambda i: run_episode(catalog, config, i, backend, refiner), range(config.n))


def dumps(record: dict) -> str:
    return json.dumps(record, ensure_ascii=False, sort_keys=True)


def write_run(path, config: RunConfig, episodes: Iterable[dict]) -> dict:
    """Write header, episodes and summary; returns the summary record."""
    done = []
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(header_record(config)) + "\n")
        for rec in episodes:
            f.write(dumps(rec) + "\n")
            done.append({"status": rec["status"], "reason": rec.get("reason")})
        summary = summary_record(done)
        f.write(dumps(summary) + "\n")
    return summary


@dataclass
class RunFile:
    header: dict | None
    episodes: list[dict] = field(default_factory=list)
    summary: dict | None = None

    def ok(self) -> list[dict]:
        return [r for r in self.episodes if r["status"] == "ok"]

    def conversations(self) -> list[Conversation]:
        return [Conversation.from_record(r["conversation"]) for r in self.ok()]


def read_run(path) -> RunFile:
    """Parse a run file. Header and summary are optional; episodes are not."""
    run = RunFile(None)
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise RecordError(f"{path}:{lineno}: not a JSON record ({e.msg})") from e
        kind = rec.get("type", "episode")
        if kind == "header":
            if rec.get("schema_version") != SCHEMA_VERSION:
                raise RecordError(f"{path}: unsupported schema version {rec.get('schema_version')!r}")
            run.header = rec
        elif kind == "summary":
            run.summary = rec
        elif kind == "episode":
            if "status" not in rec:
                raise RecordError(f"{path}:{lineno}: episode record without status")
            run.episodes.append(rec)
        else:
            raise RecordError(f"{path}:{lineno}: unknown record type {kind!r}")
    if not run.episodes:
        raise RecordError(f"{path}: no episode records")
    return run


REFERENCE_UTTERANCES = 19.7
REFERENCE_SEARCHES = 2.2


def _mean(xs: list[float]) -> float | None:
    return sum(xs) / len(xs) if xs else None


def run_stats(episodes: Iterable[dict]) -> dict[str, dict]:
    """Per-domain statistics; failed episodes are counted but kept out of the means."""
    groups: dict[str, dict[str, list]] = {}
    for rec in episodes:
        conv = rec.get("conversation") or {}
        domain = rec.get("domain") or conv.get("domain") or ""
        g = groups.setdefault(domain, {"utterances": [], "searches": [], "time": [], "failed": 0})
        if rec["status"] != "ok":
            g["failed"] += 1
            continue
        g["utterances"].append(len(conv.get("utterances", [])))
        g["searches"].append(len(rec.get("trace", [])))
        t = conv.get("generation_meta", {}).get("generation_time_s")
        if t is not None:
            g["time"].append(t)
    return {d: {"conversations": len(g["utterances"]), "failed": g["failed"],
                "mean_utterances": _mean(g["utterances"]), "mean_searches": _mean(g["searches"]),
                "mean_generation_time_s": _mean(g["time"])}
            for d, g in sorted(groups.items())}


def stats_table(stats: dict[str, dict]) -> str:
    def fmt(x, spec):
        return "n/a" if x is None else format(x, spec)

    header = ("domain", "convs", "failed", "utt/conv", "search/conv", "gen time (s)")
    rows = [(d, str(s["conversations"]), str(s["failed"]), fmt(s["mean_utterances"], ".2f"),
             fmt(s["mean_searches"], ".2f"), fmt(s["mean_generation_time_s"], ".2f"))
            for d, s in stats.items()]
    rows.append(("reference (published)", "", "", f"{REFERENCE_UTTERANCES}", f"{REFERENCE_SEARCHES}", ""))
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    return "\n".join("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
                     for r in [header, *rows])
