"""Target sampling and customer preference synthesis."""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from typing import Sequence

from .catalog import Catalog, CatalogError, Product, aspect_value_stats, fold
from .search import Entry, Interest, check_entries

DEFAULT_INTEREST_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)
_INTERESTS = (Interest.WANTED, Interest.UNWANTED, Interest.OPTIONAL)
_MAX_RESAMPLES = 10_000


class Uncorruptable(ValueError):
    """The aspect has no alternative value to use as an unwanted distractor."""


@dataclass(frozen=True)
class Preference:
    category: str
    entries: tuple[Entry, ...]
    target_id: str

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(Entry(*e) for e in self.entries))
        check_entries(self.entries)

    def entry(self, aspect: str) -> Entry | None:
        for e in self.entries:
            if fold(e.aspect) == fold(aspect):
                return e
        return None

    def by_interest(self, interest: Interest) -> list[Entry]:
        return [e for e in self.entries if e.interest is interest]

    def to_record(self) -> dict:
        return {"category": self.category, "target_id": self.target_id,
                "entries": [e.to_record() for e in self.entries]}

    @classmethod
    def from_record(cls, rec: dict) -> "Preference":
        return cls(rec["category"], tuple(Entry.from_record(e) for e in rec["entries"]), rec["target_id"])


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def as_rng(seed) -> random.Random:
    return seed if isinstance(seed, random.Random) else random.Random(seed)


def sample_target(catalog: Catalog, rng_seed) -> Product:
    if not catalog.products:
        raise CatalogError("catalog is empty")
    return as_rng(rng_seed).choice(catalog.products)


def corrupt_value(aspect: str, true_value: str, catalog: Catalog, category: str, rng_seed) -> str:
    """A value of ``aspect`` seen in ``category`` other than ``true_value``, drawn uniformly."""
    stats = aspect_value_stats(catalog, category)
    values = next((vals for a, vals in stats.items() if fold(a) == fold(aspect)), {})
    choices = sorted(v for v in values if fold(v) != fold(true_value))
    if not choices:
        raise Uncorruptable(f"aspect {aspect!r} has no value other than {true_value!r} in {category!r}")
    return as_rng(rng_seed).choice(choices)


def sample_preference(target: Product, catalog: Catalog, rng_seed,
                      interest_weights: Sequence[float] = DEFAULT_INTEREST_WEIGHTS) -> Preference:
    """Assign an interest to every aspect of ``target``.

    Wanted keeps the target's value, Optional blanks it and Unwanted swaps in a
    different catalog value (falling back to Optional when none exists). The
    assignment is redrawn until at least one aspect is Wanted.
    """
    weights = tuple(float(w) for w in interest_weights)
    if len(weights) != 3 or any(w < 0 for w in weights) or abs(sum(weights) - 1) > 1e-9:
        raise ValueError(f"interest weights must be 3 non-negative probabilities summing to 1, got {weights}")
    if weights[0] == 0:
        raise ValueError("wanted weight must be positive")
    if not target.aspects:
        raise ValueError(f"target {target.id!r} has no aspects")

    rng = as_rng(rng_seed)
    for _ in range(_MAX_RESAMPLES):
        interests = rng.choices(_INTERESTS, weights=weights, k=len(target.aspects))
        if Interest.WANTED in interests:
            break
    else:
        raise RuntimeError("could not draw an assignment with a wanted aspect")

    entries = []
    for (aspect, value), interest in zip(target.aspects.items(), interests):
        if interest is Interest.UNWANTED:
            try:
                entries.append(Entry(aspect, corrupt_value(aspect, value, catalog, target.category, rng),
                                     Interest.UNWANTED))
                continue
            except Uncorruptable:
                interest = Interest.OPTIONAL
        if interest is Interest.WANTED:
            entries.append(Entry(aspect, value, Interest.WANTED))
        else:
            entries.append(Entry(aspect, "", Interest.OPTIONAL))
    return Preference(target.category, tuple(entries), target.id)
