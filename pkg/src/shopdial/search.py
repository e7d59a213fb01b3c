"""Rule-based product filtering against a (partially) revealed preference."""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .catalog import Catalog, CatalogError, Product, fold


class Interest(str, enum.Enum):
    WANTED = "wanted"
    UNWANTED = "unwanted"
    OPTIONAL = "optional"


class Entry(NamedTuple):
    """One (aspect, value, interest) triple. Optional entries carry an empty value."""

    aspect: str
    value: str
    interest: Interest

    def to_record(self) -> list:
        return [self.aspect, self.value, self.interest.value]

    @classmethod
    def from_record(cls, rec: Sequence) -> "Entry":
        return cls(rec[0], rec[1], Interest(rec[2]))


def check_entries(entries: Sequence[Entry]) -> None:
    seen = set()
    for e in entries:
        if not isinstance(e.interest, Interest):
            raise ValueError(f"bad interest {e.interest!r}")
        if e.interest is Interest.OPTIONAL and e.value:
            raise ValueError(f"optional entry {e.aspect!r} must have an empty value")
        if e.interest is not Interest.OPTIONAL and not e.value:
            raise ValueError(f"{e.interest.value} entry {e.aspect!r} needs a value")
        if fold(e.aspect) in seen:
            raise ValueError(f"aspect {e.aspect!r} appears twice")
        seen.add(fold(e.aspect))


@dataclass(frozen=True)
class RevealedPreference:
    category: str
    entries: tuple[Entry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(Entry(*e) for e in self.entries))
        check_entries(self.entries)

    def extend(self, steps: Iterable[Entry]) -> "RevealedPreference":
        return RevealedPreference(self.category, self.entries + tuple(steps))

    def aspects(self) -> set[str]:
        return {fold(e.aspect) for e in self.entries}


def filter_products(catalog: Catalog, rev_pref: RevealedPreference) -> list[str]:
    """Ids of the category's products consistent with every revealed entry, in catalog order.

    Wanted(A, V) requires A == V; Unwanted(A, V) rejects A == V but passes
    products lacking A; Optional entries never constrain.
    """
    category = rev_pref.category
    if category not in catalog.category_index:
        raise CatalogError(f"unknown category {category!r}")
    keep: set[str] | None = None
    banned: set[str] = set()
    for e in rev_pref.entries:
        if e.interest is Interest.WANTED:
            ids = catalog.ids_with_value(category, e.aspect, e.value)
            keep = set(ids) if keep is None else keep & ids
        elif e.interest is Interest.UNWANTED:
            banned |= catalog.ids_with_value(category, e.aspect, e.value)
    ids = catalog.category_index[category]
    if keep is None:
        return [i for i in ids if i not in banned]
    return [i for i in ids if i in keep and i not in banned]


def top_values(product_set: Sequence[str], catalog: Catalog, aspect: str, k: int = 3) -> list[str]:
    """Up to ``k`` most frequent values of ``aspect`` among ``product_set``.

    Ordered by descending count, ties broken lexicographically.
    """
    if not product_set:
        raise ValueError("product_set is empty")
    counts = Counter(v for pid in product_set if (v := catalog[pid].get(aspect)) is not None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [v for v, _ in ranked[:k]]


def satisfies(product: Product, preference) -> bool:
    """True iff ``product`` is in the preference's category, has every wanted
    value and none of the unwanted ones."""
    if product.category != preference.category:
        return False
    for e in preference.entries:
        if e.interest is Interest.WANTED and not product.has_value(e.aspect, e.value):
            return False
        if e.interest is Interest.UNWANTED and product.has_value(e.aspect, e.value):
            return False
    return True


def converged(product_set: Sequence[str], preference, catalog: Catalog) -> bool:
    if not product_set:
        return False
    return all(satisfies(catalog[pid], preference) for pid in product_set)
