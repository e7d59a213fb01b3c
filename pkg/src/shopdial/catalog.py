"""Product catalog ingestion, normalization and per-category statistics."""
from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

PRICE_KEY = "price"
REVIEW_KEY = "customer review"
RESERVED_KEYS = (PRICE_KEY, REVIEW_KEY)

DEFAULT_DROP_KEYS = frozenset({"asin", "date first available", "is discontinued by manufacturer"})
DEFAULT_RENAME_MAP = {"colour": "Color", "brand name": "Brand"}

DEFAULT_PRICE_EDGES = (0, 10, 20, 50, 100, 200, 500, 1000)
DEFAULT_REVIEW_LADDER = (3.0, 3.5, 4.0, 4.5)

MIN_FEATURES = 2

_PRICE_RE = re.compile(r"^(between \$\d+(\.\d+)? and \$\d+(\.\d+)?|higher than \$\d+(\.\d+)?)$")
_REVIEW_RE = re.compile(r"^(higher|lower) than \d+(\.\d+)? stars$")


class CatalogError(Exception):
    """Fatal catalog problem (unreadable file, no products, unknown category)."""


class _Drop:
    def __repr__(self) -> str:
        return "DROP"


#: Sentinel returned by :func:`normalize_aspect_key` for removed aspects.
DROP = _Drop()


def fold(text: str) -> str:
    """Matching key for aspect keys and values: trimmed, inner whitespace collapsed, case-folded."""
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class Product:
    id: str
    category: str
    title: str
    aspects: Mapping[str, str]
    _folded: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "aspects", OrderedDict(self.aspects))
        object.__setattr__(self, "_folded", {fold(k): v for k, v in self.aspects.items()})

    def get(self, aspect: str) -> str | None:
        """Value of ``aspect`` (matched case-insensitively), or None when absent."""
        return self._folded.get(fold(aspect))

    def has_value(self, aspect: str, value: str) -> bool:
        v = self.get(aspect)
        return v is not None and fold(v) == fold(value)

    def feature_count(self) -> int:
        return sum(1 for k in self.aspects if fold(k) not in RESERVED_KEYS)

    def to_record(self) -> dict:
        return {"id": self.id, "category": self.category, "title": self.title, "aspects": dict(self.aspects)}


@dataclass
class LoadReport:
    skipped: int = 0
    discarded: int = 0
    errors: list[str] = field(default_factory=list)


class Catalog:
    """Immutable product collection with derived category and aspect-value indices."""

    def __init__(self, domain: str, products: Iterable[Product], report: LoadReport | None = None):
        self.domain = domain
        self.products: tuple[Product, ...] = tuple(products)
        self.report = report or LoadReport()
        self.by_id: dict[str, Product] = {}
        self.category_index: dict[str, list[str]] = {}
        self.aspect_value_index: dict[str, dict[str, dict[str, int]]] = {}
        # category -> folded aspect -> folded value -> ids, for set-based filtering
        self._postings: dict[str, dict[str, dict[str, set[str]]]] = {}
        self._has_aspect: dict[str, dict[str, set[str]]] = {}
        for p in self.products:
            if p.id in self.by_id:
                raise CatalogError(f"duplicate product id {p.id!r}")
            self.by_id[p.id] = p
            self.category_index.setdefault(p.category, []).append(p.id)
            stats = self.aspect_value_index.setdefault(p.category, {})
            post = self._postings.setdefault(p.category, {})
            has = self._has_aspect.setdefault(p.category, {})
            for k, v in p.aspects.items():
                counts = stats.setdefault(k, {})
                counts[v] = counts.get(v, 0) + 1
                post.setdefault(fold(k), {}).setdefault(fold(v), set()).add(p.id)
                has.setdefault(fold(k), set()).add(p.id)
        self._position = {pid: i for i, pid in enumerate(self.by_id)}

    def __len__(self) -> int:
        return len(self.products)

    def __getitem__(self, pid: str) -> Product:
        return self.by_id[pid]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Catalog):
            return NotImplemented
        return self.domain == other.domain and self.products == other.products

    @property
    def categories(self) -> list[str]:
        return list(self.category_index)

    def position(self, pid: str) -> int:
        return self._position[pid]

    def category_products(self, category: str) -> list[Product]:
        if category not in self.category_index:
            raise CatalogError(f"unknown category {category!r}")
        return [self.by_id[i] for i in self.category_index[category]]

    def ids_with_value(self, category: str, aspect: str, value: str) -> set[str]:
        return self._postings.get(category, {}).get(fold(aspect), {}).get(fold(value), set())

    def ids_with_aspect(self, category: str, aspect: str) -> set[str]:
        return self._has_aspect.get(category, {}).get(fold(aspect), set())

    def to_records(self) -> list[dict]:
        return [p.to_record() for p in self.products]


def normalize_aspect_key(raw: str, drop_keys: Iterable[str] = DEFAULT_DROP_KEYS,
                         rename_map: Mapping[str, str] | None = None):
    """Canonical aspect key, or :data:`DROP` if the aspect is on the drop list.

    Lookups against ``drop_keys`` and ``rename_map`` are case-insensitive.
    """
    if rename_map is None:
        rename_map = DEFAULT_RENAME_MAP
    key = " ".join(raw.split())
    drops = {fold(k) for k in drop_keys}
    renames = {fold(k): v for k, v in rename_map.items()}
    key = renames.get(fold(key), key)
    if fold(key) in drops:
        return DROP
    return key


def _num(x: float) -> str:
    return f"{x:g}"


def bucket_price(price: float, edges: Sequence[float] = DEFAULT_PRICE_EDGES) -> str:
    if price is None or math.isnan(price) or price < 0:
        raise ValueError(f"price must be non-negative, got {price!r}")
    for lo, hi in zip(edges, edges[1:]):
        if lo <= price < hi:
            return f"between ${_num(lo)} and ${_num(hi)}"
    if price < edges[0]:
        raise ValueError(f"price {price} is below the first bucket edge {edges[0]}")
    return f"higher than ${_num(edges[-1])}"


def bucket_review(stars: float, ladder: Sequence[float] = DEFAULT_REVIEW_LADDER) -> str:
    if stars is None or not 0 <= stars <= 5:
        raise ValueError(f"review stars must lie in [0, 5], got {stars!r}")
    passed = [t for t in ladder if t <= stars]
    if not passed:
        return f"lower than {_num(min(ladder))} stars"
    return f"higher than {_num(max(passed))} stars"


def aspect_value_stats(catalog: Catalog, category: str) -> dict[str, dict[str, int]]:
    """Per-aspect value counts over all products of ``category``."""
    if category not in catalog.aspect_value_index:
        raise CatalogError(f"unknown category {category!r}")
    return {a: dict(vals) for a, vals in catalog.aspect_value_index[category].items()}


class MalformedRecord(ValueError):
    pass


def _parse_record(obj, drop_keys, rename_map, price_edges, review_ladder) -> Product:
    if not isinstance(obj, dict):
        raise MalformedRecord("record is not an object")
    for name in ("id", "category", "title"):
        if not isinstance(obj.get(name), str) or not obj[name].strip():
            raise MalformedRecord(f"missing or empty field {name!r}")
    raw_aspects = obj.get("aspects", {})
    if not isinstance(raw_aspects, dict):
        raise MalformedRecord("'aspects' is not a map")

    aspects: OrderedDict[str, str] = OrderedDict()
    seen: set[str] = set()
    for raw_key, raw_val in raw_aspects.items():
        if not isinstance(raw_key, str) or not isinstance(raw_val, str):
            raise MalformedRecord(f"aspect {raw_key!r} is not a string pair")
        if not raw_key.strip() or not raw_val.strip():
            continue
        key = normalize_aspect_key(raw_key, drop_keys, rename_map)
        if key is DROP or fold(key) in seen:
            continue
        value = " ".join(raw_val.split())
        if fold(key) == PRICE_KEY and not _PRICE_RE.match(value):
            continue
        if fold(key) == REVIEW_KEY and not _REVIEW_RE.match(value):
            continue
        if fold(key) in RESERVED_KEYS:
            key = fold(key)
        seen.add(fold(key))
        aspects[key] = value

    for name, key, fn, arg in (("price", PRICE_KEY, bucket_price, price_edges),
                               ("review", REVIEW_KEY, bucket_review, review_ladder)):
        raw = obj.get(name)
        if raw is None:
            continue
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise MalformedRecord(f"{name!r} is not a number")
        try:
            aspects[key] = fn(float(raw), arg)
        except ValueError as e:
            raise MalformedRecord(str(e)) from None

    return Product(id=obj["id"].strip(), category=" ".join(obj["category"].split()),
                   title=" ".join(obj["title"].split()), aspects=aspects)


def _canonicalize_values(products: list[Product]) -> list[Product]:
    # one spelling per (category, aspect, folded value): first seen wins
    spelling: dict[tuple[str, str, str], str] = {}
    out = []
    for p in products:
        changed = False
        aspects = OrderedDict()
        for k, v in p.aspects.items():
            canon = spelling.setdefault((p.category, fold(k), fold(v)), v)
            changed |= canon != v
            aspects[k] = canon
        out.append(Product(p.id, p.category, p.title, aspects) if changed else p)
    return out


def catalog_from_records(records: Iterable, domain: str, drop_keys: Iterable[str] = DEFAULT_DROP_KEYS,
                         rename_map: Mapping[str, str] | None = None,
                         price_edges: Sequence[float] = DEFAULT_PRICE_EDGES,
                         review_ladder: Sequence[float] = DEFAULT_REVIEW_LADDER,
                         source: str = "<records>") -> Catalog:
    """Normalize raw product records into a :class:`Catalog`.

    ``records`` yields dicts or raw JSON lines. Malformed records are skipped
    and counted in ``catalog.report``; products with fewer than two features
    (price and customer review excluded) are discarded. Raises
    :class:`CatalogError` if nothing survives.
    """
    report = LoadReport()
    products: list[Product] = []
    ids: set[str] = set()
    for lineno, rec in enumerate(records, 1):
        if isinstance(rec, str) and not rec.strip():
            continue
        try:
            obj = json.loads(rec) if isinstance(rec, str) else rec
            product = _parse_record(obj, drop_keys, rename_map, price_edges, review_ladder)
            if product.id in ids:
                raise MalformedRecord(f"duplicate id {product.id!r}")
        except (json.JSONDecodeError, MalformedRecord) as e:
            report.skipped += 1
            report.errors.append(f"{source}:{lineno}: {e}")
            logger.warning("skipping %s:%d: %s", source, lineno, e)
            continue
        ids.add(product.id)
        if product.feature_count() < MIN_FEATURES:
            report.discarded += 1
            continue
        products.append(product)

    if not products:
        raise CatalogError(f"no products in {source} after filtering")
    return Catalog(domain, _canonicalize_values(products), report)


def load_catalog(path, domain: str = "", drop_keys: Iterable[str] = DEFAULT_DROP_KEYS,
                 rename_map: Mapping[str, str] | None = None, **kwargs) -> Catalog:
    """Load a line-delimited JSON product file (see :func:`catalog_from_records`)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise CatalogError(f"cannot read catalog {path}: {e.strerror or e}") from e
    return catalog_from_records(text.splitlines(), domain or path.stem, drop_keys, rename_map,
                                source=str(path), **kwargs)


def write_catalog(catalog: Catalog, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in catalog.to_records():
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def count_values(products: Iterable[Product], aspect: str) -> Counter:
    return Counter(v for p in products if (v := p.get(aspect)) is not None)
