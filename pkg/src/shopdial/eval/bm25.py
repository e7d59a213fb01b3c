"""From-scratch BM25 index over product documents.

A product's document is its title followed by every ``aspect value`` pair.
Tokens are maximal alphanumeric runs, case-folded, without stemming; a
decimal point between digits does not split a token, so "4.5" stays whole.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from ..catalog import Catalog, Product, fold
from .query import StructuredQuery

_TOKEN = re.compile(r"[^\W_]+(?:(?<=\d)\.\d+)*")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


def product_document(product: Product) -> str:
    return " ".join([product.title] + [f"{a} {v}" for a, v in product.aspects.items()])


DEFAULT_VALUE_WEIGHT = 2


def query_text(query: StructuredQuery, value_weight: int = DEFAULT_VALUE_WEIGHT) -> str:
    """Positive query text: category, wanted aspect-value pairs, optional aspect names.

    Each wanted value is repeated ``value_weight`` times, since the aspect
    names recur in nearly every product of a category and carry little
    signal. Unwanted pairs are left out; :func:`rank` demotes products
    carrying them.
    """
    if value_weight < 1:
        raise ValueError(f"value_weight must be at least 1, got {value_weight}")
    parts = [query.category]
    parts += [" ".join([a] + [v] * value_weight) for a, v in query.wanted]
    parts += [a for a, _ in query.optional]
    return " ".join(parts)


@dataclass(frozen=True)
class RankedResult:
    ids: tuple[str, ...]
    scores: tuple[float, ...]

    def rank_of(self, gold) -> int | None:
        """1-based rank of the first relevant product, or None if none was retrieved.

        ``gold`` is one product id or a collection of equally relevant ids.
        """
        relevant = {gold} if isinstance(gold, str) else set(gold)
        for i, pid in enumerate(self.ids, 1):
            if pid in relevant:
                return i
        return None

    def __len__(self) -> int:
        return len(self.ids)


class BM25Index:
    """Inverted index with document frequencies and lengths. Immutable once built."""

    def __init__(self, ids: Sequence[str], documents: Sequence[str], k1: float = 1.2, b: float = 0.75,
                 products: Sequence[Product] | None = None):
        if not ids:
            raise ValueError("cannot index an empty catalog")
        if len(ids) != len(documents):
            raise ValueError("ids and documents differ in length")
        self.k1 = k1
        self.b = b
        self.ids = tuple(ids)
        self.products = tuple(products) if products is not None else None
        self.lengths: list[int] = []
        self.postings: dict[str, list[tuple[int, int]]] = {}
        for doc_no, doc in enumerate(documents):
            toks = tokenize(doc)
            self.lengths.append(len(toks))
            for term, tf in Counter(toks).items():
                self.postings.setdefault(term, []).append((doc_no, tf))
        self.n_docs = len(self.ids)
        self.avgdl = sum(self.lengths) / self.n_docs
        self.df = {t: len(p) for t, p in self.postings.items()}

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log((self.n_docs - df + 0.5) / (df + 0.5) + 1.0)

    def scores(self, terms: Sequence[str]) -> dict[int, float]:
        acc: dict[int, float] = {}
        k1, b, avgdl = self.k1, self.b, self.avgdl
        for term in terms:
            postings = self.postings.get(term)
            if not postings:
                continue
            idf = self.idf(term)
            for doc_no, tf in postings:
                norm = k1 * (1.0 - b + b * self.lengths[doc_no] / avgdl)
                acc[doc_no] = acc.get(doc_no, 0.0) + idf * tf * (k1 + 1.0) / (tf + norm)
        return acc


def index_products(catalog: Catalog | Sequence[Product], k1: float = 1.2, b: float = 0.75) -> BM25Index:
    products = list(catalog.products if isinstance(catalog, Catalog) else catalog)
    if not products:
        raise ValueError("cannot index an empty catalog")
    return BM25Index([p.id for p in products], [product_document(p) for p in products], k1, b, products)


def _matches_unwanted(product: Product, unwanted) -> bool:
    return any(product.has_value(a, v) for a, v in unwanted)


def rank(index: BM25Index, query: str | StructuredQuery, k: int = 100,
         value_weight: int = DEFAULT_VALUE_WEIGHT) -> RankedResult:
    """Top-``k`` products with a positive BM25 score, best first, ties by product id.

    For a :class:`StructuredQuery`, products carrying any unwanted pair are
    placed after every product that does not.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    unwanted = ()
    if isinstance(query, StructuredQuery):
        unwanted = tuple((fold(a), fold(v)) for a, v in query.unwanted)
        text = query_text(query, value_weight)
    else:
        text = query
    acc = index.scores(tokenize(text))
    demoted = set()
    if unwanted and index.products is not None:
        demoted = {d for d in acc if _matches_unwanted(index.products[d], unwanted)}
    order = sorted(acc, key=lambda d: (d in demoted, -acc[d], index.ids[d]))[:k]
    return RankedResult(tuple(index.ids[d] for d in order), tuple(acc[d] for d in order))
