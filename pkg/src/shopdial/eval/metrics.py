"""Ranking metrics (MRR, Hit@k) and query-string overlap metrics (ROUGE, exact-F1)."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Collection, Sequence

from .bm25 import RankedResult
from .query import ITEM_SEP

DEFAULT_KS = (1, 10, 100)


def _f1(overlap: int, n_pred: int, n_ref: int) -> float:
    if n_pred == 0 and n_ref == 0:
        return 1.0
    if overlap == 0:
        return 0.0
    p, r = overlap / n_pred, overlap / n_ref
    return 2 * p * r / (p + r)


def _ngrams(toks: Sequence[str], n: int) -> Counter:
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def rouge_n(pred: str, ref: str, n: int) -> float:
    """ROUGE-N F1 over whitespace tokens, clipped n-gram counts."""
    p, r = _ngrams(pred.split(), n), _ngrams(ref.split(), n)
    return _f1(sum((p & r).values()), sum(p.values()), sum(r.values()))


def _lcs(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(pred: str, ref: str) -> float:
    """ROUGE-L F1 (longest common subsequence, beta = 1) over whitespace tokens."""
    a, b = pred.split(), ref.split()
    return _f1(_lcs(a, b), len(a), len(b))


def query_items(text: str) -> set[str]:
    return {" ".join(item.split()).casefold() for item in text.split(ITEM_SEP.strip()) if item.strip()}


def exact_f1(pred: str, ref: str) -> float:
    """F1 over exactly matching query items (category and features, split on ';')."""
    p, r = query_items(pred), query_items(ref)
    return _f1(len(p & r), len(p), len(r))


@dataclass
class MetricReport:
    n_examples: int
    mrr: float | None = None
    hit_at: dict[int, float] = field(default_factory=dict)
    rouge_1: float | None = None
    rouge_2: float | None = None
    rouge_l: float | None = None
    exact_f1: float | None = None

    def to_record(self) -> dict:
        return {"n_examples": self.n_examples, "mrr": self.mrr,
                "hit_at": {str(k): v for k, v in self.hit_at.items()},
                "rouge_1": self.rouge_1, "rouge_2": self.rouge_2, "rouge_l": self.rouge_l,
                "exact_f1": self.exact_f1}

    def table(self) -> str:
        rows = [("examples", str(self.n_examples))]
        for name in ("exact_f1", "rouge_1", "rouge_2", "rouge_l", "mrr"):
            value = getattr(self, name)
            if value is not None:
                rows.append((name, f"{value:.3f}"))
        rows += [(f"hit@{k}", f"{v:.3f}") for k, v in self.hit_at.items()]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def metrics(rankings: Sequence[tuple[RankedResult, str | Collection[str]]] = (), ks: Sequence[int] = DEFAULT_KS,
            queries: Sequence[tuple[str, str]] = ()) -> MetricReport:
    """Aggregate metrics.

    ``rankings`` pairs a ranked result with the gold product id (or a set of
    equally relevant ids, where the first one retrieved counts); ``queries``
    pairs a predicted query string with the gold one. Either may be empty,
    but not both.
    """
    if not rankings and not queries:
        raise ValueError("nothing to evaluate")
    if rankings and queries and len(rankings) != len(queries):
        raise ValueError("rankings and queries differ in length")
    report = MetricReport(n_examples=max(len(rankings), len(queries)))
    if rankings:
        ranks = [result.rank_of(gold) for result, gold in rankings]
        report.mrr = sum(1.0 / r for r in ranks if r is not None) / len(ranks)
        for k in sorted(ks):
            if k <= 0:
                raise ValueError(f"k must be positive, got {k}")
            report.hit_at[k] = sum(1 for r in ranks if r is not None and r <= k) / len(ranks)
    if queries:
        n = len(queries)
        report.rouge_1 = sum(rouge_n(p, g, 1) for p, g in queries) / n
        report.rouge_2 = sum(rouge_n(p, g, 2) for p, g in queries) / n
        report.rouge_l = sum(rouge_l(p, g) for p, g in queries) / n
        report.exact_f1 = sum(exact_f1(p, g) for p, g in queries) / n
    return report
