from .bm25 import BM25Index, RankedResult, index_products, product_document, query_text, rank, tokenize
from .metrics import MetricReport, exact_f1, metrics, rouge_l, rouge_n
from .query import (ExtractionError, ReferenceExtractor, StructuredQuery, baseline_query, extract_query,
                    gold_query, preference_query)

__all__ = [
    "BM25Index", "RankedResult", "index_products", "product_document", "query_text", "rank", "tokenize",
    "MetricReport", "exact_f1", "metrics", "rouge_l", "rouge_n",
    "ExtractionError", "ReferenceExtractor", "StructuredQuery", "baseline_query", "extract_query",
    "gold_query", "preference_query",
]
