"""Okapi BM25 retrieval over the documentation corpus.

The index is tiny (tens of libraries), so everything is kept in plain
dicts: term -> per-document counts, plus document lengths.  Scoring
follows the standard Okapi formulation with the +1 smoothed idf.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass

from .errors import ConfigError, EmptyCorpus, EmptyQuery, LengthMismatch
from .corpus import doc_text

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75
INDEX_FORMAT = 1

_SPLIT = re.compile(r"[^0-9a-z]+")


def analyze(text):
    """Lowercase and split on any non-alphanumeric run."""
    return [t for t in _SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class RetrievalResult:
    library_id: str
    score: float
    rank: int


class BM25Index:
    def __init__(self, doc_ids, doc_terms, k1=DEFAULT_K1, b=DEFAULT_B):
        if not doc_ids:
            raise EmptyCorpus("cannot index zero documents")
        if len(doc_ids) != len(doc_terms):
            raise LengthMismatch("doc_ids and doc_terms differ in length")
        self.doc_ids = list(doc_ids)
        self.k1 = k1
        self.b = b
        self.doc_len = [len(terms) for terms in doc_terms]
        n = len(doc_ids)
        self.avgdl = sum(self.doc_len) / n if n else 0.0
        # postings: term -> {doc index -> term frequency}
        self.postings = {}
        for idx, terms in enumerate(doc_terms):
            for term, count in Counter(terms).items():
                self.postings.setdefault(term, {})[idx] = count
        self.idf = {}
        for term, docs in self.postings.items():
            df = len(docs)
            self.idf[term] = math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    @classmethod
    def from_texts(cls, pairs, k1=DEFAULT_K1, b=DEFAULT_B):
        """Build from ``[(library_id, text), ...]``."""
        ids = [p[0] for p in pairs]
        terms = [analyze(p[1]) for p in pairs]
        return cls(ids, terms, k1=k1, b=b)

    def score(self, query_terms, doc_idx):
        """Okapi BM25 score of one document against analyzed terms."""
        dl = self.doc_len[doc_idx]
        norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl)
        total = 0.0
        for term in query_terms:
            docs = self.postings.get(term)
            if not docs:
                continue
            tf = docs.get(doc_idx)
            if not tf:
                continue
            total += self.idf[term] * tf * (self.k1 + 1.0) / (tf + norm)
        return total

    def retrieve(self, query, k):
        """Top-k documents for a query string.

        Sorted by descending score; equal scores break toward the
        lexicographically smaller library id so results are stable.
        """
        terms = analyze(query)
        if not terms:
            raise EmptyQuery("query has no indexable terms: %r" % query)
        scored = [
            (-self.score(terms, idx), self.doc_ids[idx])
            for idx in range(len(self.doc_ids))
        ]
        scored.sort()
        top = scored[: max(0, k)]
        return [
            RetrievalResult(library_id=lib, score=-neg, rank=i + 1)
            for i, (neg, lib) in enumerate(top)
        ]

    def to_json(self):
        return {
            "format": INDEX_FORMAT,
            "k1": self.k1,
            "b": self.b,
            "doc_ids": self.doc_ids,
            "doc_len": self.doc_len,
            "avgdl": self.avgdl,
            "postings": {
                term: sorted(docs.items()) for term, docs in self.postings.items()
            },
        }

    @classmethod
    def from_json(cls, obj):
        fmt = obj.get("format", INDEX_FORMAT)
        if fmt != INDEX_FORMAT:
            raise ConfigError("unsupported index format %r" % fmt)
        index = cls.__new__(cls)
        index.k1 = obj["k1"]
        index.b = obj["b"]
        index.doc_ids = list(obj["doc_ids"])
        index.doc_len = list(obj["doc_len"])
        index.avgdl = obj["avgdl"]
        index.postings = {
            term: {int(idx): count for idx, count in docs}
            for term, docs in obj["postings"].items()
        }
        n = len(index.doc_ids)
        index.idf = {
            term: math.log((n - len(docs) + 0.5) / (len(docs) + 0.5) + 1.0)
            for term, docs in index.postings.items()
        }
        return index

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def build_index(store, k1=DEFAULT_K1, b=DEFAULT_B, max_description_words=30):
    """Index a CorpusStore using each doc's assembled searchable text."""
    pairs = [(d.library_id, doc_text(d, max_description_words)) for d in store]
    return BM25Index.from_texts(pairs, k1=k1, b=b)


def hits_at_k(all_results, gold_ids, ks=(1, 3, 5)):
    """Percentage of queries whose gold id appears in the top k.

    ``all_results`` holds one retrieve() result list per query, aligned
    by position with ``gold_ids``.
    """
    if len(all_results) != len(gold_ids):
        raise LengthMismatch(
            "%d result lists vs %d gold ids" % (len(all_results), len(gold_ids))
        )
    if not gold_ids:
        return {k: 0.0 for k in ks}
    out = {}
    for k in ks:
        hit = 0
        for results, gold in zip(all_results, gold_ids):
            if any(r.library_id == gold for r in results[:k]):
                hit += 1
        out[k] = 100.0 * hit / len(gold_ids)
    return out
