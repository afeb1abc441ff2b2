"""Word translation and sentence retrieval scoring.

Retrieval is plain cosine nearest neighbour. Ties in score are broken by the
candidate's surface form (words) or index (sentences), so rankings are fully
deterministic. Queries that cannot be embedded count as misses.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from lexalign.dictionary import as_lang, normalize
from lexalign.errors import LexalignError, ParseError
from lexalign.trainer import EmbeddingTable


@dataclass(frozen=True)
class TranslationTestSet:
    queries: tuple  # of (source word, frozenset of acceptable targets)
    direction: tuple

    def __post_init__(self):
        object.__setattr__(self, "direction", tuple(as_lang(x) for x in self.direction))
        queries = tuple((src, frozenset(tgts)) for src, tgts in self.queries)
        for src, tgts in queries:
            if not tgts:
                raise ValueError(f"query {src!r} has no acceptable target")
        object.__setattr__(self, "queries", queries)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], direction) -> "TranslationTestSet":
        grouped: dict[str, set] = {}
        for src, tgt in pairs:
            grouped.setdefault(src, set()).add(tgt)
        return cls(tuple(grouped.items()), direction)

    def __len__(self):
        return len(self.queries)

    def pairs(self) -> set:
        return {(s, t) for s, tgts in self.queries for t in tgts}


def load_test_set(path, src_lang, tgt_lang) -> TranslationTestSet:
    """Read a two-column TSV lexicon (source_word, target_word)."""
    path = Path(path)
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.rstrip("\n").split("\t")
            if len(cols) != 2:
                raise ParseError(path, lineno, "expected two tab-separated columns")
            rows.append((normalize(cols[0].strip()), normalize(cols[1].strip())))
    return TranslationTestSet.from_pairs(rows, (src_lang, tgt_lang))


class RankedRetrieval(NamedTuple):
    query: object
    ranked: list  # of (candidate, score), best first

    def candidates(self) -> list:
        return [c for c, _ in self.ranked]


@dataclass
class EvalMetrics:
    p_at: dict = field(default_factory=dict)
    n_queries: int = 0
    n_skipped: int = 0

    def to_dict(self) -> dict:
        return {
            "p_at": {str(k): v for k, v in sorted(self.p_at.items())},
            "n_queries": self.n_queries,
            "n_skipped": self.n_skipped,
        }

    def to_json(self, **extra) -> str:
        data = self.to_dict()
        data.update(extra)
        return json.dumps(data, indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping) -> "EvalMetrics":
        return cls({int(k): float(v) for k, v in data["p_at"].items()},
                   int(data["n_queries"]), int(data["n_skipped"]))


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    # divide by the max-abs entry first so tiny or huge rows don't under/overflow when squared
    mat = np.asarray(mat, dtype=float)
    peak = np.abs(mat).max(axis=1, keepdims=True) if mat.size else np.zeros((len(mat), 1))
    scaled = np.divide(mat, peak, out=np.zeros_like(mat), where=peak > 0)
    norms = np.linalg.norm(scaled, axis=1, keepdims=True)
    return np.divide(scaled, norms, out=np.zeros_like(mat), where=norms > 0)


def _top_k(scores: np.ndarray, k: int, tiebreak: np.ndarray) -> np.ndarray:
    """Indices of the ``k`` best scores, ordered by (score desc, tiebreak asc)."""
    n = scores.shape[0]
    k = min(k, n)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k < n:
        kth = np.partition(scores, n - k)[n - k]
        cand = np.flatnonzero(scores >= kth)
    else:
        cand = np.arange(n)
    order = np.lexsort((tiebreak[cand], -scores[cand]))
    return cand[order][:k]


class _TargetIndex:
    def __init__(self, table: EmbeddingTable):
        self.table = table
        self.unit = _unit_rows(table.input_vectors)
        words = np.array(table.words, dtype=object)
        rank = np.empty(len(words), dtype=np.int64)
        rank[np.argsort(words, kind="stable")] = np.arange(len(words))
        self.lex_rank = rank

    def search(self, vector: np.ndarray, k: int) -> list:
        scores = self.unit @ _unit_rows(vector[None, :])[0]
        top = _top_k(scores, k, self.lex_rank)
        return [(self.table.words[i], float(scores[i])) for i in top]


def word_translate(query: str, src: EmbeddingTable, tgt: EmbeddingTable, k: int,
                   index: _TargetIndex | None = None) -> RankedRetrieval | None:
    """The ``k`` target words closest in cosine to ``query``; None if ``query`` is OOV."""
    if query not in src:
        return None
    if index is None:
        index = _TargetIndex(tgt)
    return RankedRetrieval(query, index.search(src[query], k))


def precision_at_k(results: Mapping[str, RankedRetrieval | None], gold: TranslationTestSet,
                   k: int) -> EvalMetrics:
    """Fraction of gold queries with an acceptable target in the top ``k``.

    Queries missing from ``results`` (or mapped to None) count as wrong.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not gold.queries:
        raise ValueError("empty test set")
    correct = skipped = 0
    for src, targets in gold.queries:
        res = results.get(src)
        if res is None:
            skipped += 1
            continue
        if any(c in targets for c, _ in res.ranked[:k]):
            correct += 1
    return EvalMetrics({k: correct / len(gold.queries)}, len(gold.queries), skipped)


def evaluate_word_translation(gold: TranslationTestSet, src: EmbeddingTable, tgt: EmbeddingTable,
                              ks: Sequence[int] = (1, 5)) -> EvalMetrics:
    if not ks or min(ks) < 1:
        raise ValueError("k must be >= 1")
    index = _TargetIndex(tgt)
    depth = max(ks)
    results = {src_word: word_translate(src_word, src, tgt, depth, index)
               for src_word, _ in gold.queries}
    metrics = EvalMetrics(n_queries=len(gold.queries))
    for k in sorted(set(ks)):
        m = precision_at_k(results, gold, k)
        metrics.p_at[k] = m.p_at[k]
        metrics.n_skipped = m.n_skipped
    return metrics


@dataclass(frozen=True)
class IdfStats:
    n_docs: int
    df: Mapping[str, int]

    def idf(self, token: str) -> float:
        return math.log(self.n_docs / (1 + self.df.get(token, 0)))


def compute_idf(sentences: Iterable[Sequence[str]]) -> IdfStats:
    df: Counter = Counter()
    n = 0
    for sent in sentences:
        n += 1
        df.update(set(sent))
    return IdfStats(n, dict(df))


def tfidf_sentence_embed(sentence: Sequence[str], table: EmbeddingTable, idf: IdfStats) -> np.ndarray:
    """L2-normalized tf-idf weighted sum of the in-vocabulary token vectors."""
    vec = np.zeros(table.dim)
    for tok, tf in Counter(sentence).items():
        if tok in table:
            vec += tf * idf.idf(tok) * table[tok]
    if not np.isfinite(vec).all():
        return np.zeros(table.dim)
    return _unit_rows(vec[None, :])[0]


def sentence_retrieval_eval(queries: Sequence[Sequence[str]], candidates: Sequence[Sequence[str]],
                            gold: Mapping[int, int] | Sequence[int],
                            tables: tuple[EmbeddingTable, EmbeddingTable],
                            idfs: tuple[IdfStats, IdfStats] | None = None,
                            ks: Sequence[int] = (1, 5)) -> EvalMetrics:
    """Retrieve, for each query sentence, the candidate sentence it translates.

    ``gold`` maps query index to candidate index. When ``idfs`` is omitted
    each side's idf is computed on its own sentence list. A query whose
    vector is zero is scored as a miss and counted in ``n_skipped``.
    """
    if not ks or min(ks) < 1:
        raise ValueError("k must be >= 1")
    if not isinstance(gold, Mapping):
        gold = dict(enumerate(gold))
    n_q, n_c = len(queries), len(candidates)
    for qi, ci in gold.items():
        if not 0 <= qi < n_q or not 0 <= ci < n_c:
            raise LexalignError(f"gold entry {qi} -> {ci} out of range ({n_q} queries, {n_c} candidates)")
    if len(gold) != n_q:
        raise LexalignError("gold must map every query to a candidate")
    src, tgt = tables
    if idfs is None:
        idfs = (compute_idf(queries), compute_idf(candidates))
    Q = np.array([tfidf_sentence_embed(s, src, idfs[0]) for s in queries]).reshape(n_q, src.dim)
    C = np.array([tfidf_sentence_embed(s, tgt, idfs[1]) for s in candidates]).reshape(n_c, tgt.dim)
    depth = max(ks)
    tiebreak = np.arange(n_c)
    correct = Counter()
    skipped = 0
    for qi in range(n_q):
        if not Q[qi].any():
            skipped += 1
            continue
        top = _top_k(C @ Q[qi], depth, tiebreak)
        hits = np.flatnonzero(top == gold[qi])
        if hits.size:
            for k in ks:
                if hits[0] < k:
                    correct[k] += 1
    if n_q == 0:
        raise ValueError("no queries")
    return EvalMetrics({k: correct[k] / n_q for k in sorted(set(ks))}, n_q, skipped)


def read_sentences(path, stops=None) -> list[list[str]]:
    from lexalign.dictionary import read_corpus

    return list(read_corpus(path, stops=stops))


def read_gold_map(path) -> dict[int, int]:
    """Read a TSV of 0-based ``query_line<TAB>candidate_line`` indices."""
    path = Path(path)
    gold = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            cols = line.split("\t")
            try:
                gold[int(cols[0])] = int(cols[1])
            except (ValueError, IndexError):
                raise ParseError(path, lineno, "expected two integer columns") from None
    return gold
