"""Ranking, threshold calibration, classification/@k metrics, BM25L, cost model."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from collections import Counter

import numpy as np

from .corpus import Corpus, Topic
from .embedding import tokenize
from .errors import (
    CutoffExceedsCorpus,
    EmptyGold,
    EmptyInput,
    LengthMismatch,
    SingleClassValidation,
)

MINMAX = "minmax"
NONE = "none"

# cutoff grid for the @k tables, mirroring the reported review budgets
DEFAULT_K_GRID = (2000, 5000, 20000, 50000, 100000, 200000)


@dataclass(frozen=True)
class RankedList:
    topic_id: str
    entries: tuple[tuple[str, float], ...]  # (doc_id, score), scores non-increasing
    normalization: str = NONE

    def __post_init__(self):
        scores = [s for _, s in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("ranked scores must be non-increasing")

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class CalibratedThreshold:
    value: float
    achieved_f1: float
    # positive rule: score >= value


@dataclass(frozen=True)
class TopKConfig:
    recall_target: float = 0.8
    k_cutoff: int | None = None

    def __post_init__(self):
        if not 0.0 < self.recall_target <= 1.0:
            raise ValueError(f"recall_target must be in (0, 1], got {self.recall_target}")


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    averaging: str = "binary"
    at_k: tuple[tuple[int, float, float, float], ...] = ()


@dataclass(frozen=True)
class CostReport:
    corpus_size: int
    cutoff: int
    unit_cost_low: float
    unit_cost_high: float
    full_cost_low: float
    full_cost_high: float
    reduced_cost_low: float
    reduced_cost_high: float
    reduction_percent: float

    @property
    def reduction_percent_range(self) -> tuple[float, float]:
        # unit cost cancels out of the ratio, so the range is degenerate
        return (self.reduction_percent, self.reduction_percent)


def minmax_normalize(scores) -> np.ndarray:
    """(s - min) / (max - min); a constant input maps to all 0.5 with a warning."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("cannot normalize an empty score list")
    lo, hi = arr.min(), arr.max()
    if lo == hi:
        warnings.warn("all scores identical; min-max normalization maps them to 0.5", stacklevel=2)
        return np.full(arr.shape, 0.5)
    return (arr - lo) / (hi - lo)


def rank_documents(topic_id: str, scores: dict[str, float], normalization: str = NONE) -> RankedList:
    """Sort by score descending, doc_id ascending on ties; input order irrelevant."""
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return RankedList(topic_id=topic_id, entries=tuple(ordered), normalization=normalization)


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def calibrate_threshold(val_scores, val_labels) -> CalibratedThreshold:
    """Sweep unique scores plus +inf for the F1-maximizing ``score >= t`` rule.

    Ties prefer the smallest threshold (maximizing recall).
    """
    scores = np.asarray(list(val_scores), dtype=np.float64)
    labels = np.asarray(list(val_labels), dtype=bool)
    if scores.shape != labels.shape:
        raise LengthMismatch(f"{scores.shape[0]} scores vs {labels.shape[0]} labels")
    if scores.size == 0 or labels.all() or not labels.any():
        raise SingleClassValidation("threshold calibration needs both classes in the validation set")
    best_t, best_f1 = math.inf, 0.0
    candidates = sorted(set(float(s) for s in scores)) + [math.inf]
    for t in candidates:
        pred = scores >= t
        tp = int(np.sum(pred & labels))
        fp = int(np.sum(pred & ~labels))
        fn = int(np.sum(~pred & labels))
        f1 = _f1(tp, fp, fn)
        if f1 > best_f1 or (f1 == best_f1 and t < best_t):
            best_t, best_f1 = t, f1
    return CalibratedThreshold(value=best_t, achieved_f1=best_f1)


def classify(scores, threshold: float) -> list[bool]:
    """Positive iff score >= threshold (the boundary counts as positive)."""
    return [float(s) >= threshold for s in scores]


def classification_metrics(pred, gold, averaging: str = "binary") -> MetricsReport:
    pred = [bool(p) for p in pred]
    gold = [bool(g) for g in gold]
    if len(pred) != len(gold):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(gold)} gold labels")
    if averaging not in ("binary", "macro"):
        raise ValueError(f"averaging must be binary or macro, got {averaging!r}")

    def prf(positive: bool):
        tp = sum(1 for p, g in zip(pred, gold) if p == positive and g == positive)
        fp = sum(1 for p, g in zip(pred, gold) if p == positive and g != positive)
        fn = sum(1 for p, g in zip(pred, gold) if p != positive and g == positive)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return precision, recall, f1

    if averaging == "binary":
        precision, recall, f1 = prf(True)
    else:
        per_class = [prf(True), prf(False)]
        precision = sum(c[0] for c in per_class) / 2
        recall = sum(c[1] for c in per_class) / 2
        f1 = sum(c[2] for c in per_class) / 2
    return MetricsReport(precision=precision, recall=recall, f1=f1, averaging=averaging)


def _ranked_ids(ranked) -> list[str]:
    return ranked.doc_ids() if isinstance(ranked, RankedList) else list(ranked)


def recall_at_k(ranked, gold_relevant_set, k: int) -> float:
    """|top-k intersect gold| / |gold|."""
    gold = set(gold_relevant_set)
    if not gold:
        raise EmptyGold("recall@k needs a nonempty gold set")
    if k <= 0:
        return 0.0
    ids = _ranked_ids(ranked)
    return len(set(ids[:k]) & gold) / len(gold)


def metrics_at_k(ranked, gold_relevant_set, k: int) -> tuple[float, float, float]:
    """(P, R, F1) treating the top k as predicted-positive."""
    gold = set(gold_relevant_set)
    if not gold:
        raise EmptyGold("metrics@k needs a nonempty gold set")
    if k <= 0:
        return (0.0, 0.0, 0.0)
    ids = _ranked_ids(ranked)
    hits = len(set(ids[:k]) & gold)
    precision = hits / k
    recall = hits / len(gold)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return (precision, recall, f1)


def at_k_table(ranked, gold_relevant_set, ks=DEFAULT_K_GRID) -> tuple[tuple[int, float, float, float], ...]:
    return tuple((k, *metrics_at_k(ranked, gold_relevant_set, k)) for k in ks)


def select_cutoff(ranked_validation, gold_validation, config: TopKConfig) -> int:
    """Smallest K reaching the recall target; the list length, flagged, if unattainable."""
    if config.k_cutoff is not None:
        return config.k_cutoff
    gold = set(gold_validation)
    if not gold:
        raise EmptyGold("cutoff selection needs a nonempty gold set")
    ids = _ranked_ids(ranked_validation)
    hits = 0
    for position, doc_id in enumerate(ids, start=1):
        if doc_id in gold:
            hits += 1
            if hits / len(gold) >= config.recall_target - 1e-12:
                return position
    warnings.warn(
        f"recall target {config.recall_target} unattainable on the validation ranking; "
        f"returning the full list length {len(ids)}",
        stacklevel=2,
    )
    return len(ids)


# -- BM25L baseline ------------------------------------------------------------


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75
    delta: float = 0.5


class Bm25LIndex:
    """Inverted index scoring documents against a topic statement.

    score(Q, D) = sum over query occurrences t with c(t, D) > 0 of
    IDF(t) * (k1 + 1) * (c' + delta) / (k1 + c' + delta), where
    c' = c(t, D) / (1 - b + b * |D| / avgdl) and
    IDF(t) = ln((N + 1) / (df_t + 0.5)).
    """

    def __init__(self, corpus: Corpus, params: Bm25Params = Bm25Params()):
        self.params = params
        self.doc_ids = list(corpus.documents)
        self._counts: dict[str, Counter] = {}
        self._lengths: dict[str, int] = {}
        self._postings: dict[str, list[str]] = {}
        for doc_id, doc in corpus.documents.items():
            tokens = tokenize(doc.text)
            counts = Counter(tokens)
            self._counts[doc_id] = counts
            self._lengths[doc_id] = len(tokens)
            for term in counts:
                self._postings.setdefault(term, []).append(doc_id)
        self.num_docs = len(self.doc_ids)
        total = sum(self._lengths.values())
        self.avgdl = total / self.num_docs if self.num_docs and total else 1.0

    def _idf(self, term: str) -> float:
        df = len(self._postings.get(term, ()))
        return math.log((self.num_docs + 1) / (df + 0.5))

    def scores(self, query_text: str) -> dict[str, float]:
        """Score every document; query terms are a multiset (duplicates add)."""
        p = self.params
        out = {doc_id: 0.0 for doc_id in self.doc_ids}
        for term in tokenize(query_text):
            idf = self._idf(term)
            for doc_id in self._postings.get(term, ()):
                c = self._counts[doc_id][term]
                c_norm = c / (1.0 - p.b + p.b * self._lengths[doc_id] / self.avgdl)
                out[doc_id] += idf * (p.k1 + 1.0) * (c_norm + p.delta) / (p.k1 + c_norm + p.delta)
        return out

    def rank(self, topic: Topic) -> RankedList:
        return rank_documents(topic.topic_id, self.scores(topic.statement))


def bm25l_rank(topic: Topic, corpus: Corpus, params: Bm25Params = Bm25Params()) -> RankedList:
    """One-shot ranking; build a Bm25LIndex directly to score many topics."""
    if len(corpus) == 0:
        raise EmptyInput("cannot rank an empty corpus")
    return Bm25LIndex(corpus, params).rank(topic)


# -- review-cost model ---------------------------------------------------------


def cost_savings(corpus_size: int, cutoff: int, unit_low: float, unit_high: float) -> CostReport:
    """Review cost of the full corpus vs the top-``cutoff`` documents only."""
    if corpus_size <= 0:
        raise ValueError(f"corpus_size must be positive, got {corpus_size}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be non-negative, got {cutoff}")
    if cutoff > corpus_size:
        raise CutoffExceedsCorpus(f"cutoff {cutoff} exceeds corpus size {corpus_size}")
    if unit_low > unit_high:
        raise ValueError(f"unit_low {unit_low} exceeds unit_high {unit_high}")
    # integer multiply before divide keeps round ratios exact in float64
    reduction = 100.0 * (corpus_size - cutoff) / corpus_size
    return CostReport(
        corpus_size=corpus_size,
        cutoff=cutoff,
        unit_cost_low=unit_low,
        unit_cost_high=unit_high,
        full_cost_low=corpus_size * unit_low,
        full_cost_high=corpus_size * unit_high,
        reduced_cost_low=cutoff * unit_low,
        reduced_cost_high=cutoff * unit_high,
        reduction_percent=reduction,
    )
