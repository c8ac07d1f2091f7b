"""Keyword/keyphrase extraction and the similarity-linked vocabulary.

Candidates are contiguous 1-3 grams over alphanumeric tokens that do
not start or end with a stopword. Each document keeps its top-scoring
phrases (cosine against the document's own vector); phrases seen in
fewer than ``min_df`` documents are dropped, except phrases sourced
from topic statements, which always survive.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Topic
from .embedding import EmbeddingProvider, cosine, tokenize
from .errors import DimensionMismatch

DEFAULT_MIN_DF = 5
DEFAULT_TOP_M = 10
DEFAULT_SIM_THRESHOLD = 0.75

# Fixed small English stopword list (documented verbatim in the README).
STOPWORDS = frozenset(
    """
    a an and are as at be but by for from had has have he her his i if in
    into is it its me my no not of on or our she so that the their them
    they this to was we were will with you your
    """.split()
)


@dataclass(frozen=True)
class ScoredKeyword:
    phrase: str
    score: float
    source: str


@dataclass(frozen=True)
class KeywordEntry:
    document_frequency: int
    embedding: np.ndarray


@dataclass
class KeywordVocabulary:
    """Retained phrases plus the per-source selections that produced them."""

    entries: dict[str, KeywordEntry]
    doc_keywords: dict[str, tuple[str, ...]] = field(default_factory=dict)
    topic_keywords: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def phrases(self) -> list[str]:
        return sorted(self.entries)


def extract_candidates(text: str, max_n: int = 3, stopwords=STOPWORDS) -> list[str]:
    """All contiguous 1..max_n-grams, stopword-trimmed at the boundaries.

    Phrases are lowercase space-joined token runs in order of first
    occurrence; a phrase starting or ending with a stopword is skipped
    (interior stopwords are fine).
    """
    tokens = tokenize(text)
    seen: set[str] = set()
    out: list[str] = []
    for n in range(1, max_n + 1):
        for i in range(len(tokens) - n + 1):
            gram = tokens[i : i + n]
            if gram[0] in stopwords or gram[-1] in stopwords:
                continue
            phrase = " ".join(gram)
            if phrase not in seen:
                seen.add(phrase)
                out.append(phrase)
    return out


def keyword_score(phrase_vec, text_vec) -> float:
    """Cosine mapped to [0, 1]; zero vectors land on 0.5 by convention."""
    return (cosine(phrase_vec, text_vec) + 1.0) / 2.0


def score_keywords(
    doc_text: str,
    candidates: list[str],
    provider: EmbeddingProvider,
    top_m: int = DEFAULT_TOP_M,
    source: str = "",
    _embed_cache: dict | None = None,
) -> list[ScoredKeyword]:
    """Top ``top_m`` candidates by mapped cosine against the document vector.

    Ties break lexicographically on the phrase.
    """
    if provider.dimension <= 0:
        raise ValueError("provider dimension must be positive")
    cache = _embed_cache if _embed_cache is not None else {}
    doc_vec = provider.embed(doc_text)
    if not np.any(doc_vec):
        warnings.warn(f"document {source!r} embeds to the zero vector", stacklevel=2)
    scored = []
    zero_phrases = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the per-phrase convention is flagged in bulk below
        for phrase in candidates:
            vec = cache.get(phrase)
            if vec is None:
                vec = cache[phrase] = provider.embed(phrase)
            if not np.any(vec):
                zero_phrases += 1
            scored.append(ScoredKeyword(phrase=phrase, score=keyword_score(vec, doc_vec), source=source))
    if zero_phrases:
        warnings.warn("some candidate phrases embed to the zero vector and score 0.5", stacklevel=2)
    scored.sort(key=lambda kw: (-kw.score, kw.phrase))
    return scored[:top_m]


def build_vocabulary(
    corpus: Corpus,
    topics: list[Topic],
    provider: EmbeddingProvider,
    min_df: int = DEFAULT_MIN_DF,
    top_m: int = DEFAULT_TOP_M,
) -> KeywordVocabulary:
    """Union of per-document top_m keywords and all topic-statement keywords.

    document_frequency counts the documents whose text contains the
    phrase; entries below min_df are dropped unless topic-sourced. The
    result does not depend on document iteration order.
    """
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    df: dict[str, int] = {}
    doc_candidates: dict[str, list[str]] = {}
    for doc_id, doc in corpus.documents.items():
        candidates = extract_candidates(doc.text)
        doc_candidates[doc_id] = candidates
        for phrase in candidates:
            df[phrase] = df.get(phrase, 0) + 1

    embed_cache: dict[str, np.ndarray] = {}
    selected: set[str] = set()
    for doc_id, doc in corpus.documents.items():
        top = score_keywords(
            doc.text, doc_candidates[doc_id], provider, top_m=top_m,
            source=doc_id, _embed_cache=embed_cache,
        )
        selected.update(kw.phrase for kw in top)

    topic_selected: dict[str, tuple[str, ...]] = {}
    topic_sourced: set[str] = set()
    for topic in topics:
        phrases = tuple(extract_candidates(topic.statement))
        topic_selected[topic.topic_id] = phrases
        topic_sourced.update(phrases)

    retained = {p for p in selected if df.get(p, 0) >= min_df} | topic_sourced
    entries = {}
    for phrase in sorted(retained):
        vec = embed_cache.get(phrase)
        if vec is None:
            vec = provider.embed(phrase)
        entries[phrase] = KeywordEntry(document_frequency=df.get(phrase, 0), embedding=vec)

    # A document links to its best-scoring phrases among the retained
    # vocabulary; re-ranking after the df filter keeps documents connected
    # even when their most distinctive phrases were too rare to survive.
    doc_keywords = {}
    for doc_id, doc in corpus.documents.items():
        in_vocab = [p for p in doc_candidates[doc_id] if p in retained]
        top = score_keywords(
            doc.text, in_vocab, provider, top_m=top_m, source=doc_id, _embed_cache=embed_cache
        )
        doc_keywords[doc_id] = tuple(kw.phrase for kw in top)
    return KeywordVocabulary(entries=entries, doc_keywords=doc_keywords, topic_keywords=topic_selected)


def similarity_links(vocab: KeywordVocabulary, threshold: float = DEFAULT_SIM_THRESHOLD) -> list[tuple[str, str]]:
    """Undirected keyword pairs with cosine >= threshold, each stored once (a < b)."""
    phrases = vocab.phrases()
    if len(phrases) < 2:
        return []
    dims = {vocab.entries[p].embedding.shape for p in phrases}
    if len(dims) != 1:
        raise DimensionMismatch(f"vocabulary embeddings have mixed shapes {sorted(dims)}")
    matrix = np.stack([vocab.entries[p].embedding for p in phrases]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)  # zero vectors keep cosine 0 with everything
    unit = matrix / safe[:, None]
    links: list[tuple[str, str]] = []
    chunk = 1024
    for start in range(0, len(phrases), chunk):
        stop = min(start + chunk, len(phrases))
        sims = unit[start:stop] @ unit.T
        for i in range(start, stop):
            js = np.nonzero(sims[i - start] >= threshold)[0]
            for j in js:
                if j > i:
                    links.append((phrases[i], phrases[int(j)]))
    return links
