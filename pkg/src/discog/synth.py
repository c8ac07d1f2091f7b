"""Synthetic email corpora with planted topic structure.

Each topic owns a private vocabulary; documents relevant to a topic
draw a fixed fraction of their tokens from it, the rest from a shared
background vocabulary. Topic statements quote part of the topic
vocabulary, so keyword nodes connect relevant documents to their topic
without any labels leaking. Useful for end-to-end tests and demos
where the real review data cannot ship.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, EmailDocument, Judgment, JudgmentOrigin, Topic

_FILLER = ["the", "of", "and", "to", "a", "in", "for", "on"]


@dataclass(frozen=True)
class SyntheticSpec:
    num_docs: int = 500
    num_topics: int = 3
    relevant_per_topic: int = 50
    doc_tokens: int = 40
    planted_rate: float = 0.2
    seed_positives: int = 20
    seed_negatives: int = 40
    background_vocab: int = 100
    topic_vocab: int = 12
    statement_terms: int = 12
    participants: int = 40
    # fraction of seed negatives drawn from other topics' relevant docs;
    # confusable negatives are what make the seed set informative
    cross_topic_negatives: float = 0.5
    rng_seed: int = 13


@dataclass
class SyntheticData:
    corpus: Corpus
    topics: list[Topic]
    seed_judgments: list[Judgment]
    qrels_judgments: list[Judgment]
    relevant_docs: dict[str, set[str]]  # topic_id -> ground-truth relevant doc ids


def _words(prefix: str, count: int) -> list[str]:
    return [f"{prefix}{i:03d}" for i in range(count)]


def generate(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticData:
    rng = np.random.default_rng(spec.rng_seed)
    if spec.num_topics * spec.relevant_per_topic > spec.num_docs:
        raise ValueError("more relevant documents requested than documents exist")

    background = _words("market", spec.background_vocab)
    topic_words = {
        f"{400 + t + 1}": _words(f"matter{t}x", spec.topic_vocab) for t in range(spec.num_topics)
    }
    topic_ids = list(topic_words)
    people = [f"person{i:03d}@example.com" for i in range(spec.participants)]

    assignment: list[str | None] = []
    for topic_id in topic_ids:
        assignment.extend([topic_id] * spec.relevant_per_topic)
    assignment.extend([None] * (spec.num_docs - len(assignment)))
    rng.shuffle(assignment)

    documents: dict[str, EmailDocument] = {}
    relevant_docs: dict[str, set[str]] = {t: set() for t in topic_ids}
    planted = int(round(spec.planted_rate * spec.doc_tokens))
    for i, topic_id in enumerate(assignment):
        doc_id = f"doc{i:05d}"
        n_background = spec.doc_tokens - (planted if topic_id else 0)
        tokens = [background[int(k)] for k in rng.integers(0, len(background), size=n_background)]
        if topic_id:
            vocab = topic_words[topic_id]
            tokens.extend(vocab[int(k)] for k in rng.integers(0, len(vocab), size=planted))
            relevant_docs[topic_id].add(doc_id)
        rng.shuffle(tokens)
        # sprinkle stopwords so boundary trimming is exercised
        for pos in rng.integers(0, len(tokens), size=max(1, len(tokens) // 10)):
            tokens.insert(int(pos), _FILLER[int(rng.integers(0, len(_FILLER)))])
        subject = " ".join(tokens[:4])
        body = " ".join(tokens[4:])
        sender = people[int(rng.integers(0, len(people)))]
        recipients = tuple(
            people[int(k)] for k in rng.choice(len(people), size=int(rng.integers(1, 3)), replace=False)
        )
        documents[doc_id] = EmailDocument(
            doc_id=doc_id, subject=subject, body=body, sender=sender, recipients=recipients,
            date=f"2001-0{1 + i % 9}-{1 + i % 27:02d}T09:00:00",
        )

    participants = sorted({d.sender for d in documents.values()} | {r for d in documents.values() for r in d.recipients})
    corpus = Corpus(documents=documents, participants=tuple(participants))

    topics = []
    for topic_id in topic_ids:
        # mostly topic vocabulary: shared framing words would become hub
        # keywords tying the topics together
        quoted = list(topic_words[topic_id][: spec.statement_terms])
        statement = f"Production request {topic_id} concerning " + " ".join(quoted) + "."
        topics.append(Topic(topic_id=topic_id, statement=statement))

    seed_judgments: list[Judgment] = []
    qrels_judgments: list[Judgment] = []
    all_ids = list(documents)
    for topic_id in topic_ids:
        rel = sorted(relevant_docs[topic_id])
        other_rel = sorted({d for t, docs in relevant_docs.items() if t != topic_id for d in docs})
        plain = sorted(set(all_ids) - relevant_docs[topic_id] - set(other_rel))
        pos_pick = rng.choice(len(rel), size=spec.seed_positives, replace=False)
        n_cross = min(int(round(spec.seed_negatives * spec.cross_topic_negatives)), len(other_rel))
        cross_pick = rng.choice(len(other_rel), size=n_cross, replace=False)
        plain_pick = rng.choice(len(plain), size=spec.seed_negatives - n_cross, replace=False)
        seeded = set()
        for k in sorted(pos_pick):
            seed_judgments.append(Judgment(topic_id, rel[int(k)], True, JudgmentOrigin.SEED))
            seeded.add(rel[int(k)])
        negatives = sorted(other_rel[int(k)] for k in cross_pick)
        negatives += sorted(plain[int(k)] for k in plain_pick)
        for doc_id in negatives:
            seed_judgments.append(Judgment(topic_id, doc_id, False, JudgmentOrigin.SEED))
            seeded.add(doc_id)
        for doc_id in all_ids:
            if doc_id not in seeded:
                qrels_judgments.append(
                    Judgment(topic_id, doc_id, doc_id in relevant_docs[topic_id], JudgmentOrigin.QRELS)
                )

    return SyntheticData(
        corpus=corpus,
        topics=topics,
        seed_judgments=seed_judgments,
        qrels_judgments=qrels_judgments,
        relevant_docs=relevant_docs,
    )
