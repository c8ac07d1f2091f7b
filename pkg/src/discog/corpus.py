"""Corpus, topic, and relevance-judgment ingestion.

File formats:
  corpus     JSON Lines with fields doc_id, subject, body, sender,
             recipients (array), date (optional ISO-8601)
  topics     JSON Lines with fields topic_id, statement
  judgments  TREC qrels text: ``topic 0 docid rel`` with rel in {0, 1}

Loaded objects are immutable in practice (nothing mutates them after
load) and safe to share across threads.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

import numpy as np

from .errors import (
    DuplicateDocId,
    DuplicateJudgment,
    DuplicateTopicId,
    EmptyCorpus,
    EmptyStatement,
    MalformedLine,
    MalformedRecord,
    NoTopics,
    SingleClassInput,
    UnknownRelevanceValue,
)

DEFAULT_VALIDATION_FRACTION = 0.2


class JudgmentOrigin(str, Enum):
    SEED = "seed"
    QRELS = "qrels"


def normalize_address(address: str) -> str:
    """Lowercase + trim; no display-name parsing."""
    return address.strip().lower()


@dataclass(frozen=True)
class EmailDocument:
    doc_id: str
    subject: str
    body: str
    sender: str
    recipients: tuple[str, ...]
    date: str | None = None

    @property
    def text(self) -> str:
        """Subject and body joined; the unit handed to text models."""
        return f"{self.subject}\n{self.body}"


@dataclass(frozen=True)
class Topic:
    topic_id: str
    statement: str


@dataclass(frozen=True)
class Judgment:
    topic_id: str
    doc_id: str
    relevant: bool
    origin: JudgmentOrigin


@dataclass(frozen=True)
class Corpus:
    documents: dict[str, EmailDocument]
    participants: tuple[str, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.documents)

    def doc_ids(self) -> list[str]:
        return list(self.documents)


def _parse_document(record: dict, line_number: int) -> EmailDocument:
    if not isinstance(record, dict):
        raise MalformedRecord(line_number, "record is not a JSON object")
    doc_id = record.get("doc_id")
    if not isinstance(doc_id, str) or not doc_id:
        raise MalformedRecord(line_number, "doc_id missing or empty")
    subject = record.get("subject", "")
    body = record.get("body", "")
    if not isinstance(subject, str) or not isinstance(body, str):
        raise MalformedRecord(line_number, "subject/body must be strings")
    if subject == "" and body == "":
        raise MalformedRecord(line_number, "subject and body are both empty")
    sender = record.get("sender")
    if not isinstance(sender, str):
        raise MalformedRecord(line_number, "sender missing")
    sender = normalize_address(sender)
    if not sender:
        raise MalformedRecord(line_number, "sender is empty after normalization")
    raw_recipients = record.get("recipients")
    if not isinstance(raw_recipients, list) or not all(isinstance(r, str) for r in raw_recipients):
        raise MalformedRecord(line_number, "recipients must be an array of strings")
    recipients = []
    for r in raw_recipients:
        r = normalize_address(r)
        if not r:
            raise MalformedRecord(line_number, "recipient is empty after normalization")
        recipients.append(r)
    date = record.get("date")
    if date is not None:
        if not isinstance(date, str):
            raise MalformedRecord(line_number, "date must be a string")
        try:
            datetime.fromisoformat(date.replace("Z", "+00:00"))
        except ValueError:
            raise MalformedRecord(line_number, f"date {date!r} is not ISO-8601") from None
    return EmailDocument(
        doc_id=doc_id,
        subject=subject,
        body=body,
        sender=sender,
        recipients=tuple(recipients),
        date=date,
    )


def load_corpus(path, format: str = "jsonl") -> Corpus:
    """Load a JSON Lines corpus, preserving input order.

    Raises MalformedRecord, DuplicateDocId, or EmptyCorpus.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    documents: dict[str, EmailDocument] = {}
    participants: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})") from None
            doc = _parse_document(record, line_number)
            if doc.doc_id in documents:
                raise DuplicateDocId(doc.doc_id)
            documents[doc.doc_id] = doc
            participants.add(doc.sender)
            participants.update(doc.recipients)
    if not documents:
        raise EmptyCorpus(f"no documents in {path}")
    return Corpus(documents=documents, participants=tuple(sorted(participants)))


def save_corpus(corpus: Corpus, path) -> None:
    """Inverse of load_corpus; round-trips all fields after normalization."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents.values():
            record = {
                "doc_id": doc.doc_id,
                "subject": doc.subject,
                "body": doc.body,
                "sender": doc.sender,
                "recipients": list(doc.recipients),
            }
            if doc.date is not None:
                record["date"] = doc.date
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_topics(path) -> list[Topic]:
    """Load production-request statements in file order."""
    topics: list[Topic] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})") from None
            topic_id = record.get("topic_id")
            if not isinstance(topic_id, str) or not topic_id:
                raise MalformedRecord(line_number, "topic_id missing or empty")
            if topic_id in seen:
                raise DuplicateTopicId(topic_id)
            statement = record.get("statement")
            if not isinstance(statement, str):
                raise MalformedRecord(line_number, "statement missing")
            if not statement.strip():
                raise EmptyStatement(f"topic {topic_id!r} has an empty statement")
            seen.add(topic_id)
            topics.append(Topic(topic_id=topic_id, statement=statement))
    if not topics:
        raise NoTopics(f"no topics in {path}")
    return topics


def save_topics(topics: list[Topic], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in topics:
            fh.write(json.dumps({"topic_id": t.topic_id, "statement": t.statement}, ensure_ascii=False) + "\n")


def load_judgments(path, origin: JudgmentOrigin | str) -> list[Judgment]:
    """Parse a TREC-style qrels file: ``<topic_id> 0 <doc_id> <0|1>``."""
    origin = JudgmentOrigin(origin)
    judgments: list[Judgment] = []
    seen: set[tuple[str, str]] = set()
    with open(path, encoding="utf-8") as fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise MalformedLine(line_number, f"expected 4 fields, got {len(fields)}")
            topic_id, _iteration, doc_id, rel = fields
            if rel == "1":
                relevant = True
            elif rel == "0":
                relevant = False
            else:
                raise UnknownRelevanceValue(f"line {line_number}: relevance {rel!r} is not 0 or 1")
            key = (topic_id, doc_id)
            if key in seen:
                raise DuplicateJudgment(topic_id, doc_id)
            seen.add(key)
            judgments.append(Judgment(topic_id=topic_id, doc_id=doc_id, relevant=relevant, origin=origin))
    return judgments


def save_judgments(judgments: list[Judgment], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for j in judgments:
            fh.write(f"{j.topic_id} 0 {j.doc_id} {1 if j.relevant else 0}\n")


def split_validation(
    judgments: list[Judgment],
    fraction: float = DEFAULT_VALIDATION_FRACTION,
    rng_seed: int = 0,
    allow_single_class: bool = False,
) -> tuple[list[Judgment], list[Judgment]]:
    """Stratified train/validation split of a judgment list.

    Each class contributes max(1, floor(fraction * class_size)) items to
    validation, so every present class is represented there. Output
    lists preserve the input order; the draw is deterministic for a
    fixed rng_seed. With a single-class input, raises SingleClassInput
    unless allow_single_class is set, in which case an unstratified
    split is returned and a warning is emitted.
    """
    if not judgments:
        raise SingleClassInput("cannot split an empty judgment list")
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    classes = sorted({j.relevant for j in judgments})
    rng = np.random.default_rng(rng_seed)
    if len(classes) == 1:
        if not allow_single_class:
            raise SingleClassInput("judgments contain a single class; pass allow_single_class to proceed")
        warnings.warn("single-class judgment list: returning an unstratified split", stacklevel=2)
        groups = [list(range(len(judgments)))]
    else:
        groups = [
            [i for i, j in enumerate(judgments) if j.relevant == cls]
            for cls in classes
        ]
    val_indices: set[int] = set()
    for members in groups:
        n_val = max(1, int(fraction * len(members)))
        order = rng.permutation(len(members))
        val_indices.update(members[k] for k in order[:n_val])
    train = [j for i, j in enumerate(judgments) if i not in val_indices]
    validation = [j for i, j in enumerate(judgments) if i in val_indices]
    return train, validation
