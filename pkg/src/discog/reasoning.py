"""Validation of top-ranked predictions through a pluggable LLM client.

The client contract is ``complete(prompt, context=None) -> response
text``; context carries routing metadata (topic_id, doc_id) that the
mock uses to look up scripted fixtures. Clients must be safe for
concurrent calls. Records are assembled in rank order regardless of
request completion order.
"""

from __future__ import annotations

import json
import re
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from .corpus import Corpus, Topic
from .errors import ClientUnavailable, MissingPlaceholder
from .ranking import RankedList

PLACEHOLDERS = (
    "{topic_statement}",
    "{document_subject}",
    "{document_body}",
    "{model_prediction}",
    "{keywords}",
)

DEFAULT_BODY_BUDGET = 4000
TRUNCATION_MARKER = "\n[truncated]"

API_KEY_ENV = "DISCOG_LLM_API_KEY"

DEFAULT_TEMPLATE_TEXT = """\
You are assisting with a legal document review. A production request reads:

{topic_statement}

A classification model predicted that the email below is {model_prediction} to this \
request. Key terms extracted from the email: {keywords}

Email subject: {document_subject}
Email body:
{document_body}

Is the model's prediction correct? Start your answer with "Yes" or "No", then give \
a short reason supporting your decision.
"""


class Prediction(str, Enum):
    RELEVANT = "Relevant"
    NON_RELEVANT = "Non-Relevant"

    def flipped(self) -> "Prediction":
        return Prediction.NON_RELEVANT if self is Prediction.RELEVANT else Prediction.RELEVANT


@dataclass(frozen=True)
class PromptTemplate:
    text: str

    def __post_init__(self):
        bad = [p for p in PLACEHOLDERS if self.text.count(p) != 1]
        if bad:
            raise MissingPlaceholder(bad)

    @classmethod
    def from_file(cls, path) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            return cls(fh.read())


DEFAULT_TEMPLATE = PromptTemplate(DEFAULT_TEMPLATE_TEXT)


@dataclass(frozen=True)
class ReasoningRecord:
    topic_id: str
    doc_id: str
    model_prediction: Prediction
    llm_agrees: bool | None  # None: unparseable or failed; excluded from correction
    final_label: Prediction
    reason: str
    raw_response: str
    failed: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "topic_id": self.topic_id,
                "doc_id": self.doc_id,
                "model_prediction": self.model_prediction.value,
                "llm_agrees": self.llm_agrees,
                "final_label": self.final_label.value,
                "reason": self.reason,
                "raw_response": self.raw_response,
                "failed": self.failed,
            },
            ensure_ascii=False,
            sort_keys=True,
        )


def build_prompt(
    template: PromptTemplate,
    topic: Topic,
    doc,
    prediction: Prediction,
    keywords,
    body_budget: int = DEFAULT_BODY_BUDGET,
) -> str:
    """Pure placeholder substitution; identical inputs give identical bytes."""
    body = doc.body
    if len(body) > body_budget:
        body = body[:body_budget] + TRUNCATION_MARKER
    values = {
        "{topic_statement}": topic.statement,
        "{document_subject}": doc.subject,
        "{document_body}": body,
        "{model_prediction}": prediction.value,
        "{keywords}": ", ".join(keywords),
    }
    out = template.text
    for placeholder, value in values.items():
        out = out.replace(placeholder, value)
    return out


_LEADING_TOKEN = re.compile(r"\s*([A-Za-z]+)")


def parse_verdict(response: str) -> tuple[bool | None, str]:
    """Leading-token rule: a response starting with yes/no (any case) is a verdict.

    Returns (agrees, reason); agrees is None when unparseable, and such
    records are excluded from label correction.
    """
    match = _LEADING_TOKEN.match(response)
    if match:
        token = match.group(1).lower()
        if token in ("yes", "no"):
            reason = response[match.end() :].lstrip(" \t,.:;-")
            return token == "yes", reason.strip()
    return None, response.strip()


class LlmClient(Protocol):
    def complete(self, prompt: str, context: dict | None = None) -> str: ...


class MockLlmClient:
    """Offline client: scripted responses by doc_id with an agreeing default."""

    DEFAULT_RESPONSE = "Yes, the prediction is consistent with the request."

    def __init__(self, script: dict[str, str] | None = None, default: str | None = None):
        self.script = dict(script or {})
        self.default = default if default is not None else self.DEFAULT_RESPONSE
        self.calls: list[dict] = []

    def complete(self, prompt: str, context: dict | None = None) -> str:
        self.calls.append({"prompt": prompt, "context": dict(context or {})})
        doc_id = (context or {}).get("doc_id")
        return self.script.get(doc_id, self.default)


class FailingLlmClient:
    """Test double that fails a configurable number of times per doc."""

    def __init__(self, inner: LlmClient, failures: dict[str, int]):
        self.inner = inner
        self.remaining = dict(failures)

    def complete(self, prompt: str, context: dict | None = None) -> str:
        doc_id = (context or {}).get("doc_id")
        if self.remaining.get(doc_id, 0) > 0:
            self.remaining[doc_id] -= 1
            raise ClientUnavailable(f"scripted failure for {doc_id}")
        return self.inner.complete(prompt, context)


class HttpLlmClient:
    """Chat-completion HTTP adapter (one attempt per call; retries live upstream).

    The API key is read from the DISCOG_LLM_API_KEY environment variable
    and checked up front, so a missing key fails before any request.
    """

    def __init__(self, endpoint: str, model: str = "gpt-3.5-turbo", api_key: str | None = None, timeout: float = 30.0):
        import os

        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self.api_key:
            raise ClientUnavailable(f"no API key: set the {API_KEY_ENV} environment variable")

    def complete(self, prompt: str, context: dict | None = None) -> str:
        payload = json.dumps(
            {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        ).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint,
            data=payload,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {self.api_key}",
            },
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout) as response:
                body = json.loads(response.read().decode("utf-8"))
        except (urllib.error.URLError, TimeoutError, json.JSONDecodeError) as exc:
            raise ClientUnavailable(f"request to {self.endpoint} failed: {exc}") from exc
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ClientUnavailable(f"malformed response from {self.endpoint}: {body!r}") from exc


def _complete_with_retries(client, prompt, context, max_retries, backoff):
    attempt = 0
    while True:
        try:
            return client.complete(prompt, context=context), None
        except ClientUnavailable as exc:
            if attempt >= max_retries:
                return None, str(exc)
            time.sleep(backoff * (2**attempt))
            attempt += 1


def reason_top_k(
    ranked: RankedList,
    predictions: dict[str, Prediction],
    k: int,
    client: LlmClient,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    *,
    topic: Topic,
    corpus: Corpus,
    keywords_by_doc: dict[str, tuple[str, ...]] | None = None,
    flip_on_disagree: bool = True,
    body_budget: int = DEFAULT_BODY_BUDGET,
    max_retries: int = 2,
    backoff: float = 0.5,
    max_in_flight: int = 1,
) -> list[ReasoningRecord]:
    """Query the client for the top-k ranked documents, in rank order.

    Always returns exactly k records. A disagreeing verdict flips the
    final label when flip_on_disagree is set (otherwise it is only
    reported). Requests that still fail after retries and unparseable
    responses keep the model's label and are marked accordingly.
    """
    if k < 0 or k > len(ranked):
        raise ValueError(f"k must be in [0, {len(ranked)}], got {k}")
    top = ranked.entries[:k]
    keywords_by_doc = keywords_by_doc or {}

    def run_one(doc_id: str):
        doc = corpus.documents[doc_id]
        prediction = predictions[doc_id]
        prompt = build_prompt(
            template, topic, doc, prediction, keywords_by_doc.get(doc_id, ()), body_budget=body_budget
        )
        context = {"topic_id": topic.topic_id, "doc_id": doc_id}
        response, failure = _complete_with_retries(client, prompt, context, max_retries, backoff)
        if failure is not None:
            return ReasoningRecord(
                topic_id=topic.topic_id, doc_id=doc_id, model_prediction=prediction,
                llm_agrees=None, final_label=prediction,
                reason=f"request failed: {failure}", raw_response="", failed=True,
            )
        agrees, reason = parse_verdict(response)
        final = prediction
        if agrees is False and flip_on_disagree:
            final = prediction.flipped()
        return ReasoningRecord(
            topic_id=topic.topic_id, doc_id=doc_id, model_prediction=prediction,
            llm_agrees=agrees, final_label=final, reason=reason, raw_response=response,
        )

    doc_ids = [doc_id for doc_id, _ in top]
    if max_in_flight <= 1:
        return [run_one(doc_id) for doc_id in doc_ids]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(run_one, doc_ids))


def save_records(records: list[ReasoningRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(record.to_json() + "\n")
