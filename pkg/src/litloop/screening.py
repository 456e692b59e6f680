"""Yes-no filtering stage.

Turns the data definition into a fixed list of yes/no questions (one per
required variable, one per filter condition), asks each question k times per
document, and keeps a document only if every question's yes-count clears the
consensus filter threshold. Anything the model answers that does not start
with yes or no counts as no: the stage is deliberately biased toward
exclusion, since the cost of keeping an irrelevant paper is paid again at
extraction time.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .consensus import ConsensusPolicy
from .corpus import DataDefinition, Document
from .gateway import CompletionRequest, PromptTemplate, SamplingConfig, render

SCREENING_TEMPLATE = PromptTemplate(
    template_id="screening",
    text=(
        "You are screening scientific documents for a data-collection effort.\n"
        "Data definition:\n{{data_definition}}\n\n"
        "Document:\n{{document_body}}\n\n"
        "Question: {{question}}\n"
        "Answer with a single word: yes or no."
    ),
)

_ANSWER_RE = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class ScreeningQuestion:
    text: str
    derived_from: str


@dataclass(frozen=True)
class ScreeningVerdict:
    doc_id: str
    yes_counts: tuple[int, ...]
    kept: bool
    confidence: int

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "yes_counts": list(self.yes_counts),
            "kept": self.kept,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScreeningVerdict":
        return cls(
            doc_id=raw["doc_id"],
            yes_counts=tuple(raw["yes_counts"]),
            kept=raw["kept"],
            confidence=raw["confidence"],
        )


def generate_questions(definition: DataDefinition) -> list[ScreeningQuestion]:
    """One question per required variable plus one per filter condition, in
    schema order. Deterministic: the same definition always yields the same
    question list."""
    questions = []
    for variable in definition.required_variables:
        unit = variable.canonical_unit
        questions.append(
            ScreeningQuestion(
                text=(
                    f"Does the document provide {variable.name} in {unit} "
                    f"(or a unit convertible to {unit})?"
                ),
                derived_from=f"variable:{variable.name}",
            )
        )
    for index, condition in enumerate(definition.filter_conditions):
        questions.append(
            ScreeningQuestion(text=condition, derived_from=f"filter_condition:{index}")
        )
    return questions


def parse_answer(text: str) -> bool:
    """True only for an answer whose leading token is yes; everything else,
    including unparseable output, is no."""
    match = _ANSWER_RE.match(text or "")
    return bool(match) and match.group(1).lower() == "yes"


def screen_document(
    backend,
    doc: Document,
    definition: DataDefinition,
    questions: list[ScreeningQuestion],
    policy: ConsensusPolicy,
    sampling: SamplingConfig | None = None,
) -> ScreeningVerdict:
    """Ask every question k times and apply the consensus policy.

    A question's yes answer survives consensus when its yes-count reaches
    ``policy.filter_below``; the document is kept only if every question
    survives. ``confidence`` is the minimum yes-count across questions (k for
    a document with no questions). A backend error on one run counts as a
    no-answer for that run and is never retried into a different question.
    """
    sampling = sampling or SamplingConfig()
    yes_counts = []
    for question in questions:
        prompt = render(
            SCREENING_TEMPLATE,
            {
                "data_definition": definition.free_text,
                "document_body": doc.body,
                "question": question.text,
            },
        )
        count = 0
        for run_index in range(policy.k):
            request = CompletionRequest(prompt, sampling.with_seed(run_index))
            try:
                response = backend.complete(request)
            except Exception:
                continue  # recorded as a no-answer for this run
            if parse_answer(response.text):
                count += 1
        yes_counts.append(count)

    kept = all(count >= policy.filter_below for count in yes_counts)
    confidence = min(yes_counts) if yes_counts else policy.k
    return ScreeningVerdict(
        doc_id=doc.doc_id,
        yes_counts=tuple(yes_counts),
        kept=kept,
        confidence=confidence,
    )


def screen_corpus(
    backend,
    documents: list[Document],
    definition: DataDefinition,
    policy: ConsensusPolicy,
    sampling: SamplingConfig | None = None,
    max_workers: int = 4,
) -> list[ScreeningVerdict]:
    """Screen documents concurrently; results are ordered by doc_id so the
    outcome is independent of scheduling."""
    questions = generate_questions(definition)

    def one(doc: Document) -> ScreeningVerdict:
        return screen_document(backend, doc, definition, questions, policy, sampling)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        verdicts = list(pool.map(one, documents))
    return sorted(verdicts, key=lambda v: v.doc_id)
