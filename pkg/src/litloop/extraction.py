"""Extractor stage: turn documents into candidate data points.

The extractor prompt instructs the model to emit one record per line in the
grammar

    name=value unit; name=value unit; ...

with the sentinel ``NO_DATA`` when a document holds nothing extractable.
Fields may also be separated by commas; the unit may be omitted when the
value is already in the canonical unit. The formatting check is mechanical:
a line either parses against the data definition or is rejected with a
reason, and values whose units have no conversion rule are dropped rather
than guessed. Nothing here computes derived quantities; a value must appear
literally (after unit conversion) or not at all.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .corpus import DataDefinition, Document, NotConvertible, convert_value
from .gateway import CompletionRequest, PromptTemplate, SamplingConfig, render

log = logging.getLogger(__name__)

NO_DATA_SENTINEL = "NO_DATA"

EXTRACTOR_TEMPLATE = PromptTemplate(
    template_id="extractor",
    text=(
        "You extract structured numeric data points from scientific documents.\n"
        "Data definition:\n{{data_definition}}\n\n"
        "Document:\n{{document_body}}\n\n"
        "Report every valid data point on its own line, formatted exactly as\n"
        "name=value unit; name=value unit; ...\n"
        "using the variable names from the data definition. If the document\n"
        f"contains no valid data point, reply with the single line {NO_DATA_SENTINEL}."
    ),
)

_FIELD_RE = re.compile(
    r"^\s*(?P<name>[A-Za-z_][\w.]*)\s*=\s*(?P<value>[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
    r"\s*(?P<unit>[^\s;,]+)?\s*$"
)


@dataclass(frozen=True)
class CandidatePoint:
    doc_id: str
    values: dict[str, float | None]
    run_index: int
    raw_span: str | None = None

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "values": self.values,
            "run_index": self.run_index,
            "raw_span": self.raw_span,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "CandidatePoint":
        return cls(
            doc_id=raw["doc_id"],
            values=dict(raw["values"]),
            run_index=raw["run_index"],
            raw_span=raw.get("raw_span"),
        )


@dataclass
class ExtractionBatch:
    doc_id: str
    required: tuple[str, ...]
    runs: list[list[CandidatePoint]] = field(default_factory=list)
    format_rejects: int = 0
    reject_reasons: list[str] = field(default_factory=list)
    raw_responses: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "required": list(self.required),
            "runs": [[p.to_dict() for p in run] for run in self.runs],
            "format_rejects": self.format_rejects,
            "reject_reasons": self.reject_reasons,
            "raw_responses": self.raw_responses,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExtractionBatch":
        return cls(
            doc_id=raw["doc_id"],
            required=tuple(raw["required"]),
            runs=[[CandidatePoint.from_dict(p) for p in run] for run in raw["runs"]],
            format_rejects=raw["format_rejects"],
            reject_reasons=list(raw["reject_reasons"]),
            raw_responses=list(raw.get("raw_responses", [])),
        )


@dataclass(frozen=True)
class LineReject:
    line_number: int
    line: str
    reason: str


def _split_fields(line: str) -> list[str]:
    # the grammar names ';' as the separator; ',' is tolerated because
    # models drift between the two and both are unambiguous here
    return [part for part in re.split(r"[;,]", line) if part.strip()]


def parse_point_lines(
    text: str,
    definition: DataDefinition,
    doc_id: str = "",
    run_index: int = 0,
) -> tuple[list[CandidatePoint], list[LineReject]]:
    """Parse one completion into points, rejecting malformed lines.

    Each accepted line yields one point whose values are converted to the
    canonical units and rounded to each variable's precision. Rejection
    reasons name the line number and the failure. The ``NO_DATA`` sentinel
    and blank lines are skipped silently.
    """
    points: list[CandidatePoint] = []
    rejects: list[LineReject] = []
    known = {v.name: v for v in definition.variables}

    for line_number, line in enumerate((text or "").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped == NO_DATA_SENTINEL:
            continue

        values: dict[str, float | None] = {v.name: None for v in definition.variables}
        reason = None
        seen: set[str] = set()
        for raw_field in _split_fields(stripped):
            match = _FIELD_RE.match(raw_field)
            if match is None:
                reason = f"malformed field {raw_field.strip()!r}"
                break
            name = match.group("name")
            spec = known.get(name)
            if spec is None:
                reason = f"unknown variable {name!r}"
                break
            if name in seen:
                reason = f"duplicate variable {name!r}"
                break
            seen.add(name)
            unit = match.group("unit") or spec.canonical_unit
            try:
                values[name] = convert_value(float(match.group("value")), unit, spec)
            except NotConvertible as exc:
                if spec.required:
                    reason = f"{name}: {exc.reason} ({exc.unit!r})"
                    break
                values[name] = None  # preferred variable dropped, point survives

        if reason is None:
            missing = [v.name for v in definition.required_variables if values[v.name] is None]
            if missing:
                reason = f"missing required: {', '.join(missing)}"

        if reason is not None:
            rejects.append(LineReject(line_number, stripped, reason))
        else:
            points.append(
                CandidatePoint(
                    doc_id=doc_id,
                    values=values,
                    run_index=run_index,
                    raw_span=stripped,
                )
            )
    return points, rejects


def extract_document(
    backend,
    doc: Document,
    definition: DataDefinition,
    k: int,
    sampling: SamplingConfig | None = None,
) -> ExtractionBatch:
    """Run the extractor k times over one document.

    Each run is parsed independently; all k runs unparseable simply yields a
    batch with zero points, which downstream treats as no data.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sampling = sampling or SamplingConfig()
    prompt = render(
        EXTRACTOR_TEMPLATE,
        {"data_definition": definition.free_text, "document_body": doc.body},
    )
    batch = ExtractionBatch(
        doc_id=doc.doc_id,
        required=tuple(v.name for v in definition.required_variables),
    )
    for run_index in range(k):
        request = CompletionRequest(prompt, sampling.with_seed(run_index))
        try:
            response_text = backend.complete(request).text
        except Exception as exc:
            log.warning("extraction run %d on %s failed: %s", run_index, doc.doc_id, exc)
            response_text = ""
        batch.raw_responses.append(response_text)
        points, rejects = parse_point_lines(response_text, definition, doc.doc_id, run_index)
        batch.runs.append(points)
        batch.format_rejects += len(rejects)
        batch.reject_reasons.extend(
            f"run {run_index} line {r.line_number}: {r.reason}" for r in rejects
        )
    return batch


def extract_corpus(
    backend,
    documents: list[Document],
    definition: DataDefinition,
    k: int,
    sampling: SamplingConfig | None = None,
    max_workers: int = 4,
) -> list[ExtractionBatch]:
    """Extract every kept document concurrently, ordered by doc_id."""

    def one(doc: Document) -> ExtractionBatch:
        return extract_document(backend, doc, definition, k, sampling)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        batches = list(pool.map(one, documents))
    return sorted(batches, key=lambda b: b.doc_id)
