"""Corpus ingestion, variable schema and unit canonicalization.

A corpus is a directory of UTF-8 text files, one document per file, with an
optional JSON manifest assigning ids and titles. The scientist's variable
schema (``DataDefinition``) declares which variables make a data point valid,
which units are acceptable for each, and how to convert them to the canonical
unit. Conversions are restricted to affine rules ``a*x + b``; anything that
cannot be expressed that way is declared not convertible and the datum is
dropped rather than guessed.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

ROLE_INDEPENDENT = "independent"
ROLE_DEPENDENT = "dependent"
ROLE_CONTROL = "control"

_ROLES = (ROLE_INDEPENDENT, ROLE_DEPENDENT, ROLE_CONTROL)

DEFAULT_PRECISION = 4


class CorpusError(Exception):
    """Fatal corpus problem (missing directory, empty corpus, bad schema)."""


class NotConvertible(Exception):
    """The value cannot be expressed in the canonical unit and must be dropped."""

    def __init__(self, unit: str, reason: str = "no conversion rule"):
        super().__init__(f"unit {unit!r}: {reason}")
        self.unit = unit
        self.reason = reason


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    source_path: str

    def __post_init__(self):
        if not self.body:
            raise CorpusError(f"document {self.doc_id!r} has an empty body")


@dataclass(frozen=True)
class VariableSpec:
    """One variable of the schema.

    ``accepted_units`` maps a unit tag to an affine rule ``(a, b)`` meaning
    ``canonical = a * value + b``, or to ``None`` for units that are known but
    explicitly not convertible (e.g. a dose reported as ion fluence when the
    canonical unit is dpa).
    """

    name: str
    role: str
    required: bool = True
    canonical_unit: str = ""
    accepted_units: dict[str, tuple[float, float] | None] = field(default_factory=dict)
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.role not in _ROLES:
            raise CorpusError(f"variable {self.name!r}: unknown role {self.role!r}")
        if self.precision < 0:
            raise CorpusError(f"variable {self.name!r}: precision must be >= 0")
        units = dict(self.accepted_units)
        rule = units.get(self.canonical_unit)
        if rule is None:
            # canonical unit always carries the identity conversion
            units[self.canonical_unit] = (1.0, 0.0)
            object.__setattr__(self, "accepted_units", units)
        elif tuple(rule) != (1.0, 0.0):
            raise CorpusError(
                f"variable {self.name!r}: canonical unit must use the identity rule"
            )

    @classmethod
    def from_dict(cls, raw: dict) -> "VariableSpec":
        units: dict[str, tuple[float, float] | None] = {}
        for tag, rule in raw.get("accepted_units", {}).items():
            units[tag] = None if rule is None else (float(rule[0]), float(rule[1]))
        return cls(
            name=raw["name"],
            role=raw["role"],
            required=bool(raw.get("required", True)),
            canonical_unit=raw["canonical_unit"],
            accepted_units=units,
            precision=int(raw.get("precision", DEFAULT_PRECISION)),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "role": self.role,
            "required": self.required,
            "canonical_unit": self.canonical_unit,
            "accepted_units": {
                tag: (list(rule) if rule is not None else None)
                for tag, rule in self.accepted_units.items()
            },
            "precision": self.precision,
        }


@dataclass(frozen=True)
class DataDefinition:
    """The scientist's schema: variables, filter conditions and the free-text
    definition that goes into prompts verbatim."""

    variables: tuple[VariableSpec, ...]
    filter_conditions: tuple[str, ...] = ()
    free_text: str = ""

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise CorpusError("variable names must be unique")
        roles = {v.role for v in self.variables}
        if ROLE_INDEPENDENT not in roles or ROLE_DEPENDENT not in roles:
            raise CorpusError(
                "definition needs at least one independent and one dependent variable"
            )

    def variable(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def required_variables(self) -> tuple[VariableSpec, ...]:
        return tuple(v for v in self.variables if v.required)

    @property
    def predictors(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.role == ROLE_INDEPENDENT)

    @property
    def target(self) -> str:
        for v in self.variables:
            if v.role == ROLE_DEPENDENT:
                return v.name
        raise CorpusError("no dependent variable")  # unreachable after validation

    @classmethod
    def from_dict(cls, raw: dict) -> "DataDefinition":
        return cls(
            variables=tuple(VariableSpec.from_dict(v) for v in raw["variables"]),
            filter_conditions=tuple(raw.get("filter_conditions", [])),
            free_text=raw.get("free_text", ""),
        )

    def to_dict(self) -> dict:
        return {
            "variables": [v.to_dict() for v in self.variables],
            "filter_conditions": list(self.filter_conditions),
            "free_text": self.free_text,
        }


@dataclass(frozen=True)
class ScientificQuery:
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError("scientific query must be non-empty")


def convert_value(raw: float, unit: str, spec: VariableSpec) -> float:
    """Convert ``raw`` expressed in ``unit`` to the canonical unit of ``spec``.

    Returns the converted value rounded to ``spec.precision`` decimal places.
    Raises ``NotConvertible`` for unrecognized or declared-unconvertible units
    and for non-finite values; callers drop the datum in that case.
    """
    if not math.isfinite(raw):
        raise NotConvertible(unit, f"non-finite value {raw!r}")
    if unit not in spec.accepted_units:
        raise NotConvertible(unit, "unrecognized unit")
    rule = spec.accepted_units[unit]
    if rule is None:
        raise NotConvertible(unit, "declared not convertible")
    a, b = rule
    return round(a * raw + b, spec.precision)


def load_corpus(
    root: str | Path,
    manifest: str | Path | None = None,
) -> tuple[list[Document], list[str]]:
    """Load every ``.txt`` file under ``root`` as one Document.

    Returns ``(documents, errors)``. Documents are ordered by doc_id so that
    repeated loads of the same directory are identical. Per-file read errors
    are recorded and ingestion continues; an empty result is fatal.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus directory {root} does not exist")

    titles: dict[str, str] = {}
    ids: dict[str, str] = {}
    if manifest is not None:
        entries = json.loads(Path(manifest).read_text(encoding="utf-8"))
        for entry in entries:
            ids[entry["file"]] = entry["id"]
            titles[entry["id"]] = entry.get("title", entry["id"])

    documents: list[Document] = []
    errors: list[str] = []
    for path in sorted(root.glob("*.txt")):
        doc_id = ids.get(path.name, path.stem)
        try:
            body = path.read_text(encoding="utf-8")
            documents.append(
                Document(
                    doc_id=doc_id,
                    title=titles.get(doc_id, doc_id),
                    body=body,
                    source_path=str(path),
                )
            )
        except (UnicodeDecodeError, OSError, CorpusError) as exc:
            log.warning("skipping %s: %s", path, exc)
            errors.append(f"{path.name}: {exc}")

    if not documents:
        raise CorpusError(f"empty corpus: no readable .txt documents under {root}")

    documents.sort(key=lambda doc: doc.doc_id)
    seen: set[str] = set()
    for doc in documents:
        if doc.doc_id in seen:
            raise CorpusError(f"duplicate doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
    return documents, errors
