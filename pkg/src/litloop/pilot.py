"""Bundled example study: helium bubble growth in irradiated tungsten.

This module ships the fixtures the test suite and the demo CLI run against:
a 14-point reference dataset of (irradiation temperature, dose, bubble size)
measurements attributed to 5 source documents, a 64-document corpus in which
those 5 sources are buried among 59 decoys, and a scripted-backend response
fixture that replays the whole pipeline deterministically, including the
per-run consensus behavior that gives each point its score.
"""

from __future__ import annotations

import json
from pathlib import Path

from .consensus import ConsensusPolicy
from .corpus import DataDefinition, Document, ScientificQuery, VariableSpec
from .extraction import EXTRACTOR_TEMPLATE
from .gateway import ScriptedBackend, prompt_hash, render
from .modeling import SELECTION_TEMPLATE, Dataset
from .screening import SCREENING_TEMPLATE, generate_questions

PILOT_K = 10
PILOT_FILTER_BELOW = 3
PILOT_FLAG_UPTO = 5

PILOT_RESPONSE_TEXT = (
    "Within the observed ranges the exponential model explains the bubble-size "
    "data better than the linear model (higher R^2), indicating growth that "
    "accelerates with temperature and dose rather than increasing additively."
)

# (temperature C, dose dpa, bubble nm, consensus score), grouped by source doc
PILOT_DOC_POINTS = (
    ("w-he-001", ((500, 3, 2.345, 10), (750, 2, 4.532, 8), (1000, 1.3, 5.397, 6))),
    ("w-he-002", ((800, 1, 3.31, 10), (800, 0.004, 2.733, 9))),
    ("w-he-003", ((500, 3, 2.0, 3), (800, 3, 7.368, 10), (500, 1.5, 0.498, 9))),
    ("w-he-004", ((500, 0.17, 0.499, 8), (800, 0.34, 2.737, 7),
                  (1000, 0.45, 5.055, 8), (1200, 0.57, 3.721, 8))),
    ("w-he-005", ((20, 0.5, 0.499, 10), (20, 0.04, 2.062, 5))),
)

_SOURCE_TITLES = {
    "w-he-001": "Helium bubble evolution in tungsten foils under 40 keV He+ irradiation",
    "w-he-002": "Dose dependence of cavity growth in recrystallized tungsten",
    "w-he-003": "Microstructural response of pure tungsten to single-beam helium exposure",
    "w-he-004": "Temperature-dependent helium bubble coarsening in polycrystalline tungsten",
    "w-he-005": "Room-temperature helium implantation effects in tungsten",
}


def pilot_definition() -> DataDefinition:
    return DataDefinition(
        variables=(
            VariableSpec(
                name="temperature",
                role="independent",
                required=True,
                canonical_unit="C",
                accepted_units={"C": (1.0, 0.0), "K": (1.0, -273.15)},
                precision=2,
            ),
            VariableSpec(
                name="dose",
                role="independent",
                required=True,
                canonical_unit="dpa",
                accepted_units={"dpa": (1.0, 0.0), "ions/cm2": None},
                precision=4,
            ),
            VariableSpec(
                name="bubble_size",
                role="dependent",
                required=True,
                canonical_unit="nm",
                accepted_units={"nm": (1.0, 0.0), "angstrom": (0.1, 0.0)},
                precision=4,
            ),
        ),
        filter_conditions=(
            "Does the document report pure tungsten samples?",
            "Does the document report single-beam helium ion irradiation?",
        ),
        free_text=(
            "Collect helium bubble measurements from irradiated pure tungsten. "
            "A valid data point requires: irradiation temperature in Celsius "
            "(Kelvin is convertible), irradiation dose in displacements per atom "
            "(dpa; ion fluence is not convertible and must be excluded), and mean "
            "helium bubble size in nanometres (angstrom is convertible). Only "
            "single-beam helium ion irradiation of pure tungsten qualifies."
        ),
    )


def pilot_query() -> ScientificQuery:
    return ScientificQuery(
        "Is the relationship between irradiation temperature, irradiation dose, "
        "and helium bubble size more linear or exponential?"
    )


def pilot_policy() -> ConsensusPolicy:
    return ConsensusPolicy(k=PILOT_K, filter_below=PILOT_FILTER_BELOW, flag_upto=PILOT_FLAG_UPTO)


def pilot_points() -> list[tuple[float, float, float, int]]:
    """All 14 reference points as (temperature, dose, bubble_size, score)."""
    return [point for _, points in PILOT_DOC_POINTS for point in points]


def pilot_dataset() -> Dataset:
    """The 14-point reference dataset, fit-ready."""
    rows, targets, provenance = [], [], []
    for doc_id, points in PILOT_DOC_POINTS:
        for temperature, dose, size, score in points:
            rows.append((float(temperature), float(dose)))
            targets.append(float(size))
            provenance.append((doc_id, str(score)))
    return Dataset(
        predictors=("temperature", "dose"),
        target="bubble_size",
        rows=tuple(rows),
        targets=tuple(targets),
        provenance=tuple(provenance),
    )


# --- corpus -----------------------------------------------------------------

def _source_body(doc_id: str, points) -> str:
    lines = [
        _SOURCE_TITLES[doc_id],
        "",
        "Pure tungsten specimens (99.99%) were exposed to single-beam helium ion "
        "irradiation and examined by transmission electron microscopy.",
    ]
    for temperature, dose, size, _ in points:
        lines.append(
            f"At an irradiation temperature of {temperature} C and a dose of "
            f"{dose} dpa the mean helium bubble diameter was {size} nm."
        )
    lines.append(
        "Doses were converted to displacements per atom following standard practice."
    )
    return "\n".join(lines)


_DECOY_BODIES = (
    # no dpa: dose only as fluence
    "Tungsten samples were irradiated with helium ions to a fluence of {n}e16 "
    "ions/cm2 at {temp} C. Bubble diameters near {size} nm were observed, but "
    "no dpa conversion was performed for this beamline.",
    # wrong material
    "Copper foils were irradiated at {temp} C to {n}.0 dpa. Void swelling in "
    "copper differs markedly from refractory metals; cavity sizes reached "
    "{size} nm.",
    # alloy, not pure tungsten
    "W-{n}Re alloy specimens showed suppressed bubble growth at {temp} C and "
    "1.{n} dpa compared with pure tungsten references reported elsewhere.",
    # dual beam
    "Dual-beam (He + Fe) exposure of tungsten at {temp} C to {n}.5 dpa produced "
    "coupled cavity-loop microstructures around {size} nm.",
    # review, no data
    "This review surveys helium effects in plasma-facing metals. Quantitative "
    "bubble-size data are tabulated in the cited primary studies, not here.",
    # unrelated topic
    "Oxidation kinetics of steel {n} at {temp} C followed parabolic behavior; "
    "scale thickness grew to {size} um after 100 h in dry air.",
)


def build_pilot_corpus(root: str | Path) -> list[Path]:
    """Write the 64-document pilot corpus (5 sources + 59 decoys) to ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = []
    for doc_id, points in PILOT_DOC_POINTS:
        path = root / f"{doc_id}.txt"
        path.write_text(_source_body(doc_id, points), encoding="utf-8")
        paths.append(path)
    for index in range(59):
        template = _DECOY_BODIES[index % len(_DECOY_BODIES)]
        body = template.format(n=2 + index % 7, temp=300 + 25 * (index % 12),
                               size=round(1.0 + 0.3 * (index % 9), 1))
        path = root / f"bg-{index + 6:03d}.txt"
        path.write_text(f"Decoy study {index + 6}\n\n{body}\n", encoding="utf-8")
        paths.append(path)
    return paths


# --- scripted responses ------------------------------------------------------

def _point_line(temperature, dose, size, run_index: int) -> str:
    # vary the reported units across runs; canonicalization makes them match
    if run_index % 3 == 1:
        return (
            f"temperature={temperature + 273.15} K; dose={dose} dpa; "
            f"bubble_size={size} nm"
        )
    if run_index % 3 == 2:
        return (
            f"temperature={temperature} C; dose={dose} dpa; "
            f"bubble_size={round(size * 10, 3)} angstrom"
        )
    return f"temperature={temperature} C; dose={dose} dpa; bubble_size={size} nm"


# spurious lines that consensus must filter (scores 1 and 2) and one
# malformed line that the formatting check must reject
_NOISE_RUNS = {
    8: ["temperature=650 C; dose=1.1 dpa; bubble_size=9.41 nm",
        "the largest bubbles were impressive"],
    9: ["temperature=650 C; dose=1.1 dpa; bubble_size=9.41 nm",
        "temperature=210 C; dose=0.9 dpa; bubble_size=8.13 nm"],
}
_NOISE_SCORE_2 = (650.0, 1.1, 9.41)   # appears in runs 8 and 9 -> filtered
_NOISE_SCORE_1 = (210.0, 0.9, 8.13)   # appears in run 9 only  -> filtered


def build_pilot_responses(documents: list[Document]) -> dict[str, list[str]]:
    """Scripted completions for the full pilot pipeline over ``documents``.

    Screening: sources answer yes to every question in every run; decoys miss
    at least one required question (fluence-style decoys answer yes to
    everything except the dpa question, which stays below the consensus
    threshold). Extraction: a point with score s appears in runs 0..s-1, so
    consensus reproduces the reference scores exactly. Model selection picks
    linear and exponential.
    """
    definition = pilot_definition()
    questions = generate_questions(definition)
    source_points = dict(PILOT_DOC_POINTS)
    responses: dict[str, list[str]] = {}

    for doc in documents:
        for q_index, question in enumerate(questions):
            prompt = render(
                SCREENING_TEMPLATE,
                {
                    "data_definition": definition.free_text,
                    "document_body": doc.body,
                    "question": question.text,
                },
            )
            if doc.doc_id in source_points:
                answers = ["yes"] * PILOT_K
            elif "ions/cm2" in doc.body and question.derived_from == "variable:dose":
                # dose reported as fluence only: two stray yes runs stay
                # below the consensus threshold
                answers = ["yes", "no", "no", "no", "yes", "no", "no", "no", "no", "no"]
            elif "ions/cm2" in doc.body:
                answers = ["yes"] * PILOT_K
            elif q_index == 0:
                answers = ["no", "Unclear.", "no", "no", "no", "yes", "no", "no", "no", "no"]
            else:
                answers = ["no"] * PILOT_K
            responses[prompt_hash(prompt)] = answers

    for doc in documents:
        points = source_points.get(doc.doc_id)
        if points is None:
            continue
        prompt = render(
            EXTRACTOR_TEMPLATE,
            {"data_definition": definition.free_text, "document_body": doc.body},
        )
        runs = []
        for run_index in range(PILOT_K):
            lines = [
                _point_line(t, d, s, run_index)
                for t, d, s, score in points
                if run_index < score
            ]
            if doc.doc_id == "w-he-003":
                lines.extend(_NOISE_RUNS.get(run_index, []))
            runs.append("\n".join(lines) if lines else "NO_DATA")
        responses[prompt_hash(prompt)] = runs

    selection_prompt = render(
        SELECTION_TEMPLATE,
        {"query": pilot_query().text, "models": "linear, exponential, logistic"},
    )
    responses[prompt_hash(selection_prompt)] = [
        "linear, exponential", "linear and exponential",
    ]
    return responses


def build_pilot_backend(documents: list[Document]) -> ScriptedBackend:
    """Backend replaying the pilot run; the only unscripted prompt is the
    final response composition, which falls back to the canned summary."""
    return ScriptedBackend(
        responses=build_pilot_responses(documents),
        fallback=PILOT_RESPONSE_TEXT,
    )


def write_pilot_fixture(root: str | Path) -> dict:
    """Materialize corpus + scripted-response fixture files under ``root``.
    Returns the paths, for wiring into a session config."""
    root = Path(root)
    corpus_dir = root / "corpus"
    build_pilot_corpus(corpus_dir)
    from .corpus import load_corpus

    documents, _ = load_corpus(corpus_dir)
    fixture = {
        "fallback": PILOT_RESPONSE_TEXT,
        "responses": build_pilot_responses(documents),
    }
    fixture_path = root / "responses.json"
    fixture_path.write_text(json.dumps(fixture, indent=1, sort_keys=True), encoding="utf-8")
    return {"corpus_dir": str(corpus_dir), "responses": str(fixture_path)}
