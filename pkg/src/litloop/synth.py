"""Synthetic closed-loop evaluation harness.

Generates fictional materials whose hardness follows a known functional form
of forging temperature and tempering time, embeds the sampled points into
mini-documents written in a bank of templated styles, runs the pipeline over
each material's corpus with a faithful scripted backend, and scores the
result against the ground truth: extraction recall/precision, untargeted
filter accuracy, form-selection correctness, and R^2 against both the noisy
points and the true generating function. Ablation variants re-run the same
corpora with the filter stage and/or consensus scoring disabled, optionally
with seeded hallucination injection, to measure what each defense layer
contributes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .consensus import (
    ConsensusPolicy,
    DISPOSITION_ACCEPTED,
    ScoredPoint,
    score_batch,
)
from .corpus import DataDefinition, Document, ScientificQuery, VariableSpec
from .extraction import EXTRACTOR_TEMPLATE, extract_corpus
from .gateway import (
    HallucinationConfig,
    ScriptedBackend,
    prompt_hash,
    render,
)
from .modeling import (
    Dataset,
    FORM_EXPONENTIAL,
    FORM_LINEAR,
    FORM_LOGISTIC,
    MODEL_LIBRARY,
    SELECTION_TEMPLATE,
    fit as fit_model,
    predict,
    select_models,
)
from .screening import SCREENING_TEMPLATE, generate_questions, screen_corpus

log = logging.getLogger(__name__)

FORM_POWER = "power"  # outside the library on purpose
GENERATOR_FORMS = (FORM_LINEAR, FORM_EXPONENTIAL, FORM_LOGISTIC, FORM_POWER)

MATERIAL_NAMES = (
    "drakorium", "aetherium", "veltrium", "zephyrite",
    "mornadium", "kelvarite", "thaloria", "ubrenium",
)

SYNTH_K = 4
SYNTH_FILTER_BELOW = 4  # scores below k are filtered; no flag band
SYNTH_RESPONSE_TEXT = "See the fitted models above for the relationship."

TEMPERATURE_GRID = (500.0, 625.0, 750.0, 875.0, 1000.0)
TIME_GRID = (2.0, 8.0, 14.0, 20.0)

# parameter ranges per form (uniform draws)
PARAM_RANGES = {
    FORM_LINEAR: {"w_temperature": (0.001, 0.02), "w_time": (0.05, 0.3),
                  "intercept": (0.5, 3.0)},
    FORM_EXPONENTIAL: {"amplitude": (1.0, 2.5), "b_temperature": (0.0012, 0.002),
                       "b_time": (0.03, 0.07)},
    FORM_LOGISTIC: {"ceiling": (8.0, 14.0), "b_temperature": (0.006, 0.012),
                    "b_time": (0.1, 0.25), "offset": (-8.0, -5.5)},
    FORM_POWER: {"a": (0.05, 0.2), "b": (0.4, 0.8), "c": (0.2, 0.5)},
}


@dataclass(frozen=True)
class GroundTruth:
    material: str
    form: str
    params: dict[str, float]
    noise: float
    seed: int
    points: tuple[tuple[float, float, float], ...]  # (temperature, time, hardness)

    def true_value(self, temperature: float, time: float) -> float:
        return _evaluate_form(self.form, self.params, temperature, time)


@dataclass(frozen=True)
class SyntheticDoc:
    document: Document
    label: str  # targeted-with-data | targeted-no-data | unrelated
    material: str
    embedded: tuple[tuple[float, float, float], ...] = ()


@dataclass
class EvalResult:
    material: str
    variant: str
    true_form: str
    selected_form: str | None
    form_correct: bool | None
    recall: float
    precision: float
    filter_accuracy: float
    r2_noisy: float | None
    r2_truth: float | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _evaluate_form(form: str, params: dict[str, float], temperature, time):
    temperature = np.asarray(temperature, dtype=float)
    time = np.asarray(time, dtype=float)
    if form == FORM_LINEAR:
        return (params["w_temperature"] * temperature + params["w_time"] * time
                + params["intercept"])
    if form == FORM_EXPONENTIAL:
        return params["amplitude"] * np.exp(
            params["b_temperature"] * temperature + params["b_time"] * time
        )
    if form == FORM_LOGISTIC:
        z = (params["b_temperature"] * temperature + params["b_time"] * time
             + params["offset"])
        return params["ceiling"] / (1.0 + np.exp(-z))
    if form == FORM_POWER:
        return params["a"] * temperature ** params["b"] * time ** params["c"]
    raise ValueError(f"unknown generator form {form!r}")


def generate_material(seed: int, form: str, noise: float,
                      material: str | None = None) -> GroundTruth:
    """Draw parameters from the documented ranges and sample the grid with
    multiplicative Gaussian noise. Fully determined by (seed, form, noise)."""
    if form not in GENERATOR_FORMS:
        raise ValueError(f"form must be one of {GENERATOR_FORMS}")
    rng = np.random.default_rng(seed)
    params = {
        name: float(rng.uniform(low, high))
        for name, (low, high) in PARAM_RANGES[form].items()
    }
    material = material or MATERIAL_NAMES[seed % len(MATERIAL_NAMES)]
    points = []
    for temperature in TEMPERATURE_GRID:
        for time in TIME_GRID:
            clean = float(_evaluate_form(form, params, temperature, time))
            noisy = clean * (1.0 + float(rng.normal(0.0, noise))) if noise > 0 else clean
            points.append((temperature, time, round(noisy, 3)))
    return GroundTruth(
        material=material, form=form, params=params, noise=noise, seed=seed,
        points=tuple(points),
    )


def synth_definition(material: str) -> DataDefinition:
    return DataDefinition(
        variables=(
            VariableSpec(name="temperature", role="independent", required=True,
                         canonical_unit="C", accepted_units={"C": (1.0, 0.0)},
                         precision=2),
            VariableSpec(name="time", role="independent", required=True,
                         canonical_unit="h", accepted_units={"h": (1.0, 0.0)},
                         precision=2),
            VariableSpec(name="hardness", role="dependent", required=True,
                         canonical_unit="HV", accepted_units={"HV": (1.0, 0.0)},
                         precision=4),
        ),
        filter_conditions=(
            f"Does the document report measured hardness values for {material}?",
        ),
        free_text=(
            f"Collect hardness measurements for the material {material}. A valid "
            "data point requires the forging temperature in Celsius, the "
            "tempering time in hours, and the measured hardness (HV)."
        ),
    )


def synth_query() -> ScientificQuery:
    return ScientificQuery(
        "Determine the type of relationship between hardness, forging "
        "temperature, and tempering time."
    )


def synth_policy() -> ConsensusPolicy:
    return ConsensusPolicy(k=SYNTH_K, filter_below=SYNTH_FILTER_BELOW,
                           flag_upto=SYNTH_FILTER_BELOW - 1)


_TARGETED_TEMPLATES = (
    "At a forging temperature of {T} C and a tempering time of {t} hours, the "
    "measured hardness of {M} was {H} HV.",
    "Specimens of {M} forged at {T} C and tempered for {t} h reached a hardness "
    "of {H}.",
    "We report a hardness value of {H} for {M} (forging temperature {T} C, "
    "tempering time {t} h).",
    "Processing conditions and results for {M}:\nforging temperature: {T} C\n"
    "tempering time: {t} h\nhardness: {H} HV",
    "Hardness testing of {M} yielded {H} HV after forging at {T} degrees "
    "Celsius followed by a {t}-hour temper.",
    "The alloy {M} attained a hardness of {H} HV when forged at {T} C and "
    "tempered {t} hours.",
    "Route: forge at {T} C, temper {t} h. Outcome for {M}: hardness {H} HV.",
    "{M} exhibits a hardness of {H} HV under condition ({T} C forge, {t} h "
    "temper).",
    "After tempering for {t} hours following the {T} C forging step, the "
    "hardness of {M} averaged {H} HV.",
)

_UNTARGETED_TEMPLATES = (
    # material mentioned, no hardness data
    "The grain structure of {M} after forging is examined qualitatively. "
    "Mechanical properties such as hardness were not measured in this study.",
    "This review discusses processing routes for {M}; no quantitative hardness "
    "values are reported.",
    # unrelated experiments on other materials
    "Corrosion of bronze couplings in seawater was studied at {T} C; mass loss "
    "followed a parabolic law.",
    "Fatigue life of aluminium 6061 specimens was characterized; hardness of "
    "that alloy averaged {H} HV, unrelated to {M}.",
    "Thermal conductivity of quartzite composites was measured between {T} C "
    "and ambient.",
)


def generate_corpus(
    truths: list[GroundTruth],
    targeted: int = 20,
    untargeted: int = 5,
) -> list[SyntheticDoc]:
    """Template-sourced documents: ``targeted`` papers per material, each
    embedding one ground-truth point in a varied style, plus ``untargeted``
    papers that either mention the material without data or describe other
    materials."""
    docs: list[SyntheticDoc] = []
    for truth in truths:
        for index in range(targeted):
            temperature, time, hardness = truth.points[index % len(truth.points)]
            style = _TARGETED_TEMPLATES[index % len(_TARGETED_TEMPLATES)]
            body = (
                f"A study of {truth.material}.\n\n"
                + style.format(M=truth.material, T=temperature, t=time, H=hardness)
                + "\nAll samples were prepared by the standard route."
            )
            doc_id = f"{truth.material}-t{index:03d}"
            docs.append(SyntheticDoc(
                document=Document(doc_id=doc_id, title=f"{truth.material} study {index}",
                                  body=body, source_path="synthetic"),
                label="targeted-with-data",
                material=truth.material,
                embedded=((temperature, time, hardness),),
            ))
        for index in range(untargeted):
            style = _UNTARGETED_TEMPLATES[index % len(_UNTARGETED_TEMPLATES)]
            body = style.format(M=truth.material, T=300 + 40 * index, H=60 + index)
            label = "targeted-no-data" if index % len(_UNTARGETED_TEMPLATES) < 2 else "unrelated"
            doc_id = f"{truth.material}-u{index:03d}"
            docs.append(SyntheticDoc(
                document=Document(doc_id=doc_id, title=f"{truth.material} aside {index}",
                                  body=body, source_path="synthetic"),
                label=label,
                material=truth.material,
                embedded=(),
            ))
    return docs


def faithful_backend(
    docs: list[SyntheticDoc],
    definition: DataDefinition,
    hallucination: HallucinationConfig | None = None,
) -> ScriptedBackend:
    """A scripted backend that behaves like a perfectly reliable model:
    screening answers reflect the document labels and extraction reproduces
    exactly the embedded points, every run."""
    responses: dict[str, list[str]] = {}
    questions = generate_questions(definition)
    for synthetic in docs:
        answer = "yes" if synthetic.label == "targeted-with-data" else "no"
        for question in questions:
            prompt = render(SCREENING_TEMPLATE, {
                "data_definition": definition.free_text,
                "document_body": synthetic.document.body,
                "question": question.text,
            })
            responses[prompt_hash(prompt)] = [answer]
        prompt = render(EXTRACTOR_TEMPLATE, {
            "data_definition": definition.free_text,
            "document_body": synthetic.document.body,
        })
        if synthetic.embedded:
            lines = "\n".join(
                f"temperature={temperature} C; time={time} h; hardness={hardness} HV"
                for temperature, time, hardness in synthetic.embedded
            )
            responses[prompt_hash(prompt)] = [lines]
        else:
            responses[prompt_hash(prompt)] = ["NO_DATA"]

    selection_prompt = render(SELECTION_TEMPLATE, {
        "query": synth_query().text,
        "models": ", ".join(MODEL_LIBRARY),
    })
    responses[prompt_hash(selection_prompt)] = ["linear, exponential, logistic"]
    return ScriptedBackend(responses, fallback=SYNTH_RESPONSE_TEXT,
                           hallucination=hallucination)


@dataclass
class MaterialRun:
    material: str
    kept_ids: list[str]
    scored: list[ScoredPoint]
    dataset: Dataset
    selected_form: str | None
    fits: list
    extraction_calls: int


def run_material(
    truth: GroundTruth,
    docs: list[SyntheticDoc],
    backend: ScriptedBackend,
    policy: ConsensusPolicy | None = None,
    use_filter: bool = True,
    use_ics: bool = True,
    max_workers: int = 4,
) -> MaterialRun:
    """One pipeline pass over one material's corpus, with the filter stage
    and consensus scoring individually switchable for ablations."""
    policy = policy or synth_policy()
    definition = synth_definition(truth.material)
    documents = sorted((d.document for d in docs), key=lambda d: d.doc_id)

    if use_filter:
        verdicts = screen_corpus(backend, documents, definition, policy,
                                 max_workers=max_workers)
        kept_ids = [v.doc_id for v in verdicts if v.kept]
    else:
        kept_ids = [d.doc_id for d in documents]
    kept_docs = [d for d in documents if d.doc_id in set(kept_ids)]

    calls_before = backend.calls
    batches = extract_corpus(backend, kept_docs, definition, policy.k,
                             max_workers=max_workers)
    extraction_calls = backend.calls - calls_before

    scored: list[ScoredPoint] = []
    for batch in batches:
        if use_ics:
            scored.extend(score_batch(batch, policy))
        else:
            # no consensus filtering: every distinct extracted point counts
            relaxed = ConsensusPolicy(k=policy.k, filter_below=1, flag_upto=0)
            scored.extend(score_batch(batch, relaxed))

    usable = [p for p in scored
              if p.disposition in (DISPOSITION_ACCEPTED,)]
    dataset = Dataset.from_points(usable, ("temperature", "time"), "hardness") \
        if usable else Dataset(("temperature", "time"), "hardness", (), ())

    selected_form = None
    fits = []
    if len(dataset) >= 6:
        selection = select_models(backend, synth_query().text,
                                  dataset.predictors, dataset.target)
        fits = [fit_model(dataset, spec) for spec in selection.specs]
        best = best_fit(fits)
        if best is not None:
            selected_form = best.spec.form
    return MaterialRun(
        material=truth.material,
        kept_ids=kept_ids,
        scored=scored,
        dataset=dataset,
        selected_form=selected_form,
        fits=fits,
        extraction_calls=extraction_calls,
    )


PARSIMONY_PENALTY = 0.015


def best_fit(fits):
    """Best converged fit with a parsimony tiebreak: a form with extra
    parameters must beat a simpler one by 0.015 R^2 per parameter, because
    the logistic family contains the exponential (and near-linear shapes) in
    the limit and would otherwise win every noisy comparison by overfit."""
    converged = [f for f in fits if f.converged]
    if not converged:
        return None
    fewest = min(len(f.params) for f in converged)
    return max(
        converged,
        key=lambda f: f.r_squared - PARSIMONY_PENALTY * (len(f.params) - fewest),
    )


def evaluate(run: MaterialRun, truth: GroundTruth,
             docs: list[SyntheticDoc], variant: str = "full") -> EvalResult:
    """Score one material run against its ground truth."""
    embedded = {point for d in docs for point in d.embedded}
    dataset_points = {
        (row[0], row[1], target)
        for row, target in zip(run.dataset.rows, run.dataset.targets)
    }
    recovered = embedded & dataset_points
    recall = len(recovered) / len(embedded) if embedded else 1.0
    precision = (
        len(recovered) / len(dataset_points) if dataset_points else 1.0
    )

    untargeted_ids = {d.document.doc_id for d in docs
                      if d.label != "targeted-with-data"}
    contributors = {
        doc_id for doc_id, _ in run.dataset.provenance
    }
    excluded = sum(1 for doc_id in untargeted_ids if doc_id not in contributors)
    filter_accuracy = excluded / len(untargeted_ids) if untargeted_ids else 1.0

    form_correct: bool | None
    if truth.form in MODEL_LIBRARY:
        form_correct = run.selected_form == truth.form
    else:
        form_correct = None  # no library form is true; best-available is fine

    r2_noisy = None
    r2_truth = None
    best = best_fit(run.fits)
    if best is not None:
        r2_noisy = best.r_squared
        r2_truth = _r2_against_truth(best, truth)
    return EvalResult(
        material=truth.material,
        variant=variant,
        true_form=truth.form,
        selected_form=run.selected_form,
        form_correct=form_correct,
        recall=recall,
        precision=precision,
        filter_accuracy=filter_accuracy,
        r2_noisy=r2_noisy,
        r2_truth=r2_truth,
    )


def _r2_against_truth(model, truth: GroundTruth, samples: int = 25) -> float:
    temperatures = np.linspace(TEMPERATURE_GRID[0], TEMPERATURE_GRID[-1], samples)
    times = np.linspace(TIME_GRID[0], TIME_GRID[-1], samples)
    tt, uu = np.meshgrid(temperatures, times)
    grid = np.column_stack([tt.ravel(), uu.ravel()])
    true_y = _evaluate_form(truth.form, truth.params, grid[:, 0], grid[:, 1])
    predicted = predict(model.spec.form, np.asarray(model.params), grid)
    ss_tot = float(np.sum((true_y - true_y.mean()) ** 2))
    if ss_tot == 0:
        return 0.0
    return 1.0 - float(np.sum((true_y - predicted) ** 2)) / ss_tot


ABLATION_VARIANTS = {
    "full": {"use_filter": True, "use_ics": True},
    "no-filter": {"use_filter": False, "use_ics": True},
    "no-ics": {"use_filter": True, "use_ics": False},
    "neither": {"use_filter": False, "use_ics": False},
}


@dataclass
class SynthConfig:
    materials: int = 8
    targeted: int = 20
    untargeted: int = 5
    seed: int = 7
    noise: float = 0.05
    hallucination_rate: float = 0.0
    variants: tuple[str, ...] = ("full",)


def assign_forms(count: int) -> list[str]:
    """Cycle the generator forms so every run covers the whole library plus
    the out-of-library power form."""
    return [GENERATOR_FORMS[i % len(GENERATOR_FORMS)] for i in range(count)]


def run_synth_eval(config: SynthConfig) -> dict:
    """Full harness: generate, run every requested variant on identical
    corpora and seeds, evaluate, aggregate."""
    forms = assign_forms(config.materials)
    truths = [
        generate_material(config.seed + index, form, config.noise,
                          material=MATERIAL_NAMES[index % len(MATERIAL_NAMES)])
        for index, form in enumerate(forms)
    ]
    corpus = generate_corpus(truths, config.targeted, config.untargeted)
    by_material = {}
    for synthetic in corpus:
        by_material.setdefault(synthetic.material, []).append(synthetic)

    results: list[EvalResult] = []
    for variant in config.variants:
        toggles = ABLATION_VARIANTS[variant]
        for truth in truths:
            docs = by_material[truth.material]
            hallucination = (
                HallucinationConfig(rate=config.hallucination_rate,
                                    seed=config.seed)
                if config.hallucination_rate > 0 else None
            )
            backend = faithful_backend(docs, synth_definition(truth.material),
                                       hallucination)
            run = run_material(truth, docs, backend, **toggles)
            results.append(evaluate(run, truth, docs, variant=variant))

    return {
        "config": dict(
            materials=config.materials, targeted=config.targeted,
            untargeted=config.untargeted, seed=config.seed, noise=config.noise,
            hallucination_rate=config.hallucination_rate,
            variants=list(config.variants),
        ),
        "results": [r.to_dict() for r in results],
        "aggregates": aggregate(results),
    }


def aggregate(results: list[EvalResult]) -> dict:
    out = {}
    for variant in sorted({r.variant for r in results}):
        subset = [r for r in results if r.variant == variant]
        decided = [r for r in subset if r.form_correct is not None]
        noisy = [r.r2_noisy for r in subset if r.r2_noisy is not None]
        truthy = [r.r2_truth for r in subset if r.r2_truth is not None]
        out[variant] = {
            "recall_mean": float(np.mean([r.recall for r in subset])),
            "precision_mean": float(np.mean([r.precision for r in subset])),
            "filter_accuracy_mean": float(np.mean([r.filter_accuracy for r in subset])),
            "form_correct_fraction": (
                float(np.mean([r.form_correct for r in decided])) if decided else None
            ),
            "r2_noisy_mean": float(np.mean(noisy)) if noisy else None,
            "r2_noisy_std": float(np.std(noisy)) if noisy else None,
            "r2_truth_mean": float(np.mean(truthy)) if truthy else None,
            "r2_truth_std": float(np.std(truthy)) if truthy else None,
        }
    return out


def summary_markdown(payload: dict) -> str:
    lines = [
        "# Synthetic evaluation",
        "",
        "| variant | recall | precision | filter acc | form correct | R2 noisy | R2 truth |",
        "| --- | --- | --- | --- | --- | --- | --- |",
    ]
    for variant, agg in payload["aggregates"].items():
        def cell(value):
            return "-" if value is None else f"{value:.3f}"
        lines.append(
            f"| {variant} | {cell(agg['recall_mean'])} | {cell(agg['precision_mean'])} "
            f"| {cell(agg['filter_accuracy_mean'])} | {cell(agg['form_correct_fraction'])} "
            f"| {cell(agg['r2_noisy_mean'])} | {cell(agg['r2_truth_mean'])} |"
        )
    return "\n".join(lines) + "\n"


def write_outputs(payload: dict, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8"
    )
    (out_dir / "summary.md").write_text(summary_markdown(payload), encoding="utf-8")
