"""Report assembly: figures, equations, grounded response text, bundle.

The bundle written by ``assemble_report`` is one directory holding
``report.md`` (for humans), ``report.json`` (for machines) and
``figures/*.svg``. Everything in it is a pure function of its inputs: the
JSON is key-sorted, the figures carry no timestamps, and the generation
time is whatever the caller recorded when the run started, so replaying
persisted artifacts reproduces the bundle byte for byte.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gateway import CompletionRequest, PromptTemplate, SamplingConfig, render
from .modeling import (
    Dataset,
    FittedModel,
    FORM_EXPONENTIAL,
    FORM_LINEAR,
    FORM_LOGISTIC,
    detect_fit_anomaly,
    display_r_squared,
    predict,
)
from . import svgplot

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MAX_PROMPT_ROWS = 200
SURFACE_SAMPLES = 40

RESPONSE_TEMPLATE = PromptTemplate(
    template_id="response",
    text=(
        "A scientist asked: {{query}}\n\n"
        "Fitted models and their goodness of fit:\n{{models}}\n\n"
        "Dataset ({{row_count}} rows):\n{{dataset}}\n\n"
        "Write a concise answer to the question. Base every claim strictly on "
        "the dataset and fitted models shown above; do not bring in outside "
        "knowledge or speculate beyond them."
    ),
)


class ReportError(Exception):
    pass


def format_number(value: float) -> str:
    """Four significant digits, matching how equations are presented."""
    return f"{value:.4g}"


def equation_string(model: FittedModel) -> str:
    spec = model.spec
    named = model.named_params

    def terms(names):
        parts = []
        for name in names:
            coefficient = named[f"b_{name}" if spec.form != FORM_LINEAR else f"w_{name}"]
            parts.append(f"{format_number(coefficient)}*{name}")
        return " + ".join(parts)

    if spec.form == FORM_LINEAR:
        c = named["intercept"]
        sign = "+" if c >= 0 else "-"
        return f"{spec.target} = {terms(spec.predictors)} {sign} {format_number(abs(c))}"
    if spec.form == FORM_EXPONENTIAL:
        return (
            f"{spec.target} = {format_number(named['amplitude'])}"
            f"*exp({terms(spec.predictors)})"
        )
    if spec.form == FORM_LOGISTIC:
        c = named["offset"]
        sign = "+" if c >= 0 else "-"
        return (
            f"{spec.target} = {format_number(named['ceiling'])}"
            f" / (1 + exp(-({terms(spec.predictors)} {sign} {format_number(abs(c))})))"
        )
    raise ReportError(f"no equation format for {spec.form!r}")


# --- figures ------------------------------------------------------------------

def render_data_plots(data: Dataset) -> list[tuple[str, str]]:
    """One 2D scatter per (predictor, target) pair, plus one 3D scatter when
    the dataset has exactly two predictors. Returns (name, svg) pairs."""
    if len(data) == 0:
        raise ReportError("no data to plot")
    figures = []
    ys = list(data.targets)
    for index, predictor in enumerate(data.predictors):
        xs = [row[index] for row in data.rows]
        svg = svgplot.scatter_2d(
            xs, ys, predictor, data.target, f"{data.target} vs {predictor}"
        )
        figures.append((f"data_{predictor}", svg))
    if len(data.predictors) == 2:
        xs = [row[0] for row in data.rows]
        zs = [row[1] for row in data.rows]
        svg = svgplot.scatter_3d(
            xs, zs, ys,
            (data.predictors[0], data.predictors[1], data.target),
            f"{data.target} vs ({data.predictors[0]}, {data.predictors[1]})",
        )
        figures.append(("data_3d", svg))
    return figures


def _surface_grid(model: FittedModel, data: Dataset):
    (x0, x1) = svgplot.padded_range([row[0] for row in data.rows])
    (y0, y1) = svgplot.padded_range([row[1] for row in data.rows])
    xs = np.linspace(x0, x1, SURFACE_SAMPLES)
    ys = np.linspace(y0, y1, SURFACE_SAMPLES)
    grid = []
    for x in xs:
        points = np.column_stack([np.full(SURFACE_SAMPLES, x), ys])
        zs = predict(model.spec.form, np.asarray(model.params), points)
        grid.append([(float(x), float(y), float(z)) for y, z in zip(ys, zs)])
    return grid


def render_model_overlays(
    data: Dataset, fits: list[FittedModel]
) -> tuple[list[tuple[str, str]], list[str]]:
    """Each converged fit drawn over the matching scatter; non-converged fits
    are skipped with a note. 2-predictor fits render as a 40x40 wireframe
    surface in the 3D projection."""
    if not fits:
        raise ReportError("no fits to draw")
    figures = []
    notes = []
    for model in fits:
        if not model.converged:
            notes.append(f"overlay skipped for non-converged {model.spec.form} fit")
            continue
        name = f"fit_{model.spec.form}"
        if len(data.predictors) == 1:
            xs = [row[0] for row in data.rows]
            lo, hi = svgplot.padded_range(xs)
            grid = np.linspace(lo, hi, 120)
            curve_y = predict(model.spec.form, np.asarray(model.params), grid.reshape(-1, 1))
            svg = svgplot.scatter_2d(
                xs, list(data.targets), data.predictors[0], data.target,
                f"{model.spec.form} fit",
                curve=[(float(x), float(y)) for x, y in zip(grid, curve_y)],
            )
        elif len(data.predictors) == 2:
            svg = svgplot.scatter_3d(
                [row[0] for row in data.rows],
                [row[1] for row in data.rows],
                list(data.targets),
                (data.predictors[0], data.predictors[1], data.target),
                f"{model.spec.form} fit",
                surface=_surface_grid(model, data),
            )
        else:
            notes.append(
                f"overlay skipped for {model.spec.form}: more than two predictors"
            )
            continue
        figures.append((name, svg))
    return figures, notes


# --- response text ------------------------------------------------------------

def _dataset_table(data: Dataset) -> tuple[str, int, str | None]:
    header = " | ".join(list(data.predictors) + [data.target, "source", "score"])
    rows = []
    provenance = data.provenance or tuple(("?", "?") for _ in data.rows)
    for row, target, (doc_id, score) in zip(data.rows, data.targets, provenance):
        cells = [format_number(v) for v in row] + [format_number(target), doc_id, score]
        rows.append(" | ".join(cells))
    if len(rows) > MAX_PROMPT_ROWS:
        y = np.asarray(data.targets)
        summary = (
            f"[{len(rows)} rows summarized: {data.target} "
            f"mean={format_number(float(y.mean()))}, "
            f"min={format_number(float(y.min()))}, "
            f"max={format_number(float(y.max()))}]"
        )
        return summary, len(rows), "dataset too large for the prompt; summarized"
    return "\n".join([header] + rows), len(rows), None


def _models_block(fits: list[FittedModel]) -> str:
    lines = []
    for model in fits:
        lines.append(
            f"- {model.spec.form}: {equation_string(model)} "
            f"(R^2 = {format_number(display_r_squared(model))}"
            + (", did not converge)" if not model.converged else ")")
        )
    return "\n".join(lines)


def compose_response(
    backend,
    query_text: str,
    fits: list[FittedModel],
    data: Dataset,
    sampling: SamplingConfig | None = None,
) -> dict:
    """Prompt the model for a grounded answer; the prompt is archived next to
    the verbatim reply so the grounding can be audited."""
    anomalies = detect_fit_anomaly(fits)
    if len(anomalies) == len(fits):
        return {
            "text": None,
            "prompt": None,
            "note": "all fits anomalous; response generation skipped",
        }
    table, row_count, table_note = _dataset_table(data)
    prompt = render(
        RESPONSE_TEMPLATE,
        {
            "query": query_text,
            "models": _models_block(fits),
            "dataset": table,
            "row_count": str(row_count),
        },
    )
    sampling = sampling or SamplingConfig()
    try:
        reply = backend.complete(CompletionRequest(prompt, sampling.with_seed(0))).text
    except Exception as exc:
        log.warning("response backend failed: %s", exc)
        return {"text": None, "prompt": prompt, "note": f"response backend failed: {exc}"}
    return {"text": reply, "prompt": prompt, "note": table_note}


# --- bundle -------------------------------------------------------------------

@dataclass
class ReportInputs:
    query_text: str
    data: Dataset
    fits: list[FittedModel]
    response: dict = field(default_factory=dict)
    selection_warning: str | None = None
    generated_at: str = ""
    pending_review: int = 0


def build_report_dict(inputs: ReportInputs) -> dict:
    fits = inputs.fits
    anomalies = detect_fit_anomaly(fits) if fits else []
    notes = []
    if inputs.selection_warning:
        notes.append(inputs.selection_warning)
    if inputs.response.get("note"):
        notes.append(inputs.response["note"])
    if inputs.pending_review:
        notes.append(
            f"dataset pending review: {inputs.pending_review} flagged point(s) undecided"
        )
    if not fits:
        notes.append("no models fitted; data section only")
    for anomaly in anomalies:
        notes.append(
            f"fit anomaly ({anomaly['form']}): {', '.join(anomaly['reasons'])}; "
            "flagged for human review"
        )
    return {
        "schema_version": SCHEMA_VERSION,
        "query": inputs.query_text,
        "generated_at": inputs.generated_at,
        "dataset": inputs.data.to_dict(),
        "fits": [
            {
                **model.to_dict(),
                "equation": equation_string(model),
                "display_r_squared": display_r_squared(model),
            }
            for model in fits
        ],
        "anomalies": anomalies,
        "response_text": inputs.response.get("text"),
        "response_prompt": inputs.response.get("prompt"),
        "notes": notes,
    }


def report_json_bytes(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True, indent=1, allow_nan=False).encode("utf-8")


def _markdown(report: dict, figure_names: list[str]) -> str:
    lines = [
        "# Analysis report",
        "",
        f"Query: {report['query']}",
        "",
        f"Generated: {report['generated_at']}",
        "",
        "## Models",
        "",
    ]
    if report["fits"]:
        lines.append("| form | equation | R^2 | converged |")
        lines.append("| --- | --- | --- | --- |")
        for fit in report["fits"]:
            lines.append(
                f"| {fit['form']} | `{fit['equation']}` | "
                f"{format_number(fit['display_r_squared'])} | {fit['converged']} |"
            )
    else:
        lines.append("_No models fitted._")
    if report["response_text"]:
        lines += ["", "## Answer", "", report["response_text"]]
    if report["notes"]:
        lines += ["", "## Notes", ""]
        lines += [f"- {note}" for note in report["notes"]]
    lines += ["", "## Figures", ""]
    lines += [f"![{name}](figures/{name}.svg)" for name in figure_names]
    lines += ["", "## Dataset", ""]
    data = report["dataset"]
    header = list(data["predictors"]) + [data["target"], "source", "score"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + " --- |" * len(header))
    provenance = data["provenance"] or [["?", "?"]] * len(data["rows"])
    for row, target, (doc_id, score) in zip(data["rows"], data["targets"], provenance):
        cells = [format_number(v) for v in row] + [format_number(target), doc_id, str(score)]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def assemble_report(inputs: ReportInputs, out_dir: str | Path) -> dict:
    """Write the bundle and return the report dict."""
    out_dir = Path(out_dir)
    figures_dir = out_dir / "figures"
    figures_dir.mkdir(parents=True, exist_ok=True)

    overlay_notes: list[str] = []
    if len(inputs.data) == 0:
        figures = []
        overlay_notes.append("empty dataset: nothing to plot")
    else:
        figures = render_data_plots(inputs.data)
        if inputs.fits:
            overlays, notes = render_model_overlays(inputs.data, inputs.fits)
            figures += overlays
            overlay_notes.extend(notes)

    report = build_report_dict(inputs)
    report["notes"] = report["notes"] + overlay_notes
    report["figures"] = [name for name, _ in figures]

    for name, svg in figures:
        (figures_dir / f"{name}.svg").write_bytes(svg.encode("utf-8"))
    (out_dir / "report.json").write_bytes(report_json_bytes(report))
    (out_dir / "report.md").write_text(
        _markdown(report, report["figures"]), encoding="utf-8"
    )
    return report
