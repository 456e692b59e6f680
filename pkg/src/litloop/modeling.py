"""Model library, selection, fitting and evaluation.

Three functional forms are supported:

    linear       y = a1*x1 + ... + ap*xp + c
    exponential  y = A * exp(b1*x1 + ... + bp*xp)
    logistic     y = L / (1 + exp(-(b1*x1 + ... + bp*xp + c)))

The linear form is fitted by ordinary least squares on an orthogonal
decomposition; the nonlinear forms by Levenberg-Marquardt with analytic
Jacobians. Every fit reports R^2 = 1 - SS_res/SS_tot about the target mean,
computed on the same rows the fit used. Fits that go wrong do not crash:
they come back with ``converged=False`` and a diagnostic, and
``detect_fit_anomaly`` turns pathological results into review flags.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

import numpy as np

from .gateway import CompletionRequest, PromptTemplate, SamplingConfig, render

log = logging.getLogger(__name__)

FORM_LINEAR = "linear"
FORM_EXPONENTIAL = "exponential"
FORM_LOGISTIC = "logistic"
MODEL_LIBRARY = (FORM_LINEAR, FORM_EXPONENTIAL, FORM_LOGISTIC)

LM_INITIAL_DAMPING = 1e-3
LM_MAX_ITERATIONS = 200
LM_RELATIVE_TOLERANCE = 1e-10
_LOGIT_EPS = 1e-6

FLAG_ZERO_VARIANCE = "zero-variance target"
FLAG_NON_POSITIVE_R2 = "r_squared <= 0"
FLAG_NOT_CONVERGED = "did not converge"
FLAG_NON_FINITE = "non-finite parameters"


class FitError(Exception):
    pass


@dataclass(frozen=True)
class ModelSpec:
    form: str
    predictors: tuple[str, ...]
    target: str

    def __post_init__(self):
        if self.form not in MODEL_LIBRARY:
            raise FitError(f"unknown model form {self.form!r}")
        if not self.predictors:
            raise FitError("a model needs at least one predictor")

    @property
    def param_names(self) -> tuple[str, ...]:
        if self.form == FORM_LINEAR:
            return tuple(f"w_{p}" for p in self.predictors) + ("intercept",)
        if self.form == FORM_EXPONENTIAL:
            return ("amplitude",) + tuple(f"b_{p}" for p in self.predictors)
        return ("ceiling",) + tuple(f"b_{p}" for p in self.predictors) + ("offset",)

    def to_dict(self) -> dict:
        return {"form": self.form, "predictors": list(self.predictors), "target": self.target}

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelSpec":
        return cls(raw["form"], tuple(raw["predictors"]), raw["target"])


@dataclass(frozen=True)
class Dataset:
    """Fit-ready rows with per-row provenance.

    ``provenance`` holds one ``(doc_id, score_label)`` pair per row, where
    the score label is the ICS score or ``"human"`` for corrected points.
    """

    predictors: tuple[str, ...]
    target: str
    rows: tuple[tuple[float, ...], ...]
    targets: tuple[float, ...]
    provenance: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.predictors):
                raise FitError("row width does not match predictor schema")
            if any(v is None or not math.isfinite(v) for v in row):
                raise FitError("predictor values must be finite and non-null")
        if any(v is None or not math.isfinite(v) for v in self.targets):
            raise FitError("target values must be finite and non-null")
        if len(self.targets) != len(self.rows):
            raise FitError("row/target count mismatch")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def x(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=float).reshape(len(self.rows), len(self.predictors))

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.targets, dtype=float)

    def to_dict(self) -> dict:
        return {
            "predictors": list(self.predictors),
            "target": self.target,
            "rows": [list(r) for r in self.rows],
            "targets": list(self.targets),
            "provenance": [list(p) for p in self.provenance],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Dataset":
        return cls(
            predictors=tuple(raw["predictors"]),
            target=raw["target"],
            rows=tuple(tuple(r) for r in raw["rows"]),
            targets=tuple(raw["targets"]),
            provenance=tuple((d, str(s)) for d, s in raw.get("provenance", [])),
        )

    @classmethod
    def from_points(cls, points, predictors, target, score_label=None) -> "Dataset":
        rows, targets, provenance = [], [], []
        for point in points:
            rows.append(tuple(float(point.values[p]) for p in predictors))
            targets.append(float(point.values[target]))
            label = score_label(point) if score_label else str(point.score)
            provenance.append((point.doc_id, label))
        return cls(tuple(predictors), target, tuple(rows), tuple(targets), tuple(provenance))


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    params: tuple[float, ...]
    r_squared: float
    converged: bool
    iterations: int
    flags: tuple[str, ...] = ()

    @property
    def named_params(self) -> dict[str, float]:
        return dict(zip(self.spec.param_names, self.params))

    def to_dict(self) -> dict:
        return {
            "form": self.spec.form,
            "predictors": list(self.spec.predictors),
            "target": self.spec.target,
            "params": {k: _json_float(v) for k, v in self.named_params.items()},
            "r_squared": _json_float(self.r_squared),
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "FittedModel":
        spec = ModelSpec(raw["form"], tuple(raw["predictors"]), raw["target"])
        params = tuple(
            float("nan") if raw["params"][name] is None else float(raw["params"][name])
            for name in spec.param_names
        )
        r2 = raw["r_squared"]
        return cls(
            spec=spec,
            params=params,
            r_squared=float("nan") if r2 is None else float(r2),
            converged=raw["converged"],
            iterations=raw["iterations"],
            flags=tuple(raw.get("flags", [])),
        )


def _json_float(value: float):
    return float(value) if math.isfinite(value) else None


# --- model forms -----------------------------------------------------------

def predict(form: str, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if form == FORM_LINEAR:
        return x @ params[:-1] + params[-1]
    if form == FORM_EXPONENTIAL:
        return params[0] * np.exp(x @ params[1:])
    if form == FORM_LOGISTIC:
        z = x @ params[1:-1] + params[-1]
        return params[0] / (1.0 + np.exp(-z))
    raise FitError(f"unknown model form {form!r}")


def jacobian(form: str, params: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of the prediction with respect to the parameters,
    one row per data row, one column per parameter."""
    params = np.asarray(params, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n, p = x.shape
    if form == FORM_LINEAR:
        return np.column_stack([x, np.ones(n)])
    if form == FORM_EXPONENTIAL:
        e = np.exp(x @ params[1:])
        return np.column_stack([e] + [params[0] * e * x[:, j] for j in range(p)])
    if form == FORM_LOGISTIC:
        z = x @ params[1:-1] + params[-1]
        s = 1.0 / (1.0 + np.exp(-z))
        core = params[0] * s * (1.0 - s)
        return np.column_stack([s] + [core * x[:, j] for j in range(p)] + [core])
    raise FitError(f"unknown model form {form!r}")


# --- fitting ----------------------------------------------------------------

def fit_linear(data: Dataset, spec: ModelSpec) -> FittedModel:
    """Ordinary least squares through an orthogonal decomposition (SVD).

    Requires at least p+2 rows and a full-rank design; a rank-deficient
    design raises ``FitError`` naming the collinear predictors.
    """
    if spec.form != FORM_LINEAR:
        raise FitError("fit_linear only fits the linear form")
    p = len(spec.predictors)
    if len(data) < p + 2:
        raise FitError(f"need at least {p + 2} rows to fit {p} predictors, got {len(data)}")

    x, y = data.x, data.y
    design = np.column_stack([x, np.ones(len(data))])
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise FitError(
            "rank-deficient design; collinear predictors: "
            + ", ".join(_collinear_predictors(design, spec.predictors))
        )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    r2, flags = _r_squared_raw(y, design @ coef)
    return FittedModel(
        spec=spec,
        params=tuple(float(c) for c in coef),
        r_squared=r2,
        converged=True,
        iterations=1,
        flags=flags,
    )


def _collinear_predictors(design: np.ndarray, names: tuple[str, ...]) -> list[str]:
    offenders = []
    for j in range(len(names)):
        others = np.delete(design, j, axis=1)
        column = design[:, j]
        fitted, *_ = np.linalg.lstsq(others, column, rcond=None)
        if np.allclose(others @ fitted, column, atol=1e-10):
            offenders.append(names[j])
    return offenders or list(names)


def _initial_params(data: Dataset, spec: ModelSpec) -> np.ndarray:
    """Warm starts that make noiseless data an exact one-step solve.

    Exponential: OLS on ln(y) over positive rows, or a flat amplitude when
    too few rows are positive. Logistic: ceiling slightly above max(y) and
    OLS on the clipped logit.
    """
    x, y = data.x, data.y
    p = x.shape[1]
    design = np.column_stack([x, np.ones(len(y))])
    if spec.form == FORM_EXPONENTIAL:
        positive = y > 0
        if positive.sum() >= p + 2:
            coef, *_ = np.linalg.lstsq(design[positive], np.log(y[positive]), rcond=None)
            return np.concatenate([[np.exp(coef[-1])], coef[:-1]])
        return np.concatenate([[float(np.mean(y))], np.zeros(p)])
    if spec.form == FORM_LOGISTIC:
        ceiling = 1.05 * float(np.max(y)) if np.max(y) > 0 else 1.0
        ratio = np.clip(y / ceiling, _LOGIT_EPS, 1.0 - _LOGIT_EPS)
        logit = np.log(ratio / (1.0 - ratio))
        coef, *_ = np.linalg.lstsq(design, logit, rcond=None)
        return np.concatenate([[ceiling], coef[:-1], [coef[-1]]])
    raise FitError(f"no nonlinear initialization for form {spec.form!r}")


def fit_nonlinear(data: Dataset, spec: ModelSpec) -> FittedModel:
    """Levenberg-Marquardt minimization of squared residuals.

    Damping starts at 1e-3, halves on an accepted step and doubles on a
    rejected one. Converged when an accepted step improves the SSE by less
    than 1e-10 relative (or the gradient vanishes); capped at 200
    iterations. Non-finite residuals end the fit with ``converged=False``
    and a diagnostic flag instead of raising.
    """
    if spec.form not in (FORM_EXPONENTIAL, FORM_LOGISTIC):
        raise FitError("fit_nonlinear fits the exponential and logistic forms")
    n_params = len(spec.param_names)
    if len(data) < n_params + 1:
        raise FitError(f"need at least {n_params + 1} rows, got {len(data)}")

    x, y = data.x, data.y
    params = _initial_params(data, spec)
    flags: list[str] = []

    residual = predict(spec.form, params, x) - y
    if not np.all(np.isfinite(residual)):
        return _nonlinear_failure(spec, params, y, x, 0, FLAG_NON_FINITE)
    sse = float(residual @ residual)
    damping = LM_INITIAL_DAMPING
    converged = False
    iterations = 0

    for iterations in range(1, LM_MAX_ITERATIONS + 1):
        jac = jacobian(spec.form, params, x)
        if not np.all(np.isfinite(jac)):
            return _nonlinear_failure(spec, params, y, x, iterations, FLAG_NON_FINITE)
        gradient = jac.T @ residual
        if float(np.max(np.abs(gradient))) <= 1e-12 * max(1.0, sse):
            converged = True
            break
        normal = jac.T @ jac
        scale = np.diag(np.maximum(np.diag(normal), 1e-12))
        try:
            step = np.linalg.solve(normal + damping * scale, -gradient)
        except np.linalg.LinAlgError:
            damping *= 2.0
            continue
        candidate = params + step
        candidate_residual = predict(spec.form, candidate, x) - y
        if np.all(np.isfinite(candidate_residual)):
            candidate_sse = float(candidate_residual @ candidate_residual)
        else:
            candidate_sse = np.inf
        if candidate_sse < sse:
            relative_drop = (sse - candidate_sse) / max(sse, 1e-300)
            params, residual, sse = candidate, candidate_residual, candidate_sse
            damping *= 0.5
            if relative_drop < LM_RELATIVE_TOLERANCE:
                converged = True
                break
        else:
            damping *= 2.0
            if damping > 1e14:
                # steps rejected down to machine precision: we are pinned at
                # a minimum (e.g. an exactly-zero SSE), not failing to move
                converged = sse <= 1e-24 or float(np.max(np.abs(gradient))) < 1e-8
                break

    r2, r2_flags = _r_squared_raw(y, predict(spec.form, params, x))
    flags.extend(r2_flags)
    if not converged:
        flags.append(FLAG_NOT_CONVERGED)
    if not np.all(np.isfinite(params)):
        flags.append(FLAG_NON_FINITE)
        converged = False
    return FittedModel(
        spec=spec,
        params=tuple(float(v) for v in params),
        r_squared=r2,
        converged=converged,
        iterations=iterations,
        flags=tuple(flags),
    )


def _nonlinear_failure(spec, params, y, x, iterations, flag) -> FittedModel:
    prediction = predict(spec.form, params, x)
    if np.all(np.isfinite(prediction)):
        r2, _ = _r_squared_raw(y, prediction)
    else:
        r2 = float("nan")
    return FittedModel(
        spec=spec,
        params=tuple(float(v) for v in params),
        r_squared=r2,
        converged=False,
        iterations=iterations,
        flags=(flag, FLAG_NOT_CONVERGED),
    )


def fit(data: Dataset, spec: ModelSpec) -> FittedModel:
    if spec.form == FORM_LINEAR:
        return fit_linear(data, spec)
    return fit_nonlinear(data, spec)


# --- evaluation -------------------------------------------------------------

def _r_squared_raw(y: np.ndarray, prediction: np.ndarray) -> tuple[float, tuple[str, ...]]:
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        return 0.0, (FLAG_ZERO_VARIANCE,)
    ss_res = float(np.sum((y - prediction) ** 2))
    return 1.0 - ss_res / ss_tot, ()


def r_squared(data: Dataset, model: FittedModel) -> float:
    """1 - SS_res/SS_tot about the target mean. A zero-variance target
    yields 0 (the fit itself carries the zero-variance flag)."""
    value, _ = _r_squared_raw(data.y, predict(model.spec.form, np.asarray(model.params), data.x))
    return value


def display_r_squared(model: FittedModel) -> float:
    """Reported value: negatives clamp to 0 (the raw value stays on the
    model and feeds anomaly detection)."""
    if math.isnan(model.r_squared):
        return 0.0
    return max(0.0, model.r_squared)


def detect_fit_anomaly(fits: list[FittedModel]) -> list[dict]:
    """Flag fits a human should look at: non-positive R^2, non-convergence,
    or non-finite parameters."""
    if not fits:
        raise FitError("no fits to examine")
    anomalies = []
    for index, model in enumerate(fits):
        reasons = []
        if not all(math.isfinite(v) for v in model.params):
            reasons.append(FLAG_NON_FINITE)
        if not model.converged:
            reasons.append(FLAG_NOT_CONVERGED)
        if math.isnan(model.r_squared) or model.r_squared <= 0.0:
            reasons.append(FLAG_NON_POSITIVE_R2)
        if FLAG_ZERO_VARIANCE in model.flags:
            reasons.append(FLAG_ZERO_VARIANCE)
        if reasons:
            anomalies.append(
                {"index": index, "form": model.spec.form, "reasons": sorted(set(reasons))}
            )
    return anomalies


# --- model selection ---------------------------------------------------------

SELECTION_TEMPLATE = PromptTemplate(
    template_id="model_selection",
    text=(
        "A scientist asked: {{query}}\n"
        "Available model forms: {{models}}\n"
        "Choose the minimal set of forms that must be fitted to answer the\n"
        "question. Reply with the chosen form names separated by commas."
    ),
)


@dataclass(frozen=True)
class ModelSelection:
    specs: tuple[ModelSpec, ...]
    warning: str | None
    raw_reply: str


def select_models(
    backend,
    query_text: str,
    predictors: tuple[str, ...],
    target: str,
    library: tuple[str, ...] = MODEL_LIBRARY,
    sampling: SamplingConfig | None = None,
) -> ModelSelection:
    """Ask the model which forms to fit; parse strictly against the library.

    An empty or garbled reply falls back to the full library with a warning
    rather than failing the run.
    """
    sampling = sampling or SamplingConfig()
    prompt = render(
        SELECTION_TEMPLATE, {"query": query_text, "models": ", ".join(library)}
    )
    try:
        reply = backend.complete(CompletionRequest(prompt, sampling.with_seed(0))).text
    except Exception as exc:
        log.warning("model selection backend failed (%s); using full library", exc)
        reply = ""

    tokens = re.findall(r"[a-z]+", reply.lower())
    chosen = [form for form in library if form in tokens]
    warning = None
    if not chosen:
        chosen = list(library)
        warning = f"model selection reply unusable ({reply!r}); fitted the full library"
        log.warning(warning)
    specs = tuple(ModelSpec(form, predictors, target) for form in chosen)
    return ModelSelection(specs=specs, warning=warning, raw_reply=reply)
