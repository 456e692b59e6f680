"""Fitting engine tests.

The nonlinear checks follow an oracle-first pattern: expected values come
from independent constructions (data generated from known parameters,
central finite differences for the Jacobians, algebraic identities for the
OLS properties), never from the code under test.
"""

import math

import numpy as np
import pytest

from litloop.gateway import ScriptedBackend, prompt_hash, render
from litloop.modeling import (
    Dataset,
    FitError,
    FittedModel,
    MODEL_LIBRARY,
    ModelSpec,
    SELECTION_TEMPLATE,
    detect_fit_anomaly,
    display_r_squared,
    fit_linear,
    fit_nonlinear,
    jacobian,
    predict,
    r_squared,
    select_models,
)
from litloop.pilot import pilot_dataset

LIN2 = ModelSpec("linear", ("t", "d"), "h")
EXP2 = ModelSpec("exponential", ("t", "d"), "h")
LOG2 = ModelSpec("logistic", ("t", "d"), "h")


def dataset(rows, targets, predictors=("t", "d"), target="h"):
    return Dataset(
        predictors=predictors,
        target=target,
        rows=tuple(tuple(map(float, r)) for r in rows),
        targets=tuple(map(float, targets)),
    )


def one_predictor(xs, ys):
    return dataset([(x,) for x in xs], ys, predictors=("x",))


class TestFitLinear:
    def test_reference_dataset_matches_published_fit(self):
        data = pilot_dataset()
        model = fit_linear(data, ModelSpec("linear", data.predictors, data.target))
        expected = (0.0039, 0.5179, -0.0759)
        for got, want in zip(model.params, expected):
            assert abs(got / want - 1) < 0.05
        assert abs(model.r_squared - 0.503) < 0.02
        assert model.converged

    def test_noiseless_line_recovered_exactly(self):
        data = one_predictor(range(10), [2 * x for x in range(10)])
        model = fit_linear(data, ModelSpec("linear", ("x",), "h"))
        assert model.params[0] == pytest.approx(2.0, abs=1e-12)
        assert model.params[1] == pytest.approx(0.0, abs=1e-12)
        assert model.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_constant_target_zero_variance_convention(self):
        data = one_predictor([1, 2, 3, 4], [5, 5, 5, 5])
        model = fit_linear(data, ModelSpec("linear", ("x",), "h"))
        assert model.params[0] == pytest.approx(0.0, abs=1e-12)
        assert model.params[1] == pytest.approx(5.0, abs=1e-12)
        assert model.r_squared == 0.0
        assert "zero-variance target" in model.flags

    def test_too_few_rows_rejected(self):
        with pytest.raises(FitError, match="at least 4 rows"):
            fit_linear(dataset([(1, 1), (2, 2), (3, 3)], [1, 2, 3]), LIN2)

    def test_collinear_design_names_offenders(self):
        rows = [(x, 2 * x) for x in range(6)]
        with pytest.raises(FitError, match="collinear"):
            fit_linear(dataset(rows, range(6)), LIN2)

    def test_residuals_orthogonal_to_design(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(0, 10, size=(40, 2))
        y = 1.5 * x[:, 0] - 0.7 * x[:, 1] + 3 + rng.normal(0, 2, 40)
        data = dataset(x.tolist(), y.tolist())
        model = fit_linear(data, LIN2)
        residuals = y - predict("linear", np.array(model.params), x)
        assert abs(residuals.sum()) < 1e-8
        for j in range(2):
            assert abs(residuals @ x[:, j]) < 1e-8


class TestFitNonlinear:
    def test_reference_dataset_matches_published_exponential(self):
        data = pilot_dataset()
        model = fit_nonlinear(data, ModelSpec("exponential", data.predictors, data.target))
        expected = (0.3998, 0.0019, 0.4147)
        for got, want in zip(model.params, expected):
            assert abs(got / want - 1) < 0.10
        assert abs(model.r_squared - 0.695) < 0.02
        assert model.converged

    def test_noiseless_exponential_recovery(self):
        xs = np.linspace(0.1, 3.0, 25)
        ys = 2.0 * np.exp(0.5 * xs)
        model = fit_nonlinear(one_predictor(xs, ys), ModelSpec("exponential", ("x",), "h"))
        assert abs(model.params[0] - 2.0) < 1e-6
        assert abs(model.params[1] - 0.5) < 1e-6
        assert model.r_squared == pytest.approx(1.0, abs=1e-9)
        assert model.converged

    def test_noiseless_logistic_recovery(self):
        xs = np.linspace(0.0, 6.0, 30)
        ys = 8.0 / (1 + np.exp(-(1.2 * xs - 3.0)))
        model = fit_nonlinear(one_predictor(xs, ys), ModelSpec("logistic", ("x",), "h"))
        assert abs(model.params[0] - 8.0) < 1e-6
        assert abs(model.params[1] - 1.2) < 1e-6
        assert abs(model.params[2] + 3.0) < 1e-6
        assert model.converged

    def test_log_linear_init_is_exact_on_noiseless_positive_data(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 2, size=(20, 2))
        y = 1.7 * np.exp(0.3 * x[:, 0] - 0.6 * x[:, 1])
        model = fit_nonlinear(dataset(x.tolist(), y.tolist()), EXP2)
        assert model.r_squared == pytest.approx(1.0, abs=1e-9)

    def test_degenerate_identical_rows_flagged_not_crashing(self):
        data = dataset([(1, 1)] * 6, [2] * 6)
        model = fit_nonlinear(data, EXP2)
        assert model.converged is False or "zero-variance target" in model.flags
        assert isinstance(model.r_squared, float)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0, 2, size=(30, 2))
        y = 1.3 * np.exp(0.4 * x[:, 0] + 0.2 * x[:, 1]) * (1 + rng.normal(0, 0.05, 30))
        base = fit_nonlinear(dataset(x.tolist(), y.tolist()), EXP2)
        order = rng.permutation(30)
        permuted = fit_nonlinear(dataset(x[order].tolist(), y[order].tolist()), EXP2)
        for a, b in zip(base.params, permuted.params):
            assert abs(a - b) < 1e-6

    def test_too_few_rows_rejected(self):
        with pytest.raises(FitError, match="at least 4 rows"):
            fit_nonlinear(dataset([(1, 2), (2, 3), (3, 1)], [1, 2, 3]), EXP2)


class TestJacobians:
    FORMS = {
        "linear": (17, lambda rng: rng.uniform(-2, 2, 3)),
        "exponential": (18, lambda rng: np.concatenate([[rng.uniform(0.5, 3)],
                                                        rng.uniform(-0.8, 0.8, 2)])),
        "logistic": (19, lambda rng: np.concatenate([[rng.uniform(2, 10)],
                                                     rng.uniform(-1, 1, 2),
                                                     [rng.uniform(-2, 2)]])),
    }

    @staticmethod
    def finite_difference(form, params, x):
        grads = np.empty((x.shape[0], len(params)))
        for j in range(len(params)):
            delta = np.zeros_like(params)
            delta[j] = 1e-6 * max(1.0, abs(params[j]))
            grads[:, j] = (
                predict(form, params + delta, x) - predict(form, params - delta, x)
            ) / (2 * delta[j])
        return grads

    @staticmethod
    def relative_error(analytic, numeric):
        # the central-difference estimate itself carries ~1e-10 absolute
        # roundoff noise, so entries far below the matrix scale cannot be
        # compared point-relative; floor the denominator at 1e-3 of the scale
        floor = 1e-3 * max(1.0, float(np.max(np.abs(numeric))))
        scale = np.maximum(np.maximum(np.abs(numeric), np.abs(analytic)), floor)
        return float(np.max(np.abs(analytic - numeric) / scale))

    @pytest.mark.parametrize("form", ["linear", "exponential", "logistic"])
    def test_analytic_matches_central_differences_100_points(self, form):
        seed, sampler = self.FORMS[form]
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(100):
            x = rng.uniform(0, 3, size=(12, 2))
            params = sampler(rng)
            analytic = jacobian(form, params, x)
            numeric = self.finite_difference(form, params, x)
            worst = max(worst, self.relative_error(analytic, numeric))
        assert worst < 1e-6


class TestRSquared:
    def test_zero_residuals_give_one(self):
        data = one_predictor([1, 2, 3, 4], [2, 4, 6, 8])
        model = fit_linear(data, ModelSpec("linear", ("x",), "h"))
        assert r_squared(data, model) == pytest.approx(1.0, abs=1e-12)

    def test_mean_prediction_gives_zero(self):
        data = one_predictor([1, 2, 3, 4], [1, 3, 3, 5])
        mean_model = FittedModel(
            spec=ModelSpec("linear", ("x",), "h"),
            params=(0.0, 3.0),  # predicts the mean everywhere
            r_squared=0.0,
            converged=True,
            iterations=1,
        )
        assert r_squared(data, mean_model) == pytest.approx(0.0, abs=1e-12)

    def test_nested_model_never_beats_containing_model(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 5, size=(25, 2))
        y = 2 * x[:, 0] + rng.normal(0, 1, 25)
        data = dataset(x.tolist(), y.tolist())
        full = fit_linear(data, LIN2)
        intercept_only_r2 = 0.0  # the mean model by definition
        assert full.r_squared >= intercept_only_r2

    def test_display_clamps_negative(self):
        model = FittedModel(
            spec=ModelSpec("linear", ("x",), "h"),
            params=(0.0, 0.0),
            r_squared=-0.4,
            converged=True,
            iterations=1,
        )
        assert display_r_squared(model) == 0.0


class TestAnomalies:
    def make(self, r2=0.5, converged=True, params=(1.0, 1.0), flags=()):
        return FittedModel(
            spec=ModelSpec("linear", ("x",), "h"),
            params=params,
            r_squared=r2,
            converged=converged,
            iterations=3,
            flags=flags,
        )

    def test_two_zero_r2_fits_both_flagged(self):
        anomalies = detect_fit_anomaly([self.make(r2=0.0), self.make(r2=0.0)])
        assert len(anomalies) == 2

    def test_healthy_fits_not_flagged(self):
        assert detect_fit_anomaly([self.make(r2=0.9), self.make(r2=0.42)]) == []

    def test_nan_parameter_flagged(self):
        anomalies = detect_fit_anomaly([self.make(params=(float("nan"), 1.0))])
        assert anomalies and "non-finite parameters" in anomalies[0]["reasons"]

    def test_non_convergence_flagged(self):
        anomalies = detect_fit_anomaly([self.make(converged=False)])
        assert anomalies and "did not converge" in anomalies[0]["reasons"]

    def test_empty_fit_list_rejected(self):
        with pytest.raises(FitError):
            detect_fit_anomaly([])


class TestSelectModels:
    def scripted(self, reply):
        prompt = render(
            SELECTION_TEMPLATE,
            {"query": "the query", "models": ", ".join(MODEL_LIBRARY)},
        )
        return ScriptedBackend({prompt_hash(prompt): [reply]})

    def test_linear_or_exponential_query(self):
        backend = self.scripted("linear, exponential")
        selection = select_models(backend, "the query", ("t", "d"), "h")
        assert [s.form for s in selection.specs] == ["linear", "exponential"]
        assert selection.warning is None

    def test_relationship_type_query_selects_all(self):
        backend = self.scripted("fit linear, exponential and logistic forms")
        selection = select_models(backend, "the query", ("t", "d"), "h")
        assert [s.form for s in selection.specs] == list(MODEL_LIBRARY)

    def test_garbled_reply_falls_back_to_full_library(self):
        backend = self.scripted("42 bananas")
        selection = select_models(backend, "the query", ("t", "d"), "h")
        assert [s.form for s in selection.specs] == list(MODEL_LIBRARY)
        assert selection.warning is not None


class TestDataset:
    def test_rejects_null_values(self):
        with pytest.raises(FitError):
            Dataset(predictors=("x",), target="y",
                    rows=((1.0,), (None,)), targets=(1.0, 2.0))

    def test_rejects_non_finite_target(self):
        with pytest.raises(FitError):
            Dataset(predictors=("x",), target="y",
                    rows=((1.0,), (2.0,)), targets=(1.0, math.inf))

    def test_round_trips_through_dict(self):
        data = pilot_dataset()
        again = Dataset.from_dict(data.to_dict())
        assert again == data
