"""Synthetic harness tests: generation determinism, the closed loop, and
the ablation variants."""

import pytest

from litloop.consensus import ConsensusPolicy
from litloop.gateway import HallucinationConfig
from litloop.synth import (
    GENERATOR_FORMS,
    MATERIAL_NAMES,
    SynthConfig,
    _evaluate_form,
    assign_forms,
    best_fit,
    evaluate,
    faithful_backend,
    generate_corpus,
    generate_material,
    run_material,
    run_synth_eval,
    summary_markdown,
    synth_definition,
    synth_policy,
)


class TestGenerateMaterial:
    def test_linear_form_matches_hand_substitution(self):
        # oracle: direct substitution with externally stated coefficients
        params = {"w_temperature": 0.0075, "w_time": 0.1616, "intercept": 1.5699}
        assert _evaluate_form("linear", params, 800, 10) == pytest.approx(9.1859)

    def test_zero_noise_points_lie_on_the_function(self):
        truth = generate_material(seed=5, form="exponential", noise=0.0)
        for temperature, time, hardness in truth.points:
            assert hardness == pytest.approx(
                round(truth.true_value(temperature, time), 3), abs=5e-4
            )

    def test_same_seed_identical_ground_truth(self):
        first = generate_material(seed=9, form="logistic", noise=0.05)
        second = generate_material(seed=9, form="logistic", noise=0.05)
        assert first == second

    def test_unknown_form_rejected(self):
        with pytest.raises(ValueError):
            generate_material(seed=1, form="sinusoid", noise=0.0)

    def test_forms_cycle_through_library_and_power(self):
        assert set(assign_forms(8)) == set(GENERATOR_FORMS)


class TestGenerateCorpus:
    def test_counts_per_material(self):
        truths = [
            generate_material(seed=i, form=form, noise=0.05,
                              material=MATERIAL_NAMES[i])
            for i, form in enumerate(assign_forms(8))
        ]
        docs = generate_corpus(truths, targeted=20, untargeted=5)
        assert len(docs) == 8 * 25
        targeted = [d for d in docs if d.label == "targeted-with-data"]
        assert len(targeted) == 160
        assert all(d.embedded for d in targeted)

    def test_zero_materials_empty_corpus(self):
        assert generate_corpus([], targeted=20, untargeted=5) == []

    def test_template_styles_vary(self):
        truth = generate_material(seed=2, form="linear", noise=0.0)
        docs = generate_corpus([truth], targeted=9, untargeted=0)
        bodies = {d.document.body for d in docs}
        assert len(bodies) == 9  # every doc uses a different phrasing


class TestClosedLoop:
    def test_single_doc_point_round_trips(self):
        truth = generate_material(seed=3, form="linear", noise=0.0)
        docs = generate_corpus([truth], targeted=1, untargeted=0)
        backend = faithful_backend(docs, synth_definition(truth.material))
        run = run_material(truth, docs, backend)
        assert len(run.dataset) == 1
        temperature, time, hardness = docs[0].embedded[0]
        assert run.dataset.rows[0] == (temperature, time)
        assert run.dataset.targets[0] == hardness

    def test_perfect_run_scores_ones(self):
        truth = generate_material(seed=4, form="exponential", noise=0.0)
        docs = generate_corpus([truth], targeted=20, untargeted=5)
        backend = faithful_backend(docs, synth_definition(truth.material))
        run = run_material(truth, docs, backend)
        result = evaluate(run, truth, docs)
        assert result.recall == 1.0
        assert result.precision == 1.0
        assert result.filter_accuracy == 1.0
        assert result.form_correct is True
        assert result.r2_noisy == pytest.approx(1.0, abs=1e-9)
        assert result.r2_truth == pytest.approx(1.0, abs=1e-6)

    def test_zero_noise_full_harness_all_metrics_one(self):
        payload = run_synth_eval(SynthConfig(
            materials=4, targeted=12, untargeted=3, seed=3, noise=0.0,
        ))
        agg = payload["aggregates"]["full"]
        assert agg["recall_mean"] == 1.0
        assert agg["precision_mean"] == 1.0
        assert agg["filter_accuracy_mean"] == 1.0
        assert agg["form_correct_fraction"] == 1.0


class TestAblations:
    def make(self, rate=0.0, seed=13):
        truth = generate_material(seed=seed, form="linear", noise=0.05)
        docs = generate_corpus([truth], targeted=12, untargeted=4)
        hallucination = (
            HallucinationConfig(rate=rate, seed=seed) if rate > 0 else None
        )
        backend = faithful_backend(docs, synth_definition(truth.material),
                                   hallucination)
        return truth, docs, backend

    def test_no_ics_with_hallucinations_keeps_recall_loses_precision(self):
        truth, docs, backend = self.make(rate=0.5)
        run = run_material(truth, docs, backend, use_ics=False)
        result = evaluate(run, truth, docs, variant="no-ics")
        assert result.recall == 1.0
        assert result.precision < 1.0

    def test_full_beats_no_ics_on_precision_under_hallucination(self):
        truth, docs, backend = self.make(rate=0.1)
        full = evaluate(run_material(truth, docs, backend), truth, docs)
        truth2, docs2, backend2 = self.make(rate=0.1)
        corrupted = evaluate(
            run_material(truth2, docs2, backend2, use_ics=False),
            truth2, docs2, variant="no-ics",
        )
        assert full.precision == 1.0
        assert full.precision > corrupted.precision

    def test_no_filter_extraction_covers_every_document(self):
        truth, docs, backend = self.make()
        run = run_material(truth, docs, backend, use_filter=False)
        assert run.extraction_calls == len(docs) * synth_policy().k

    def test_all_variants_share_result_schema(self):
        payload = run_synth_eval(SynthConfig(
            materials=2, targeted=6, untargeted=2, seed=5, noise=0.02,
            variants=("full", "no-filter", "no-ics", "neither"),
        ))
        keys = {tuple(sorted(r.keys())) for r in payload["results"]}
        assert len(keys) == 1
        assert set(payload["aggregates"].keys()) == {
            "full", "no-filter", "no-ics", "neither"
        }

    def test_hallucination_suppressed_at_filter_two(self):
        truth, docs, backend = self.make(rate=0.2, seed=29)
        policy = ConsensusPolicy(k=4, filter_below=2, flag_upto=1)
        run = run_material(truth, docs, backend, policy=policy)
        result = evaluate(run, truth, docs)
        assert result.precision == 1.0
        assert result.recall == 1.0


class TestBestFit:
    def test_simpler_form_wins_near_ties(self):
        from litloop.modeling import FittedModel, ModelSpec

        linear = FittedModel(
            spec=ModelSpec("linear", ("a", "b"), "y"), params=(1.0, 1.0, 0.0),
            r_squared=0.95, converged=True, iterations=1,
        )
        logistic = FittedModel(
            spec=ModelSpec("logistic", ("a", "b"), "y"),
            params=(1.0, 1.0, 1.0, 0.0),
            r_squared=0.96, converged=True, iterations=1,
        )
        assert best_fit([linear, logistic]).spec.form == "linear"
        clearly_better = FittedModel(
            spec=logistic.spec, params=logistic.params,
            r_squared=0.99, converged=True, iterations=1,
        )
        assert best_fit([linear, clearly_better]).spec.form == "logistic"

    def test_non_converged_fits_ignored(self):
        from litloop.modeling import FittedModel, ModelSpec

        broken = FittedModel(
            spec=ModelSpec("linear", ("a",), "y"), params=(1.0, 0.0),
            r_squared=0.99, converged=False, iterations=200,
        )
        assert best_fit([broken]) is None


class TestOutputs:
    def test_summary_markdown_has_variant_rows(self):
        payload = run_synth_eval(SynthConfig(
            materials=2, targeted=4, untargeted=1, seed=1, noise=0.0,
        ))
        markdown = summary_markdown(payload)
        assert "| full |" in markdown

    def test_write_outputs(self, tmp_path):
        from litloop.synth import write_outputs

        payload = run_synth_eval(SynthConfig(
            materials=1, targeted=4, untargeted=1, seed=1, noise=0.0,
        ))
        write_outputs(payload, tmp_path)
        assert (tmp_path / "eval.json").exists()
        assert (tmp_path / "summary.md").exists()
