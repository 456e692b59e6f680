from litloop.consensus import ConsensusPolicy
from litloop.corpus import Document
from litloop.gateway import ScriptedBackend, prompt_hash, render
from litloop.pilot import pilot_definition
from litloop.screening import (
    SCREENING_TEMPLATE,
    generate_questions,
    parse_answer,
    screen_corpus,
    screen_document,
)


def make_doc(doc_id="doc1", body="some tungsten study text"):
    return Document(doc_id=doc_id, title=doc_id, body=body, source_path="mem")


def script_answers(definition, doc, answers_per_question):
    """Build a ScriptedBackend answering each question with a fixed list."""
    responses = {}
    for question, answers in zip(generate_questions(definition), answers_per_question):
        prompt = render(
            SCREENING_TEMPLATE,
            {
                "data_definition": definition.free_text,
                "document_body": doc.body,
                "question": question.text,
            },
        )
        responses[prompt_hash(prompt)] = answers
    return ScriptedBackend(responses, fallback="no")


class TestGenerateQuestions:
    def test_pilot_definition_includes_pure_sample_question(self):
        questions = generate_questions(pilot_definition())
        assert any("pure tungsten" in q.text for q in questions)

    def test_dose_variable_yields_dpa_question(self):
        questions = generate_questions(pilot_definition())
        dose = [q for q in questions if q.derived_from == "variable:dose"]
        assert len(dose) == 1
        assert "dpa" in dose[0].text

    def test_one_question_per_required_variable_without_conditions(self):
        definition = pilot_definition()
        bare = type(definition)(
            variables=definition.variables, filter_conditions=(), free_text="x"
        )
        questions = generate_questions(bare)
        assert len(questions) == len(bare.required_variables) == 3

    def test_deterministic_order(self):
        first = generate_questions(pilot_definition())
        second = generate_questions(pilot_definition())
        assert [q.text for q in first] == [q.text for q in second]


class TestParseAnswer:
    def test_yes_variants(self):
        for text in ("yes", "Yes.", "  YES, it does", "yes\nbecause..."):
            assert parse_answer(text) is True

    def test_no_and_unparseable_variants(self):
        for text in ("no", "No.", "maybe", "", "the document discusses", None):
            assert parse_answer(text or "") is False


class TestScreenDocument:
    def test_unanimous_yes_kept_with_confidence_k(self):
        definition = pilot_definition()
        doc = make_doc()
        questions = generate_questions(definition)
        backend = script_answers(definition, doc, [["yes"]] * len(questions))
        policy = ConsensusPolicy(k=10, filter_below=3, flag_upto=5)
        verdict = screen_document(backend, doc, definition, questions, policy)
        assert verdict.kept is True
        assert verdict.confidence == 10

    def test_one_yes_of_four_with_threshold_four_not_kept(self):
        definition = pilot_definition()
        doc = make_doc()
        questions = generate_questions(definition)
        answers = [["yes"] * 4] * (len(questions) - 1) + [["yes", "no", "no", "no"]]
        backend = script_answers(definition, doc, answers)
        policy = ConsensusPolicy(k=4, filter_below=4, flag_upto=3)
        verdict = screen_document(backend, doc, definition, questions, policy)
        assert verdict.kept is False
        assert verdict.confidence == 1

    def test_backend_failure_counts_as_no_answer(self):
        definition = pilot_definition()
        doc = make_doc()
        questions = generate_questions(definition)

        class FlakyBackend:
            def __init__(self):
                self.calls = 0

            def complete(self, request):
                self.calls += 1
                raise ConnectionError("down")

        policy = ConsensusPolicy(k=3, filter_below=1, flag_upto=1)
        verdict = screen_document(FlakyBackend(), doc, definition, questions, policy)
        assert verdict.kept is False
        assert all(count == 0 for count in verdict.yes_counts)


class TestThresholdMonotonicity:
    def build(self, yes_count, k=10):
        definition = pilot_definition()
        doc = make_doc()
        questions = generate_questions(definition)
        answers = [["yes"] * yes_count + ["no"] * (k - yes_count)] * len(questions)
        return definition, doc, questions, script_answers(definition, doc, answers)

    def test_raising_threshold_never_adds_documents(self):
        definition, doc, questions, backend = self.build(yes_count=5)
        kept_at = {}
        for threshold in range(1, 11):
            policy = ConsensusPolicy(k=10, filter_below=threshold, flag_upto=threshold)
            verdict = screen_document(backend, doc, definition, questions, policy)
            kept_at[threshold] = verdict.kept
        # once it flips to excluded it must stay excluded
        flipped = False
        for threshold in range(1, 11):
            if not kept_at[threshold]:
                flipped = True
            if flipped:
                assert not kept_at[threshold]

    def test_unanimous_yes_kept_for_any_threshold(self):
        definition, doc, questions, backend = self.build(yes_count=10)
        for threshold in range(1, 11):
            policy = ConsensusPolicy(k=10, filter_below=threshold, flag_upto=threshold)
            assert screen_document(backend, doc, definition, questions, policy).kept


class TestScreenCorpus:
    def test_output_subset_of_input_and_sorted(self):
        definition = pilot_definition()
        docs = [make_doc(f"doc{i}", body=f"study text number {i}") for i in range(4)]
        questions = generate_questions(definition)
        responses = {}
        for doc in docs:
            keep = doc.doc_id in ("doc1", "doc3")
            for question in questions:
                prompt = render(
                    SCREENING_TEMPLATE,
                    {
                        "data_definition": definition.free_text,
                        "document_body": doc.body,
                        "question": question.text,
                    },
                )
                responses[prompt_hash(prompt)] = [["no"], ["yes"]][keep]
        backend = ScriptedBackend(responses, fallback="no")
        policy = ConsensusPolicy(k=2, filter_below=2, flag_upto=1)
        verdicts = screen_corpus(backend, docs, definition, policy, max_workers=3)
        assert [v.doc_id for v in verdicts] == ["doc0", "doc1", "doc2", "doc3"]
        assert [v.kept for v in verdicts] == [False, True, False, True]
