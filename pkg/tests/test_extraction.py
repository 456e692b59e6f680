from hypothesis import given, settings, strategies as st

from litloop.corpus import Document
from litloop.extraction import (
    EXTRACTOR_TEMPLATE,
    extract_document,
    parse_point_lines,
)
from litloop.gateway import ScriptedBackend, prompt_hash, render
from litloop.pilot import pilot_definition


DEFINITION = pilot_definition()


def make_doc(body="tungsten study"):
    return Document(doc_id="doc1", title="t", body=body, source_path="mem")


def extractor_backend(doc, runs):
    prompt = render(
        EXTRACTOR_TEMPLATE,
        {"data_definition": DEFINITION.free_text, "document_body": doc.body},
    )
    return ScriptedBackend({prompt_hash(prompt): runs})


class TestParsePointLines:
    def test_well_formed_line_yields_one_point(self):
        points, rejects = parse_point_lines(
            "temperature=500 C; dose=3 dpa; bubble_size=1.5 nm", DEFINITION
        )
        assert rejects == []
        assert len(points) == 1
        assert points[0].values == {"temperature": 500.0, "dose": 3.0, "bubble_size": 1.5}

    def test_comma_separated_fields_accepted(self):
        points, rejects = parse_point_lines(
            "temperature=500 C, dose=3 dpa, bubble_size=1.5 nm", DEFINITION
        )
        assert len(points) == 1 and rejects == []

    def test_missing_required_variable_rejected_with_name(self):
        points, rejects = parse_point_lines(
            "temperature=500 C; bubble_size=1.5 nm", DEFINITION
        )
        assert points == []
        assert len(rejects) == 1
        assert "missing required: dose" in rejects[0].reason

    def test_mixed_lines_counted_separately(self):
        text = (
            "temperature=500 C; dose=3 dpa; bubble_size=1.5 nm\n"
            "this line is junk\n"
            "temperature=750 C; dose=2 dpa; bubble_size=2.5 nm"
        )
        points, rejects = parse_point_lines(text, DEFINITION)
        assert len(points) == 2
        assert len(rejects) == 1
        assert rejects[0].line_number == 2

    def test_unit_conversion_applied(self):
        points, _ = parse_point_lines(
            "temperature=773.15 K; dose=3 dpa; bubble_size=15 angstrom", DEFINITION
        )
        assert points[0].values == {"temperature": 500.0, "dose": 3.0, "bubble_size": 1.5}

    def test_not_convertible_required_unit_rejects_line(self):
        points, rejects = parse_point_lines(
            "temperature=500 C; dose=3e16 ions/cm2; bubble_size=1.5 nm", DEFINITION
        )
        assert points == []
        assert "not convertible" in rejects[0].reason

    def test_unknown_variable_rejected(self):
        _, rejects = parse_point_lines(
            "temp=500 C; dose=3 dpa; bubble_size=1.5 nm", DEFINITION
        )
        assert "unknown variable 'temp'" in rejects[0].reason

    def test_no_data_sentinel_and_blank_lines_skipped(self):
        points, rejects = parse_point_lines("NO_DATA\n\n  \n", DEFINITION)
        assert points == [] and rejects == []

    def test_range_notation_rejected(self):
        # the grammar has no place for error bars or ranges; they surface
        # as format rejects for a human to look at
        _, rejects = parse_point_lines(
            "temperature=500 C; dose=3 dpa; bubble_size=1.5±0.2 nm", DEFINITION
        )
        assert len(rejects) == 1


class TestExtractDocument:
    def test_same_line_all_runs_gives_one_point_per_run(self):
        doc = make_doc()
        line = "temperature=500 C; dose=3 dpa; bubble_size=1.5 nm"
        backend = extractor_backend(doc, [line] * 10)
        batch = extract_document(backend, doc, DEFINITION, k=10)
        assert len(batch.runs) == 10
        assert all(len(run) == 1 for run in batch.runs)
        assert all(
            run[0].values == {"temperature": 500.0, "dose": 3.0, "bubble_size": 1.5}
            for run in batch.runs
        )

    def test_fluence_only_dose_dropped_with_reason(self):
        doc = make_doc()
        backend = extractor_backend(
            doc, ["temperature=500 C; dose=2e16 ions/cm2; bubble_size=1.5 nm"]
        )
        batch = extract_document(backend, doc, DEFINITION, k=1)
        assert batch.runs == [[]]
        assert batch.format_rejects == 1
        assert "not convertible" in batch.reject_reasons[0]

    def test_empty_completion_zero_points_no_rejects(self):
        doc = make_doc()
        backend = extractor_backend(doc, [""])
        batch = extract_document(backend, doc, DEFINITION, k=1)
        assert batch.runs == [[]]
        assert batch.format_rejects == 0

    def test_byte_identical_batches_across_invocations(self):
        doc = make_doc()
        runs = [
            "temperature=500 C; dose=3 dpa; bubble_size=1.5 nm",
            "temperature=750 C; dose=2 dpa; bubble_size=2.5 nm\njunk line",
        ] * 5
        first = extract_document(extractor_backend(doc, runs), doc, DEFINITION, k=10)
        second = extract_document(extractor_backend(doc, runs), doc, DEFINITION, k=10)
        assert first.to_dict() == second.to_dict()

    def test_dropping_not_convertible_keeps_other_points_in_run(self):
        doc = make_doc()
        text = (
            "temperature=500 C; dose=3 dpa; bubble_size=1.5 nm\n"
            "temperature=600 C; dose=1e16 ions/cm2; bubble_size=2 nm"
        )
        backend = extractor_backend(doc, [text])
        batch = extract_document(backend, doc, DEFINITION, k=1)
        assert len(batch.runs[0]) == 1
        assert batch.runs[0][0].values["temperature"] == 500.0
        assert batch.format_rejects == 1


@st.composite
def scripted_outputs(draw):
    """Random mixtures of valid records, junk and sentinel lines."""
    lines = []
    for _ in range(draw(st.integers(0, 6))):
        kind = draw(st.sampled_from(["valid", "junk", "sentinel", "partial"]))
        if kind == "valid":
            t = draw(st.integers(-50, 2000))
            d = draw(st.floats(0, 10, allow_nan=False).map(lambda x: round(x, 3)))
            b = draw(st.floats(0.1, 50, allow_nan=False).map(lambda x: round(x, 3)))
            lines.append(f"temperature={t} C; dose={d} dpa; bubble_size={b} nm")
        elif kind == "junk":
            lines.append(draw(st.text(
                alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n"),
                max_size=30,
            )))
        elif kind == "sentinel":
            lines.append("NO_DATA")
        else:
            lines.append(f"temperature={draw(st.integers(0, 500))} C")
    return "\n".join(lines)


class TestPointInvariants:
    @given(scripted_outputs())
    @settings(max_examples=300, deadline=None)
    def test_every_emitted_point_satisfies_the_definition(self, text):
        points, _ = parse_point_lines(text, DEFINITION)
        for point in points:
            for spec in DEFINITION.required_variables:
                value = point.values[spec.name]
                assert value is not None
                assert value == round(value, spec.precision)
