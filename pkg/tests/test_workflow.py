import json

import pytest
from hypothesis import given, settings, strategies as st

from brickflow.errors import (
    EmptyResult,
    ForwardReference,
    MalformedRef,
    NonConsecutiveSteps,
    WorkflowError,
    WorkflowSyntaxError,
)
from brickflow.workflow import (
    NULL,
    InitRef,
    LiteralNumber,
    LiteralText,
    Step,
    StepRef,
    Workflow,
    format_value_ref,
    parse_value_ref,
    parse_workflow,
    serialize_workflow,
    workflow_graph,
)

from conftest import example


@pytest.mark.parametrize("token, expected", [
    ("step3[mask]", StepRef(3, "mask")),
    ("null", NULL),
    ("init[image]", InitRef("image")),
    ("2.0", LiteralNumber(2.0)),
    ("a red car", LiteralText("a red car")),
])
def test_parse_value_ref(token, expected):
    assert parse_value_ref(token) == expected


@pytest.mark.parametrize("token", ["step0[mask]", "step1[]", "step1[mask", "init[]"])
def test_malformed_refs(token):
    with pytest.raises(MalformedRef):
        parse_value_ref(token)


def test_example2_result_list():
    w = example("example2")
    assert len(w.steps) == 3
    assert w.result == (StepRef(1, "image"), StepRef(3, "image"))


def test_example1_warns_about_output_key():
    w = example("example1")
    assert len(w.steps) == 4
    assert len(w.warnings) == 1


def test_aliases_kept_verbatim():
    assert example("example3").step(5).model == "FLUX-FILL"


def _doc(steps, result):
    return json.dumps({"process": "p", "pipeline": [*steps, {"result": result}]})


def _step(i, model="SOS", **inputs):
    return {"step": i, "model": model, "input": inputs or {"image": "init[image]"}, "output": {}}


def test_forward_reference():
    doc = _doc([_step(1), _step(2, image="step3[image]"), _step(3)], ["step1[image]"])
    with pytest.raises(ForwardReference):
        parse_workflow(doc)


def test_self_reference_is_forward():
    with pytest.raises(ForwardReference):
        parse_workflow(_doc([_step(1, image="step1[image]")], ["step1[image]"]))


def test_step_gap():
    with pytest.raises(NonConsecutiveSteps):
        parse_workflow(_doc([_step(1), _step(3)], ["step1[image]"]))


def test_empty_result():
    with pytest.raises(EmptyResult):
        parse_workflow(_doc([_step(1)], []))


@pytest.mark.parametrize("doc", ["", "{", "[]", '{"process": "x"}', '{"process": 1, "pipeline": []}',
                                 '{"process": "x", "pipeline": [{"step": 1}]}'])
def test_syntax_errors(doc):
    with pytest.raises(WorkflowError):
        parse_workflow(doc)


def test_bad_utf8():
    with pytest.raises(WorkflowSyntaxError):
        parse_workflow(b"\xff\xfe{")


def test_round_trip(example_name):
    w = example(example_name)
    text = serialize_workflow(w)
    assert parse_workflow(text) == w
    assert serialize_workflow(parse_workflow(text)) == text


def test_single_step_canonical_result():
    w = Workflow("p", (Step(1, "SOS", {"image": InitRef("image")}),), (StepRef(1, "image"),))
    assert '"result": ["step1[image]"]' in serialize_workflow(w)


def test_keyless_output_is_normalised():
    text = serialize_workflow(example("example3"))
    assert '"image": "step5[image]"' in text


def test_extras_survive_round_trip():
    doc = json.dumps({"process": "p", "pipeline": [
        {"step": 1, "model": "SOS", "input": {"image": "init[image]"}, "output": {}, "note": [1, 2]},
        {"result": ["step1[image]"]}]})
    w = parse_workflow(doc)
    assert dict(w.step(1).extras) == {"note": [1, 2]}
    assert parse_workflow(serialize_workflow(w)) == w


@pytest.mark.parametrize("name, edges", [
    ("example1", {(1, 2), (2, 3), (2, 4), (3, 4)}),
    ("example2", {(1, 2), (1, 3), (2, 3)}),
    ("example3", {(1, 2), (1, 3), (1, 4), (3, 4), (2, 5), (4, 5)}),
])
def test_graph_edges(name, edges):
    assert workflow_graph(example(name)).edges == edges


def test_single_step_has_no_edges():
    w = parse_workflow(_doc([_step(1)], ["step1[image]"]))
    assert workflow_graph(w).edges == frozenset()


@pytest.mark.parametrize("tok", ["step2[mask]", "init[image]", "hello"])
def test_format_round_trip(tok):
    ref = parse_value_ref(tok)
    assert format_value_ref(ref) == tok


def test_format_null_and_number():
    assert format_value_ref(NULL) is None
    assert format_value_ref(LiteralNumber(2.0)) == 2.0


# -- properties ---------------------------------------------------------------

@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=400))
def test_parser_total_on_bytes(data):
    try:
        parse_workflow(data)
    except WorkflowError:
        pass


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet='{}[]",:0123456789 stepinulmagk\n', max_size=200))
def test_parser_total_on_jsonish_text(text):
    try:
        parse_workflow(text)
    except WorkflowError:
        pass


def test_deep_nesting_is_rejected_not_crashing():
    with pytest.raises(WorkflowError):
        parse_workflow("[" * 5000)


def test_oversize_document():
    with pytest.raises(WorkflowError):
        parse_workflow(" " * ((1 << 20) + 1))


@st.composite
def random_workflows(draw):
    n = draw(st.integers(1, 8))
    steps = []
    for i in range(1, n + 1):
        inputs = {}
        for k in range(draw(st.integers(0, 3))):
            if i > 1 and draw(st.booleans()):
                inputs[f"s{k}"] = f"step{draw(st.integers(1, i - 1))}[image]"
            else:
                inputs[f"s{k}"] = draw(st.sampled_from(["init[image]", None, 1.5, "text"]))
        steps.append({"step": i, "model": "SOS", "input": inputs, "output": {}})
    res = [f"step{draw(st.integers(1, n))}[image]"]
    return json.dumps({"process": "r", "pipeline": [*steps, {"result": res}]})


@settings(max_examples=200, deadline=None)
@given(random_workflows())
def test_graph_is_acyclic_and_closed(doc):
    w = parse_workflow(doc)
    g = workflow_graph(w)
    assert all(i < j for i, j in g.edges)
    for s in w.steps:
        for ref in s.step_refs():
            assert 1 <= ref.step <= len(w.steps)
    assert parse_workflow(serialize_workflow(w)) == w
