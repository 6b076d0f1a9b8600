import json
import random

import pytest

from brickflow.executor import execute_workflow
from brickflow.mock import MockBackend
from brickflow.registry import SlotSpec, ToolKind, ToolSpec, register_tool
from brickflow.validator import DiagCode, validate_document, validate_workflow
from brickflow.workflow import SemanticType

from conftest import example
from mutations import FAULT_CODE, MUTATIONS, edit, r_valid, random_mutation, _set


def codes(document, registry):
    _, rep = validate_document(document, registry)
    return rep


def test_examples_are_executable(registry, example_name):
    rep = validate_workflow(example(example_name), registry)
    assert rep.executable and rep.errors == []


def test_example1_output_key_warning(registry):
    rep = validate_workflow(example("example1"), registry)
    assert [(d.code, d.step) for d in rep.warnings] == [(DiagCode.OUTPUT_KEY_MISMATCH, 2)]


def test_unknown_tool(registry):
    rep = codes(edit("example2", lambda d: d["pipeline"][1].update(model="FASTNPAINT")), registry)
    assert not rep.executable and rep.codes() == ["UnknownTool"]


def test_type_mismatch_image_into_mask(registry):
    rep = codes(edit("example3", _set(5, "mask", "step1[image]")), registry)
    assert rep.codes() == ["TypeMismatch"]
    assert "Image" in rep.errors[0].message and "Mask" in rep.errors[0].message


def test_redundant_step_warning(registry):
    doc = json.dumps({"process": "p", "pipeline": [
        {"step": 1, "model": "SOS", "input": {"image": "init[image]"}, "output": {}},
        {"step": 2, "model": "FLUX-ENV", "input": {"image": "init[image]", "prompt": "snow"}, "output": {}},
        {"result": ["step2[image]"]}]})
    rep = codes(doc, registry)
    assert rep.executable
    assert (DiagCode.REDUNDANT_STEP, 1) in [(d.code, d.step) for d in rep.warnings]


def test_mask_result_is_only_a_warning(registry):
    doc = edit("example2", lambda d: d["pipeline"][-1].update(result=["step1[mask]"]))
    rep = codes(doc, registry)
    assert rep.executable
    assert DiagCode.BAD_RESULT_TYPE in [d.code for d in rep.warnings]


def test_number_into_text_is_coerced(registry):
    rep = codes(edit("example2", _set(1, "prompt", 3.0)), registry)
    assert rep.executable


def test_parse_failure_becomes_report(registry):
    w, rep = validate_document("{not json", registry)
    assert w is None and rep.codes() == ["MalformedDocument"]


def test_forward_reference_code(registry):
    _, rep = validate_document(edit("example2", _set(2, "mask", "step3[image]")), registry)
    assert rep.codes() == ["ForwardReference"]


def test_report_is_deterministic(registry):
    doc = edit("example3", _set(5, "mask", None))
    a, b = codes(doc, registry), codes(doc, registry)
    assert a.to_json() == b.to_json()


def test_diagnostics_sorted(registry):
    def fn(d):
        d["pipeline"][0]["model"] = "X"
        d["pipeline"][2]["input"]["score"] = "high"
    rep = codes(edit("example2", fn), registry)
    keys = [(d.step, d.code.value) for d in rep.errors]
    assert keys == sorted(keys)


def test_inferred_types(registry):
    rep = validate_workflow(example("example2"), registry)
    assert {str(k): v for k, v in rep.inferred_types.items()}["step2[score]"] == SemanticType.FLOAT


@pytest.mark.parametrize("label, name, fn", MUTATIONS, ids=[m[0] for m in MUTATIONS])
def test_mutation_is_rejected(registry, checker64, label, name, fn):
    assert r_valid(edit(name, fn), registry, checker64) == -1


def test_monotone_under_unrelated_tool(registry):
    bigger = register_tool(registry, ToolSpec(
        "RRF", ToolKind.EDITING, (SlotSpec("image", SemanticType.IMAGE),),
        (SlotSpec("image", SemanticType.IMAGE),)))
    for name in ("example1", "example2", "example3"):
        assert validate_workflow(example(name), bigger).executable


def test_soundness_against_executor(registry, checker64):
    rng = random.Random(1234)
    backend = MockBackend()
    faults = 0
    for _ in range(500):
        doc = random_mutation(rng, registry)
        w, rep = validate_document(doc, registry)
        if w is None:
            continue
        run = execute_workflow(w, registry, backend, {"image": checker64}, seed=0)
        if rep.executable:
            assert run.ok, (doc, run.fault)
        else:
            if not run.ok:
                faults += 1
                assert FAULT_CODE[run.fault.reason] in {d.code for d in rep.errors}, (doc, run.fault)
        if not run.ok:
            assert not rep.executable, doc
    assert faults > 50
