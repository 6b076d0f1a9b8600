"""Workflow IR: value references, steps, the wire-format parser and serializer.

A workflow document looks like::

    {
      "process": "<instruction>",
      "pipeline": [
        {"step": 1, "model": "RES",
         "input": {"image": "init[image]", "prompt": "dog"},
         "output": {"mask": "step1[mask]", "image": "step1[image]"}},
        {"result": ["step1[image]"]}
      ]
    }

References inside ``input`` use ``init[<slot>]`` for the initial bindings and
``step<k>[<slot>]`` for the output of an earlier step.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Union

from . import _lenient_json
from .errors import (
    EmptyResult,
    ForwardReference,
    MalformedRef,
    NonConsecutiveSteps,
    WorkflowError,
    WorkflowSyntaxError,
)

MAX_DOCUMENT_BYTES = 1 << 20


class SemanticType(str, Enum):
    IMAGE = "Image"
    MASK = "Mask"
    STR = "Str"
    FLOAT = "Float"


@dataclass(frozen=True)
class InitRef:
    field: str

    def __str__(self) -> str:
        return f"init[{self.field}]"


@dataclass(frozen=True)
class StepRef:
    step: int
    field: str

    def __post_init__(self) -> None:
        if self.step < 1:
            raise MalformedRef(f"step index must be >= 1, got {self.step}")

    def __str__(self) -> str:
        return f"step{self.step}[{self.field}]"


@dataclass(frozen=True)
class LiteralText:
    text: str

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class LiteralNumber:
    value: float

    def __str__(self) -> str:
        return repr(self.value)


@dataclass(frozen=True)
class NullRef:
    def __str__(self) -> str:
        return "null"


NULL = NullRef()

ValueRef = Union[InitRef, StepRef, LiteralText, LiteralNumber, NullRef]

_SLOT = r"[A-Za-z_][A-Za-z0-9_]*"
_INIT_RE = re.compile(rf"init\[({_SLOT})\]")
_STEP_RE = re.compile(rf"step(\d+)\[({_SLOT})\]")
_REFISH_RE = re.compile(r"(?:init|step\d*)\s*[\[\]]")
_DECIMAL_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")


def parse_value_ref(token: str) -> ValueRef:
    """Parse one reference token.

    Anything that starts like a reference (``init[`` or ``step<k>[``) must be
    a well-formed one; otherwise the token is a literal.
    """
    s = token.strip()
    if s == "null":
        return NULL
    m = _INIT_RE.fullmatch(s)
    if m:
        return InitRef(m.group(1))
    m = _STEP_RE.fullmatch(s)
    if m:
        k = int(m.group(1))
        if k < 1:
            raise MalformedRef(f"step index must be >= 1 in {token!r}")
        return StepRef(k, m.group(2))
    if _REFISH_RE.match(s):
        raise MalformedRef(f"malformed reference {token!r}")
    if _DECIMAL_RE.fullmatch(s):
        value = float(s)
        if math.isfinite(value):
            return LiteralNumber(value)
    return LiteralText(token)


def format_value_ref(ref: ValueRef) -> Any:
    """JSON-ready form of a reference (string, number or None)."""
    if isinstance(ref, NullRef):
        return None
    if isinstance(ref, LiteralNumber):
        return ref.value
    return str(ref)


@dataclass(frozen=True)
class Step:
    index: int
    model: str
    inputs: Mapping[str, ValueRef]
    declared_outputs: Mapping[str, str] = field(default_factory=dict)
    extras: tuple[tuple[str, Any], ...] = ()

    def step_refs(self) -> list[StepRef]:
        return [r for r in self.inputs.values() if isinstance(r, StepRef)]


@dataclass(frozen=True)
class Workflow:
    process: str
    steps: tuple[Step, ...]
    result: tuple[ValueRef, ...]
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        check_structure(self.steps, self.result)

    def step(self, index: int) -> Step:
        return self.steps[index - 1]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class DepGraph:
    vertices: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    def successors(self, i: int) -> list[int]:
        return sorted(j for a, j in self.edges if a == i)

    def predecessors(self, j: int) -> list[int]:
        return sorted(i for i, b in self.edges if b == j)


def check_structure(steps: tuple[Step, ...], result: tuple[ValueRef, ...]) -> None:
    """Enforce numbering, back-references and a nonempty result."""
    for pos, st in enumerate(steps, start=1):
        if st.index != pos:
            raise NonConsecutiveSteps(
                f"expected step {pos}, found step {st.index}")
        for slot, ref in st.inputs.items():
            if isinstance(ref, StepRef) and ref.step >= st.index:
                raise ForwardReference(
                    f"step {st.index} input {slot!r} refers to {ref}")
    if not result:
        raise EmptyResult("workflow result is empty")
    for ref in result:
        if isinstance(ref, StepRef) and ref.step > len(steps):
            raise ForwardReference(f"result refers to missing {ref}")


# -- parsing ------------------------------------------------------------------

def _ref_from_json(value: Any, where: str) -> ValueRef:
    if value is None:
        return NULL
    if isinstance(value, bool):
        raise MalformedRef(f"{where}: boolean is not a valid reference")
    if isinstance(value, (int, float)):
        return LiteralNumber(float(value))
    if isinstance(value, str):
        return parse_value_ref(value)
    raise MalformedRef(f"{where}: unsupported value {type(value).__name__}")


def _split_result(text: str) -> list[str]:
    s = text.strip()
    if s.startswith("[") and s.endswith("]") and not _STEP_RE.fullmatch(s):
        s = s[1:-1]
    parts, depth, cur = [], 0, []
    for ch in s:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth < 0:
                raise MalformedRef(f"unbalanced brackets in result {text!r}")
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if depth != 0:
        raise MalformedRef(f"unbalanced brackets in result {text!r}")
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_result(value: Any) -> tuple[ValueRef, ...]:
    if isinstance(value, str):
        items: list[Any] = _split_result(value)
    elif isinstance(value, list):
        items = value
    elif value is None:
        items = []
    else:
        raise WorkflowSyntaxError("result must be a list or a bracketed string")
    return tuple(_ref_from_json(v, "result") for v in items)


def _as_mapping(value: Any, where: str) -> _lenient_json.Obj:
    if isinstance(value, _lenient_json.Obj):
        return value
    if value is None:
        return _lenient_json.Obj()
    raise WorkflowSyntaxError(f"{where} must be an object")


def _parse_step(rec: _lenient_json.Obj, warnings: list[str]) -> Step:
    index = rec.get("step")
    if isinstance(index, bool) or not isinstance(index, int):
        raise WorkflowSyntaxError(f"step index must be an integer, got {index!r}")
    model = rec.get("model")
    if not isinstance(model, str) or not model:
        raise WorkflowSyntaxError(f"step {index}: model must be a nonempty string")

    inputs: dict[str, ValueRef] = {}
    for key, val in _as_mapping(rec.get("input"), f"step {index} input"):
        if key is None:
            raise WorkflowSyntaxError(f"step {index}: input entry without a slot name")
        inputs[key] = _ref_from_json(val, f"step {index} input {key!r}")

    outputs: dict[str, str] = {}
    for key, val in _as_mapping(rec.get("output"), f"step {index} output"):
        if not isinstance(val, str):
            raise WorkflowSyntaxError(f"step {index}: output references must be strings")
        if key is None:
            ref = parse_value_ref(val)
            if not isinstance(ref, StepRef):
                raise WorkflowSyntaxError(f"step {index}: key-less output {val!r}")
            key = ref.field
            warnings.append(f"step {index}: output {val!r} has no key; using {key!r}")
        else:
            ref = parse_value_ref(val)
            if ref != StepRef(index, key):
                warnings.append(
                    f"step {index}: output key {key!r} declared as {val!r}")
        outputs[key] = val

    extras = tuple((k, v) for k, v in rec
                   if k not in ("step", "model", "input", "output") and k is not None)
    return Step(index, model, inputs, outputs, extras)


def _parse(document: str | bytes) -> Workflow:
    if isinstance(document, (bytes, bytearray)):
        if len(document) > MAX_DOCUMENT_BYTES:
            raise WorkflowSyntaxError("document larger than 1 MiB")
        try:
            document = bytes(document).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WorkflowSyntaxError(f"document is not UTF-8: {exc}") from None
    elif len(document) > MAX_DOCUMENT_BYTES:
        raise WorkflowSyntaxError("document larger than 1 MiB")
    try:
        top = _lenient_json.loads(document)
    except _lenient_json.LenientJSONError as exc:
        raise WorkflowSyntaxError(str(exc)) from None
    if not isinstance(top, _lenient_json.Obj):
        raise WorkflowSyntaxError("top level must be an object")
    process = top.get("process", "")
    if not isinstance(process, str):
        raise WorkflowSyntaxError("process must be a string")
    pipeline = top.get("pipeline")
    if not isinstance(pipeline, list):
        raise WorkflowSyntaxError("pipeline must be an array")

    warnings: list[str] = []
    steps: list[Step] = []
    result: tuple[ValueRef, ...] | None = None
    for rec in pipeline:
        if not isinstance(rec, _lenient_json.Obj):
            raise WorkflowSyntaxError("pipeline entries must be objects")
        if "step" not in rec and "result" in rec:
            if result is not None:
                raise WorkflowSyntaxError("more than one result entry")
            result = _parse_result(rec.get("result"))
            continue
        if result is not None:
            raise WorkflowSyntaxError("step after the result entry")
        steps.append(_parse_step(rec, warnings))
    return Workflow(process, tuple(steps), result or (), tuple(warnings))


def parse_workflow(document: str | bytes) -> Workflow:
    """Parse a workflow document.

    Raises a :class:`~brickflow.errors.WorkflowError` subclass on any
    malformed input; never anything else.
    """
    try:
        return _parse(document)
    except WorkflowError:
        raise
    except (ValueError, TypeError, RecursionError, IndexError) as exc:
        raise WorkflowSyntaxError(f"unreadable document: {exc}") from None


def load_workflow(path) -> Workflow:
    with open(path, "rb") as fh:
        return parse_workflow(fh.read())


# -- serialization -------------------------------------------------------------

def _step_json(st: Step) -> dict:
    out: dict[str, Any] = {
        "step": st.index,
        "model": st.model,
        "input": {k: format_value_ref(v) for k, v in st.inputs.items()},
        "output": dict(st.declared_outputs),
    }
    for k, v in st.extras:
        out[k] = _plain(v)
    return out


def _plain(v: Any) -> Any:
    if isinstance(v, _lenient_json.Obj):
        return {k if k is not None else "": _plain(x) for k, x in v}
    if isinstance(v, list):
        return [_plain(x) for x in v]
    return v


def serialize_workflow(w: Workflow) -> str:
    lines = ["{", f'  "process": {json.dumps(w.process, ensure_ascii=False)},',
             '  "pipeline": [']
    for st in w.steps:
        body = json.dumps(_step_json(st), indent=2, ensure_ascii=False)
        lines.append("\n".join("    " + ln for ln in body.splitlines()) + ",")
    result = json.dumps([format_value_ref(r) for r in w.result], ensure_ascii=False)
    lines.append(f'    {{"result": {result}}}')
    lines.append("  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def workflow_graph(w: Workflow) -> DepGraph:
    edges = {(ref.step, st.index) for st in w.steps for ref in st.step_refs()}
    return DepGraph(tuple(st.index for st in w.steps), frozenset(edges))
