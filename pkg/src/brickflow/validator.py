"""Static executability check of a workflow against a registry.

Findings are returned as data in a :class:`ValidationReport`; a workflow is
executable iff the report holds no errors. Warnings (redundant steps,
mismatched output declarations, non-image results, coercions) never affect
executability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .errors import (
    EmptyResult,
    ForwardReference,
    MalformedRef,
    NonConsecutiveSteps,
    UnknownTool,
    WorkflowError,
)
from .registry import PromptPrefix, Registry, ToolSpec, check_constraints
from .workflow import (
    NULL,
    InitRef,
    LiteralNumber,
    LiteralText,
    NullRef,
    SemanticType,
    StepRef,
    ValueRef,
    Workflow,
    parse_value_ref,
    parse_workflow,
)

DEFAULT_INIT_SLOTS: Mapping[str, SemanticType] = {"image": SemanticType.IMAGE}


class DiagCode(str, Enum):
    UNKNOWN_TOOL = "UnknownTool"
    TYPE_MISMATCH = "TypeMismatch"
    FORWARD_REFERENCE = "ForwardReference"
    UNRESOLVED_REF = "UnresolvedRef"
    CONSTRAINT_VIOLATION = "ConstraintViolation"
    NON_CONSECUTIVE_STEPS = "NonConsecutiveSteps"
    EMPTY_RESULT = "EmptyResult"
    REDUNDANT_STEP = "RedundantStep"
    BAD_RESULT_TYPE = "BadResultType"
    OUTPUT_KEY_MISMATCH = "OutputKeyMismatch"
    MALFORMED_DOCUMENT = "MalformedDocument"


@dataclass(frozen=True)
class Diagnostic:
    code: DiagCode
    step: int | None
    message: str
    ref: str | None = None

    def to_dict(self) -> dict:
        return {"code": self.code.value, "step": self.step, "ref": self.ref,
                "message": self.message}


def _order(d: Diagnostic) -> tuple:
    return (d.step is None, d.step or 0, d.code.value)


@dataclass
class ValidationReport:
    errors: list[Diagnostic] = field(default_factory=list)
    warnings: list[Diagnostic] = field(default_factory=list)
    inferred_types: dict[ValueRef, SemanticType] = field(default_factory=dict)

    @property
    def executable(self) -> bool:
        return not self.errors

    def codes(self) -> list[str]:
        return [d.code.value for d in self.errors]

    def to_dict(self) -> dict:
        return {
            "executable": self.executable,
            "errors": [d.to_dict() for d in self.errors],
            "warnings": [d.to_dict() for d in self.warnings],
            "inferred_types": {str(k): v.value for k, v in self.inferred_types.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def coerce_number_text(value: float) -> str:
    """Text a number becomes when bound to a Str slot."""
    return repr(float(value))


@dataclass
class _Produced:
    spec: ToolSpec | None
    # slot -> (type, statically null)
    outputs: dict[str, tuple[SemanticType, bool]] = field(default_factory=dict)


class _Checker:
    def __init__(self, w: Workflow, r: Registry, init_slots: Mapping[str, SemanticType]):
        self.w, self.r, self.init = w, r, init_slots
        self.report = ValidationReport()
        self.produced: dict[int, _Produced] = {}
        self.consumed: set[int] = set()

    def error(self, code: DiagCode, step: int | None, msg: str, ref=None) -> None:
        self.report.errors.append(Diagnostic(code, step, msg, None if ref is None else str(ref)))

    def warn(self, code: DiagCode, step: int | None, msg: str, ref=None) -> None:
        self.report.warnings.append(Diagnostic(code, step, msg, None if ref is None else str(ref)))

    def resolve(self, ref: ValueRef, at: int | None) -> tuple[SemanticType | None, bool]:
        """Type and static nullness of ``ref``; type None if unknowable."""
        if isinstance(ref, NullRef):
            return None, True
        if isinstance(ref, LiteralText):
            return SemanticType.STR, False
        if isinstance(ref, LiteralNumber):
            return SemanticType.FLOAT, False
        if isinstance(ref, InitRef):
            if ref.field not in self.init:
                self.error(DiagCode.UNRESOLVED_REF, at,
                           f"no initial binding named {ref.field!r}", ref)
                return None, False
            return self.init[ref.field], False
        if at is not None and ref.step >= at:
            self.error(DiagCode.FORWARD_REFERENCE, at, f"{ref} is not an earlier step", ref)
            return None, False
        prod = self.produced.get(ref.step)
        if prod is None:
            self.error(DiagCode.UNRESOLVED_REF, at, f"{ref} names a missing step", ref)
            return None, False
        self.consumed.add(ref.step)
        if prod.spec is None:
            return None, False
        if ref.field not in prod.outputs:
            self.error(DiagCode.UNRESOLVED_REF, at,
                       f"{prod.spec.canonical_name} has no output {ref.field!r}", ref)
            return None, False
        return prod.outputs[ref.field]

    def step(self, st) -> None:
        idx = st.index
        try:
            spec = self.r.lookup(st.model)
        except UnknownTool:
            self.error(DiagCode.UNKNOWN_TOOL, idx, f"unknown tool {st.model!r}")
            for ref in st.inputs.values():
                self.resolve(ref, idx)
            self.produced[idx] = _Produced(None)
            return

        expanded, unknown = spec.expand_inputs(st.inputs)
        for name in unknown:
            self.error(DiagCode.TYPE_MISMATCH, idx,
                       f"{spec.canonical_name} has no input slot {name!r}")
            self.resolve(st.inputs[name], idx)

        bound: dict[str, ValueRef] = {}
        for slot in spec.inputs:
            ref = expanded.get(slot.name, NULL)
            vtype, is_null = self.resolve(ref, idx)
            if vtype is not None and not isinstance(ref, NullRef):
                self.report.inferred_types[ref] = vtype
            if is_null:
                if not slot.nullable:
                    self.error(DiagCode.TYPE_MISMATCH, idx,
                               f"{spec.canonical_name}.{slot.name} may not be null", ref)
                bound[slot.name] = NULL
                continue
            if vtype is not None and vtype != slot.type:
                if vtype == SemanticType.FLOAT and slot.type == SemanticType.STR:
                    self.warn(DiagCode.TYPE_MISMATCH, idx,
                              f"number coerced to text for {spec.canonical_name}.{slot.name}", ref)
                    if isinstance(ref, LiteralNumber):
                        ref = LiteralText(coerce_number_text(ref.value))
                else:
                    self.error(DiagCode.TYPE_MISMATCH, idx,
                               f"{spec.canonical_name}.{slot.name} expects {slot.type.value}, "
                               f"got {vtype.value}", ref)
            bound[slot.name] = ref

        for v in check_constraints(spec, bound):
            self.error(DiagCode.CONSTRAINT_VIOLATION, idx, v.message)
        for c in spec.constraints:
            if isinstance(c, PromptPrefix) and not isinstance(bound.get(c.slot), (LiteralText, NullRef)):
                self.warn(DiagCode.CONSTRAINT_VIOLATION, idx,
                          f"{spec.canonical_name}: cannot check prefix of {c.slot!r} before running")

        outputs = {}
        for o in spec.outputs:
            null = bool(o.produced_if) and all(isinstance(bound[x], NullRef) for x in o.produced_if)
            outputs[o.name] = (o.type, null)
        self.produced[idx] = _Produced(spec, outputs)

        for key, text in st.declared_outputs.items():
            try:
                declared = parse_value_ref(text)
            except MalformedRef:
                declared = None
            if spec.output_slot(key) is None or declared != StepRef(idx, key):
                self.warn(DiagCode.OUTPUT_KEY_MISMATCH, idx,
                          f"declared output {key!r}: {text!r} does not match "
                          f"{spec.canonical_name} outputs {[o.name for o in spec.outputs]}")

    def result(self) -> None:
        if not self.w.result:
            self.error(DiagCode.EMPTY_RESULT, None, "result list is empty")
        for ref in self.w.result:
            if isinstance(ref, NullRef):
                self.error(DiagCode.UNRESOLVED_REF, None, "result contains null", ref)
                continue
            vtype, is_null = self.resolve(ref, None)
            if is_null:
                self.error(DiagCode.UNRESOLVED_REF, None, f"{ref} is null for these inputs", ref)
            elif vtype is not None and vtype != SemanticType.IMAGE:
                self.warn(DiagCode.BAD_RESULT_TYPE, None, f"result {ref} is a {vtype.value}", ref)
            if vtype is not None and not isinstance(ref, (LiteralText, LiteralNumber)):
                self.report.inferred_types[ref] = vtype

    def run(self) -> ValidationReport:
        for pos, st in enumerate(self.w.steps, start=1):
            if st.index != pos:
                self.error(DiagCode.NON_CONSECUTIVE_STEPS, st.index,
                           f"expected step {pos}, found step {st.index}")
            self.step(st)
        self.result()
        for st in self.w.steps:
            if st.index not in self.consumed:
                self.warn(DiagCode.REDUNDANT_STEP, st.index,
                          f"no output of step {st.index} is used")
        self.report.errors.sort(key=_order)
        self.report.warnings.sort(key=_order)
        return self.report


def validate_workflow(w: Workflow, r: Registry,
                      init_slots: Mapping[str, SemanticType] | None = None) -> ValidationReport:
    return _Checker(w, r, DEFAULT_INIT_SLOTS if init_slots is None else init_slots).run()


_PARSE_CODES = {
    ForwardReference: DiagCode.FORWARD_REFERENCE,
    NonConsecutiveSteps: DiagCode.NON_CONSECUTIVE_STEPS,
    EmptyResult: DiagCode.EMPTY_RESULT,
    MalformedRef: DiagCode.UNRESOLVED_REF,
}


def validate_document(document: str | bytes, r: Registry,
                      init_slots: Mapping[str, SemanticType] | None = None
                      ) -> tuple[Workflow | None, ValidationReport]:
    """Parse then validate; parse failures become a single error diagnostic."""
    try:
        w = parse_workflow(document)
    except WorkflowError as exc:
        code = _PARSE_CODES.get(type(exc), DiagCode.MALFORMED_DOCUMENT)
        return None, ValidationReport(errors=[Diagnostic(code, None, str(exc))])
    return w, validate_workflow(w, r, init_slots)
