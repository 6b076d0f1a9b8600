"""Workflow execution.

Steps run in :func:`topological_schedule` order. INVERSE, COMPOSE, RESIZE and
BBOX are computed here; every other tool goes to a backend. Anything that
goes wrong ends the run with a :class:`Fault` instead of an exception.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Protocol

from .errors import BrickflowError, CycleDetected, UnknownTool
from .raster import ImageBuf, MaskBuf, op_bbox, op_compose, op_inverse, op_resize
from .registry import Registry, ToolSpec, check_constraints
from .validator import coerce_number_text
from .workflow import (
    DepGraph,
    InitRef,
    LiteralNumber,
    LiteralText,
    NullRef,
    SemanticType,
    StepRef,
    ValueRef,
    Workflow,
    workflow_graph,
)

Value = Any  # ImageBuf | MaskBuf | str | float | None


class Backend(Protocol):
    def invoke(self, tool: ToolSpec, inputs: Mapping[str, Value], seed: int) -> dict: ...


class FaultReason(str, Enum):
    BACKEND_ERROR = "backend error"
    CONSTRAINT_VIOLATION = "constraint violation"
    MISSING_BINDING = "missing binding"
    TYPE_MISMATCH = "type mismatch"


@dataclass(frozen=True)
class Fault:
    step: int | None
    reason: FaultReason
    detail: str = ""


@dataclass(frozen=True)
class TraceRecord:
    step: int
    tool: str
    duration: float = field(compare=False)
    outputs: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self, with_duration: bool = False) -> dict:
        d: dict[str, Any] = {"step": self.step, "tool": self.tool, "outputs": dict(self.outputs)}
        if with_duration:
            d["duration"] = self.duration
        return d


@dataclass
class ExecutionResult:
    results: list[Value]
    trace: list[TraceRecord]
    fault: Fault | None = None

    @property
    def ok(self) -> bool:
        return self.fault is None

    @property
    def status(self) -> str | Fault:
        return "Ok" if self.fault is None else self.fault

    def trace_jsonl(self, seed: int | None = None) -> str:
        lines = []
        for rec in self.trace:
            d = rec.to_dict()
            if seed is not None:
                d["seed"] = seed
            lines.append(json.dumps(d, sort_keys=False))
        return "".join(line + "\n" for line in lines)


def value_type(v: Value) -> SemanticType | None:
    if isinstance(v, ImageBuf):
        return SemanticType.IMAGE
    if isinstance(v, MaskBuf):
        return SemanticType.MASK
    if isinstance(v, str):
        return SemanticType.STR
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return SemanticType.FLOAT
    return None


def summarize(v: Value) -> str:
    if isinstance(v, ImageBuf):
        return f"Image {v.width}x{v.height} #{hashlib.sha256(v.pixels.tobytes()).hexdigest()[:12]}"
    if isinstance(v, MaskBuf):
        return (f"Mask {v.width}x{v.height} set={v.count()} "
                f"#{hashlib.sha256(v.bits.tobytes()).hexdigest()[:12]}")
    if v is None:
        return "null"
    if isinstance(v, str):
        return f"Str {v!r}"
    return f"Float {v!r}"


def topological_schedule(g: DepGraph) -> list[int]:
    """Kahn's algorithm, always taking the lowest ready index."""
    indeg = {v: 0 for v in g.vertices}
    succ: dict[int, list[int]] = {v: [] for v in g.vertices}
    for i, j in g.edges:
        succ[i].append(j)
        indeg[j] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        v = heapq.heappop(ready)
        order.append(v)
        for j in succ[v]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(indeg):
        raise CycleDetected("dependency graph has a cycle")
    return order


# -- built-in tools -----------------------------------------------------------------

def _pair_op(op: Callable) -> Callable[[Mapping[str, Value]], dict]:
    def run(inputs: Mapping[str, Value]) -> dict:
        mask, image = op(inputs.get("mask1"), inputs.get("mask2"),
                         inputs.get("image1"), inputs.get("image2"))
        return {"mask": mask, "image": image}
    return run


def _resize(inputs: Mapping[str, Value]) -> dict:
    mask, image = op_resize(inputs.get("mask"), inputs.get("image"), float(inputs["ratio"]))
    return {"mask": mask, "image": image}


def _bbox(inputs: Mapping[str, Value]) -> dict:
    return {"mask": op_bbox(inputs.get("mask"))}


BUILTINS: dict[str, Callable[[Mapping[str, Value]], dict]] = {
    "INVERSE": _pair_op(op_inverse),
    "COMPOSE": _pair_op(op_compose),
    "RESIZE": _resize,
    "BBOX": _bbox,
}


class _StepFault(Exception):
    def __init__(self, reason: FaultReason, detail: str):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


class _Run:
    def __init__(self, w: Workflow, r: Registry, backend: Backend | None,
                 init: Mapping[str, Value], seed: int):
        self.w, self.r, self.backend, self.init, self.seed = w, r, backend, init, seed
        self.outputs: dict[int, dict[str, Value]] = {}

    def resolve(self, ref: ValueRef) -> Value:
        if isinstance(ref, NullRef):
            return None
        if isinstance(ref, LiteralText):
            return ref.text
        if isinstance(ref, LiteralNumber):
            return ref.value
        if isinstance(ref, InitRef):
            if ref.field not in self.init:
                raise _StepFault(FaultReason.MISSING_BINDING, f"{ref} is not bound")
            return self.init[ref.field]
        assert isinstance(ref, StepRef)
        produced = self.outputs.get(ref.step)
        if produced is None or ref.field not in produced:
            raise _StepFault(FaultReason.MISSING_BINDING, f"{ref} was not produced")
        return produced[ref.field]

    def bind(self, spec: ToolSpec, st) -> dict[str, Value]:
        expanded, unknown = spec.expand_inputs(st.inputs)
        if unknown:
            raise _StepFault(FaultReason.TYPE_MISMATCH,
                             f"{spec.canonical_name} has no input slot(s) {unknown}")
        values: dict[str, Value] = {}
        for slot in spec.inputs:
            ref = expanded.get(slot.name)
            v = None if ref is None else self.resolve(ref)
            if v is None:
                if not slot.nullable:
                    raise _StepFault(FaultReason.TYPE_MISMATCH,
                                     f"{spec.canonical_name}.{slot.name} received null")
            else:
                vt = value_type(v)
                if vt == SemanticType.FLOAT and slot.type == SemanticType.STR:
                    v = coerce_number_text(v)
                elif vt != slot.type:
                    raise _StepFault(FaultReason.TYPE_MISMATCH,
                                     f"{spec.canonical_name}.{slot.name} expects "
                                     f"{slot.type.value}, got {vt.value if vt else type(v).__name__}")
            values[slot.name] = v
        return values

    def call(self, spec: ToolSpec, values: dict[str, Value]) -> dict[str, Value]:
        try:
            if spec.canonical_name in BUILTINS:
                out = BUILTINS[spec.canonical_name](values)
            elif self.backend is None:
                raise _StepFault(FaultReason.BACKEND_ERROR,
                                 f"no backend configured for {spec.canonical_name}")
            else:
                out = self.backend.invoke(spec, values, self.seed)
        except _StepFault:
            raise
        except (BrickflowError, ValueError, TypeError, KeyError, IndexError) as exc:
            raise _StepFault(FaultReason.BACKEND_ERROR,
                             f"{spec.canonical_name}: {type(exc).__name__}: {exc}") from None
        if not isinstance(out, Mapping):
            raise _StepFault(FaultReason.BACKEND_ERROR, f"{spec.canonical_name} returned {type(out).__name__}")
        checked: dict[str, Value] = {}
        for slot in spec.outputs:
            v = out.get(slot.name)
            if v is None:
                if not slot.nullable:
                    raise _StepFault(FaultReason.BACKEND_ERROR,
                                     f"{spec.canonical_name} produced no {slot.name}")
            elif value_type(v) != slot.type:
                raise _StepFault(FaultReason.BACKEND_ERROR,
                                 f"{spec.canonical_name}.{slot.name} produced the wrong type")
            checked[slot.name] = v
        return checked

    def step(self, index: int) -> tuple[dict[str, Value] | Fault, TraceRecord]:
        st = self.w.step(index)
        t0 = time.perf_counter()
        try:
            try:
                spec = self.r.lookup(st.model)
            except UnknownTool as exc:
                raise _StepFault(FaultReason.BACKEND_ERROR, str(exc)) from None
            values = self.bind(spec, st)
            violations = check_constraints(spec, values)
            if violations:
                raise _StepFault(FaultReason.CONSTRAINT_VIOLATION,
                                 "; ".join(v.message for v in violations))
            out: dict[str, Value] | Fault = self.call(spec, values)
            summary = {k: summarize(v) for k, v in out.items()}
            name = spec.canonical_name
        except _StepFault as f:
            out = Fault(index, f.reason, f.detail)
            summary = {}
            name = st.model
        return out, TraceRecord(index, name, time.perf_counter() - t0, summary)


def execute_workflow(w: Workflow, r: Registry, b: Backend | None,
                     init: Mapping[str, Value], seed: int = 0,
                     max_workers: int = 1) -> ExecutionResult:
    """Run ``w`` and materialise its result list.

    With ``max_workers > 1`` and a backend that sets ``concurrency_safe``,
    independent ready steps run on a thread pool; the outcome is identical to
    the serial run.
    """
    run = _Run(w, r, b, init, seed)
    graph = workflow_graph(w)
    order = topological_schedule(graph)
    done: dict[int, tuple[dict | Fault, TraceRecord]] = {}

    if max_workers > 1 and getattr(b, "concurrency_safe", False):
        preds = {v: set(graph.predecessors(v)) for v in order}
        pending = set(order)
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            while True:
                ready = sorted(v for v in pending
                               if all(p in done and not isinstance(done[p][0], Fault)
                                      for p in preds[v]))
                if not ready:
                    break
                for v, res in zip(ready, pool.map(run.step, ready)):
                    done[v] = res
                    if not isinstance(res[0], Fault):
                        run.outputs[v] = res[0]
                    pending.discard(v)
    else:
        for v in order:
            done[v] = run.step(v)
            if isinstance(done[v][0], Fault):
                break
            run.outputs[v] = done[v][0]

    trace: list[TraceRecord] = []
    for v in order:
        if v not in done:
            break
        out, rec = done[v]
        trace.append(rec)
        if isinstance(out, Fault):
            return ExecutionResult([], trace, out)

    results = []
    for ref in w.result:
        try:
            v = run.resolve(ref)
        except _StepFault as f:
            return ExecutionResult([], trace, Fault(None, f.reason, f.detail))
        if v is None:
            return ExecutionResult([], trace, Fault(None, FaultReason.MISSING_BINDING,
                                                    f"result {ref} is null"))
        results.append(v)
    return ExecutionResult(results, trace)
