"""Declarative tool registry.

Tools are described by JSON records (see ``data/default_registry.json``)::

    {"name": "FILL", "aliases": ["FLUX-FILL"], "kind": "Editing",
     "inputs": [{"name": "image", "type": "Image", "nullable": false}, ...],
     "outputs": [{"name": "image", "type": "Image"}],
     "constraints": [{"kind": "RequiresNonNull", "slot": "mask"}],
     "description": "..."}

Registries are values: :func:`register_tool` returns a new registry and leaves
its argument untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from types import MappingProxyType
from typing import Any, Iterable, Iterator, Mapping, Union

from .errors import DanglingConstraintSlot, DuplicateTool, RegistrySyntaxError, UnknownTool
from .workflow import NullRef, SemanticType


class ToolKind(str, Enum):
    PREDICTIVE = "Predictive"
    EDITING = "Editing"
    AUXILIARY = "Auxiliary"


@dataclass(frozen=True)
class SlotSpec:
    name: str
    type: SemanticType
    nullable: bool = False
    # output only: produced iff any of these inputs is non-null
    produced_if: tuple[str, ...] = ()


@dataclass(frozen=True)
class ExactlyOneKind:
    group_a: tuple[str, ...]
    group_b: tuple[str, ...]

    @property
    def slots(self) -> tuple[str, ...]:
        return self.group_a + self.group_b

    def holds(self, nonnull: set[str]) -> bool:
        a = any(s in nonnull for s in self.group_a)
        b = any(s in nonnull for s in self.group_b)
        return a != b

    def describe(self) -> str:
        return (f"give either {'/'.join(self.group_a)} or {'/'.join(self.group_b)}, "
                "never both; the other group must be null")


@dataclass(frozen=True)
class AllOrNoneNull:
    slots: tuple[str, ...]

    def holds(self, nonnull: set[str]) -> bool:
        n = sum(s in nonnull for s in self.slots)
        return n in (0, len(self.slots))

    def describe(self) -> str:
        return f"{', '.join(self.slots)} are either all null or all set"


@dataclass(frozen=True)
class PairedNullability:
    slots: tuple[str, str]

    def holds(self, nonnull: set[str]) -> bool:
        return (self.slots[0] in nonnull) == (self.slots[1] in nonnull)

    def describe(self) -> str:
        return f"{self.slots[0]} and {self.slots[1]} must both be null or both be set"


@dataclass(frozen=True)
class RequiresNonNull:
    slot: str

    @property
    def slots(self) -> tuple[str, ...]:
        return (self.slot,)

    def holds(self, nonnull: set[str]) -> bool:
        return self.slot in nonnull

    def describe(self) -> str:
        return f"{self.slot} must not be null"


@dataclass(frozen=True)
class PromptPrefix:
    slot: str
    required_prefix: str

    @property
    def slots(self) -> tuple[str, ...]:
        return (self.slot,)

    def holds_for(self, text: str) -> bool:
        return text.strip().casefold().startswith(self.required_prefix.casefold())

    def describe(self) -> str:
        return f"{self.slot} must start with '{self.required_prefix} ...'"


Constraint = Union[ExactlyOneKind, AllOrNoneNull, PairedNullability, RequiresNonNull,
                   PromptPrefix]


@dataclass(frozen=True)
class ConstraintViolation:
    constraint: Constraint
    message: str

    @property
    def kind(self) -> str:
        return type(self.constraint).__name__


@dataclass(frozen=True)
class ToolSpec:
    canonical_name: str
    kind: ToolKind
    inputs: tuple[SlotSpec, ...]
    outputs: tuple[SlotSpec, ...]
    aliases: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()
    description: str = ""
    # one input name standing for several slots, e.g. ratio -> four side ratios
    shorthands: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    edit_verb: str | None = None

    def input_slot(self, name: str) -> SlotSpec | None:
        return next((s for s in self.inputs if s.name == name), None)

    def output_slot(self, name: str) -> SlotSpec | None:
        return next((s for s in self.outputs if s.name == name), None)

    @property
    def names(self) -> tuple[str, ...]:
        return (self.canonical_name, *self.aliases)

    def expand_inputs(self, bound: Mapping[str, Any]) -> tuple[dict[str, Any], list[str]]:
        """Spread shorthand keys over their slots.

        Returns the expanded binding and the names that are neither slots nor
        shorthands. An explicit slot wins over a shorthand covering it.
        """
        out: dict[str, Any] = {}
        unknown: list[str] = []
        for key, val in bound.items():
            if key in self.shorthands and self.input_slot(key) is None:
                for slot in self.shorthands[key]:
                    out.setdefault(slot, val)
            elif self.input_slot(key) is not None:
                out[key] = val
            else:
                unknown.append(key)
        for key, val in bound.items():
            if self.input_slot(key) is not None:
                out[key] = val
        return out, unknown


def _is_null(v: Any) -> bool:
    return v is None or isinstance(v, NullRef)


def check_constraints(spec: ToolSpec, bound_inputs: Mapping[str, Any]) -> list[ConstraintViolation]:
    """Evaluate every constraint of ``spec`` against a binding.

    Values may be references or runtime values; ``None``/``NullRef``/absent
    count as null. :class:`PromptPrefix` is only checked against plain text
    (``str`` or anything with a ``text`` attribute) since other references are
    unknown until run time.
    """
    nonnull = {k for k, v in bound_inputs.items() if not _is_null(v)}
    out: list[ConstraintViolation] = []
    for c in spec.constraints:
        if isinstance(c, PromptPrefix):
            v = bound_inputs.get(c.slot)
            text = v if isinstance(v, str) else getattr(v, "text", None)
            if text is not None and not c.holds_for(text):
                out.append(ConstraintViolation(
                    c, f"{spec.canonical_name}: {c.describe()}, got {text!r}"))
        elif not c.holds(nonnull):
            out.append(ConstraintViolation(c, f"{spec.canonical_name}: {c.describe()}"))
    return out


# -- registry -------------------------------------------------------------------

class Registry(Mapping[str, ToolSpec]):
    """Immutable mapping from canonical tool name to :class:`ToolSpec`."""

    def __init__(self, specs: Iterable[ToolSpec] = ()):
        tools: dict[str, ToolSpec] = {}
        index: dict[str, str] = {}
        for spec in specs:
            for name in spec.names:
                if name in index:
                    raise DuplicateTool(
                        f"{name!r} is already used by {index[name]}")
                index[name] = spec.canonical_name
            tools[spec.canonical_name] = spec
        self._tools = MappingProxyType(tools)
        self._index = MappingProxyType(index)

    def __getitem__(self, name: str) -> ToolSpec:
        return self._tools[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tools)

    def __len__(self) -> int:
        return len(self._tools)

    def __repr__(self) -> str:
        return f"Registry({list(self._tools)})"

    def lookup(self, name: str) -> ToolSpec:
        try:
            return self._tools[self._index[name]]
        except KeyError:
            raise UnknownTool(f"unknown tool {name!r}") from None

    def canonical(self, name: str) -> str:
        canon = self._index.get(name)
        return canon if canon is not None else name

    def specs(self) -> list[ToolSpec]:
        return list(self._tools.values())


def lookup_tool(r: Registry, name: str) -> ToolSpec:
    return r.lookup(name)


def register_tool(r: Registry, spec: ToolSpec) -> Registry:
    _check_spec(spec)
    return Registry([*r.specs(), spec])


# -- document format --------------------------------------------------------------

def _slot(rec: Any, where: str, output: bool) -> SlotSpec:
    if not isinstance(rec, dict) or not isinstance(rec.get("name"), str):
        raise RegistrySyntaxError(f"{where}: slot needs a name")
    try:
        typ = SemanticType(rec.get("type"))
    except ValueError:
        raise RegistrySyntaxError(f"{where}: bad slot type {rec.get('type')!r}") from None
    produced_if = tuple(rec.get("produced_if", ())) if output else ()
    nullable = bool(rec.get("nullable", bool(produced_if)))
    return SlotSpec(rec["name"], typ, nullable, produced_if)


def _constraint(rec: Any, where: str) -> Constraint:
    if not isinstance(rec, dict):
        raise RegistrySyntaxError(f"{where}: constraint must be an object")
    kind = rec.get("kind")
    try:
        if kind == "ExactlyOneKind":
            return ExactlyOneKind(tuple(rec["group_a"]), tuple(rec["group_b"]))
        if kind == "AllOrNoneNull":
            return AllOrNoneNull(tuple(rec["slots"]))
        if kind == "PairedNullability":
            a, b = rec["slots"]
            return PairedNullability((a, b))
        if kind == "RequiresNonNull":
            return RequiresNonNull(rec["slot"])
        if kind == "PromptPrefix":
            return PromptPrefix(rec["slot"], rec["required_prefix"])
    except (KeyError, TypeError, ValueError) as exc:
        raise RegistrySyntaxError(f"{where}: bad {kind} constraint ({exc})") from None
    raise RegistrySyntaxError(f"{where}: unknown constraint kind {kind!r}")


def _check_spec(spec: ToolSpec) -> None:
    if not spec.canonical_name:
        raise RegistrySyntaxError("tool name must be nonempty")
    for direction, slots in (("input", spec.inputs), ("output", spec.outputs)):
        names = [s.name for s in slots]
        if len(set(names)) != len(names):
            raise RegistrySyntaxError(
                f"{spec.canonical_name}: duplicate {direction} slot names")
    inputs = {s.name for s in spec.inputs}
    for c in spec.constraints:
        missing = [s for s in c.slots if s not in inputs]
        if missing:
            raise DanglingConstraintSlot(
                f"{spec.canonical_name}: constraint {type(c).__name__} names "
                f"unknown slot(s) {missing}")
    for s in spec.outputs:
        missing = [x for x in s.produced_if if x not in inputs]
        if missing:
            raise DanglingConstraintSlot(
                f"{spec.canonical_name}: output {s.name} depends on unknown {missing}")
    for key, targets in spec.shorthands.items():
        missing = [x for x in targets if x not in inputs]
        if missing:
            raise DanglingConstraintSlot(
                f"{spec.canonical_name}: shorthand {key} names unknown {missing}")


def tool_from_record(rec: Any) -> ToolSpec:
    if not isinstance(rec, dict):
        raise RegistrySyntaxError("tool record must be an object")
    name = rec.get("name")
    if not isinstance(name, str) or not name:
        raise RegistrySyntaxError("tool record needs a nonempty name")
    try:
        kind = ToolKind(rec.get("kind"))
    except ValueError:
        raise RegistrySyntaxError(f"{name}: bad kind {rec.get('kind')!r}") from None
    spec = ToolSpec(
        canonical_name=name,
        kind=kind,
        inputs=tuple(_slot(s, f"{name} input", False) for s in rec.get("inputs", [])),
        outputs=tuple(_slot(s, f"{name} output", True) for s in rec.get("outputs", [])),
        aliases=tuple(rec.get("aliases", [])),
        constraints=tuple(_constraint(c, name) for c in rec.get("constraints", [])),
        description=rec.get("description", ""),
        shorthands={k: tuple(v) for k, v in rec.get("shorthands", {}).items()},
        edit_verb=rec.get("edit_verb"),
    )
    _check_spec(spec)
    return spec


def tool_to_record(spec: ToolSpec) -> dict:
    def slot(s: SlotSpec) -> dict:
        d: dict[str, Any] = {"name": s.name, "type": s.type.value, "nullable": s.nullable}
        if s.produced_if:
            d["produced_if"] = list(s.produced_if)
        return d

    def constraint(c: Constraint) -> dict:
        d: dict[str, Any] = {"kind": type(c).__name__}
        if isinstance(c, ExactlyOneKind):
            d.update(group_a=list(c.group_a), group_b=list(c.group_b))
        elif isinstance(c, (AllOrNoneNull, PairedNullability)):
            d["slots"] = list(c.slots)
        elif isinstance(c, RequiresNonNull):
            d["slot"] = c.slot
        else:
            d.update(slot=c.slot, required_prefix=c.required_prefix)
        return d

    rec: dict[str, Any] = {
        "name": spec.canonical_name,
        "aliases": list(spec.aliases),
        "kind": spec.kind.value,
        "inputs": [slot(s) for s in spec.inputs],
        "outputs": [slot(s) for s in spec.outputs],
        "constraints": [constraint(c) for c in spec.constraints],
        "description": spec.description,
    }
    if spec.shorthands:
        rec["shorthands"] = {k: list(v) for k, v in spec.shorthands.items()}
    if spec.edit_verb:
        rec["edit_verb"] = spec.edit_verb
    return rec


def load_registry(spec_document: str) -> Registry:
    try:
        records = json.loads(spec_document)
    except json.JSONDecodeError as exc:
        raise RegistrySyntaxError(f"registry is not valid JSON: {exc}") from None
    if not isinstance(records, list):
        raise RegistrySyntaxError("registry document must be a JSON array")
    return Registry(tool_from_record(rec) for rec in records)


def dump_registry(r: Registry) -> str:
    return json.dumps([tool_to_record(s) for s in r.specs()], indent=2)


def load_registry_file(path) -> Registry:
    with open(path, encoding="utf-8") as fh:
        return load_registry(fh.read())


_DEFAULT: Registry | None = None


def default_registry() -> Registry:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("brickflow.data").joinpath("default_registry.json").read_text("utf-8")
        _DEFAULT = load_registry(text)
    return _DEFAULT
