"""Assembly of the builder prompt from a registry and worked examples."""

from __future__ import annotations

from importlib import resources
from typing import Sequence

from .errors import EmptyRegistry
from .registry import Registry, ToolKind, ToolSpec
from .workflow import Workflow, parse_workflow, serialize_workflow

SYSTEM_TEXT = """\
You plan image edits by chaining tools. Read the user's instruction, pick tools from the
library below and write the plan as one JSON document.

Rules for the plan:
- "process" restates the instruction; "pipeline" lists steps numbered 1, 2, 3, ... in order.
- Each step names a "model" and fills its "input" slots; "output" names the slots it produces.
- An input is either a literal (text or a number), null, init[image] for the user's image,
  or stepK[slot] for an output of an earlier step K.
- A step may only use outputs of steps that come before it.
- The last pipeline entry is {"result": [...]} listing the images to return.
- A tool that takes masks or images in pairs handles one kind per step: pass masks or
  images, never both."""

CLOSING = ('Now, I give you the image and the user instruction: "{instruction}", '
           "please output the workflow json.")


def _slots(slots) -> str:
    return ", ".join(f"{s.name}: {s.type.value}{'?' if s.nullable else ''}" for s in slots)


def render_tool(spec: ToolSpec) -> str:
    head = spec.canonical_name
    if spec.aliases:
        head += f" (also written {', '.join(spec.aliases)})"
    lines = [f"- {head}: {spec.description}".rstrip(),
             f"  inputs: {_slots(spec.inputs)}",
             f"  outputs: {_slots(spec.outputs)}"]
    for short, targets in sorted(spec.shorthands.items()):
        lines.append(f"  shorthand: {short} sets {', '.join(targets)} at once")
    for c in spec.constraints:
        lines.append(f"  constraint: {c.describe()}")
    return "\n".join(lines)


def default_examples() -> list[tuple[str, Workflow]]:
    """The three bundled example workflows, in order."""
    out = []
    folder = resources.files("brickflow.data").joinpath("examples")
    for name in ("example1.json", "example2.json", "example3.json"):
        w = parse_workflow(folder.joinpath(name).read_text("utf-8"))
        out.append((w.process, w))
    return out


def assemble_builder_prompt(r: Registry, examples: Sequence[tuple[str, Workflow]],
                            instruction: str) -> str:
    if len(r) == 0:
        raise EmptyRegistry("cannot build a prompt without tools")
    predict = [s for s in r.specs() if s.kind == ToolKind.PREDICTIVE]
    edit = [s for s in r.specs() if s.kind != ToolKind.PREDICTIVE]
    parts = [SYSTEM_TEXT, "", "**Model library**",
             "PREDICT tools locate regions or describe the image. EDIT tools change pixels.", "",
             "PREDICT model list:"]
    parts += [render_tool(s) for s in predict]
    parts += ["", "EDIT model list:"]
    parts += [render_tool(s) for s in edit]
    for i, (text, w) in enumerate(examples, 1):
        parts += ["", f"**Actual example{i}:**", f"Instruction: {text}", serialize_workflow(w)]
    parts += ["", CLOSING.format(instruction=instruction)]
    return "\n".join(parts) + "\n"
