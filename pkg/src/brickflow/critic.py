"""Meta-edit abstraction of editing chains and the critics that judge them.

A critic looks at what each chain does and answers two questions: which
chains should go, and which edits are missing. :func:`mock_critic` answers by
set arithmetic against a task's required edits; :class:`RemoteCritic` asks an
HTTP endpoint.
"""

from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Protocol, Sequence

from .errors import CriticUnavailable, MalformedCritique
from .registry import Registry
from .rewards import EditChain
from .workflow import LiteralText, StepRef, Workflow

VERBS = ("add", "remove", "recolor", "restyle", "re-environment", "re-pose", "fill",
         "change-background")

_DEFAULT_VERBS = {
    "INPAINT": "remove",
    "FILL": "fill",
    "RCM": "recolor",
    "STYLE": "restyle",
    "ENV": "re-environment",
    "POSE": "re-pose",
    "CBG": "change-background",
}

WHOLE_IMAGE = "whole image"

REMOTE_TIMEOUT = 30.0
ENDPOINT_ENV = "LEGO_CRITIC_ENDPOINT"
TOKEN_ENV = "LEGO_CRITIC_TOKEN"


@dataclass(frozen=True)
class MetaEdit:
    verb: str
    target: str
    region_provenance: str = ""
    editor_tool: str = ""

    @property
    def key(self) -> tuple[str, str]:
        """What two meta-edits must share to count as the same edit."""
        return (self.verb, " ".join(self.target.split()).casefold())

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetaEdit":
        return cls(d["verb"], d["target"], d.get("region_provenance", ""), d.get("editor_tool", ""))


def _provenance(tool: str, step) -> str | None:
    if tool == "RES":
        prompt = step.inputs.get("prompt")
        text = prompt.text if isinstance(prompt, LiteralText) else str(prompt)
        return f"segmented by '{text}'"
    if tool == "SOS":
        return "salient object"
    if tool == "ADD-PRED":
        return "predicted placement"
    return None


def abstract_chain(c: EditChain, w: Workflow, r: Registry) -> MetaEdit:
    """Describe a chain by verb, target and where its region came from.

    Support steps are visited breadth-first from the editor, so the nearest
    prompt and the nearest region-producing tool win.
    """
    editor = w.step(c.editor)
    tool = r.canonical(editor.model)
    spec = r.get(tool)
    verb = (spec.edit_verb if spec is not None and spec.edit_verb else None) \
        or _DEFAULT_VERBS.get(tool, "fill")

    support = set(c.support)
    order = []
    seen = {c.editor}
    queue = deque([c.editor])
    while queue:
        cur = w.step(queue.popleft())
        for ref in cur.inputs.values():
            if isinstance(ref, StepRef) and ref.step in support and ref.step not in seen:
                seen.add(ref.step)
                order.append(ref.step)
                queue.append(ref.step)

    target = ""
    for idx in [c.editor, *order]:
        prompt = w.step(idx).inputs.get("prompt")
        if isinstance(prompt, LiteralText):
            target = prompt.text
            break
    region = WHOLE_IMAGE
    for idx in order:
        found = _provenance(r.canonical(w.step(idx).model), w.step(idx))
        if found:
            region = found
            break
    if tool == "FILL" and verb == "fill" and any(
            r.canonical(w.step(i).model) == "ADD-PRED" for i in support):
        verb = "add"
    return MetaEdit(verb, target, region, tool)


@dataclass(frozen=True)
class Critique:
    remove_indices: tuple[int, ...] = ()
    additions: tuple[MetaEdit, ...] = ()

    @property
    def n_remove(self) -> int:
        return len(self.remove_indices)

    @property
    def n_add(self) -> int:
        return len(self.additions)

    def check(self, n_chains: int) -> "Critique":
        idx = self.remove_indices
        if len(set(idx)) != len(idx):
            raise MalformedCritique(f"duplicate remove indices {list(idx)}")
        bad = [i for i in idx if not 0 <= i < n_chains]
        if bad:
            raise MalformedCritique(f"remove indices {bad} out of range for {n_chains} chains")
        return self

    def to_dict(self) -> dict:
        return {"remove_indices": list(self.remove_indices),
                "additions": [{"verb": a.verb, "target": a.target} for a in self.additions],
                "n_add": self.n_add, "n_remove": self.n_remove}


class Critic(Protocol):
    def critique(self, meta_edits: Sequence[MetaEdit], instruction: str) -> Critique: ...


def judge(meta_edits: Sequence[MetaEdit], instruction: str, critic: Critic) -> Critique:
    if critic is None:
        raise CriticUnavailable("no critic configured")
    out = critic.critique(list(meta_edits), instruction)
    if not isinstance(out, Critique):
        raise MalformedCritique(f"critic returned {type(out).__name__}")
    return out.check(len(meta_edits))


# -- mock ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    instruction: str
    required_edits: tuple[MetaEdit, ...] = field(default_factory=tuple)

    @classmethod
    def of(cls, instruction: str, edits: Iterable[tuple[str, str] | MetaEdit]) -> "TaskSpec":
        return cls(instruction, tuple(e if isinstance(e, MetaEdit) else MetaEdit(*e) for e in edits))


@dataclass(frozen=True)
class MockCritic:
    task: TaskSpec

    def critique(self, meta_edits: Sequence[MetaEdit], instruction: str) -> Critique:
        required = {e.key for e in self.task.required_edits}
        generated = {e.key for e in meta_edits}
        remove, seen = [], set()
        for i, e in enumerate(meta_edits):
            if e.key not in required and e.key not in seen:
                remove.append(i)
            seen.add(e.key)
        additions, added = [], set()
        for e in self.task.required_edits:
            if e.key not in generated and e.key not in added:
                additions.append(MetaEdit(e.verb, e.target))
                added.add(e.key)
        return Critique(tuple(remove), tuple(additions))


def mock_critic(task: TaskSpec) -> MockCritic:
    """Critic that flags edits outside ``task`` and reports required ones that are missing.

    Edits compare by verb and case-folded target, as sets.
    """
    return MockCritic(task)


# -- remote ---------------------------------------------------------------------------

def _parse_remote(payload: Any) -> Critique:
    if not isinstance(payload, dict):
        raise MalformedCritique("response is not a JSON object")
    for key in ("remove_indices", "additions"):
        if key not in payload:
            raise MalformedCritique(f"response lacks {key!r}")
        if not isinstance(payload[key], list):
            raise MalformedCritique(f"{key!r} must be a list")
    idx = payload["remove_indices"]
    if any(isinstance(i, bool) or not isinstance(i, int) for i in idx):
        raise MalformedCritique("remove_indices must hold integers")
    adds = []
    for a in payload["additions"]:
        if not isinstance(a, dict) or not {"verb", "target"} <= set(a):
            raise MalformedCritique(f"addition {a!r} needs verb and target")
        if not isinstance(a["verb"], str) or not isinstance(a["target"], str):
            raise MalformedCritique(f"addition {a!r} has non-text fields")
        if a["verb"] not in VERBS:
            raise MalformedCritique(f"unknown verb {a['verb']!r}")
        adds.append(MetaEdit(a["verb"], a["target"]))
    return Critique(tuple(idx), tuple(adds))


@dataclass
class RemoteCritic:
    """JSON-over-HTTP critic. Transport failures get exactly one retry."""

    endpoint: str
    token: str | None = None
    timeout: float | None = None

    @classmethod
    def from_env(cls) -> "RemoteCritic":
        endpoint = os.environ.get(ENDPOINT_ENV)
        if not endpoint:
            raise CriticUnavailable(f"{ENDPOINT_ENV} is not set")
        return cls(endpoint, os.environ.get(TOKEN_ENV))

    def _post(self, body: bytes) -> bytes:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        timeout = self.timeout if self.timeout is not None else REMOTE_TIMEOUT
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()

    def critique(self, meta_edits: Sequence[MetaEdit], instruction: str) -> Critique:
        body = json.dumps({"instruction": instruction,
                           "meta_edits": [e.to_dict() for e in meta_edits]}).encode("utf-8")
        last: Exception | None = None
        for _ in range(2):
            try:
                raw = self._post(body)
                break
            except urllib.error.HTTPError as exc:
                last = exc
            except (urllib.error.URLError, OSError) as exc:  # includes timeouts
                last = exc
        else:
            raise CriticUnavailable(f"critic at {self.endpoint} unreachable: {last}")
        try:
            payload = json.loads(raw)
        except (ValueError, UnicodeDecodeError) as exc:
            raise MalformedCritique(f"response is not JSON: {exc}") from None
        return _parse_remote(payload).check(len(meta_edits))


def remote_critic_call(endpoint: str, meta_edits: Sequence[MetaEdit], instruction: str,
                       token: str | None = None) -> Critique:
    return RemoteCritic(endpoint, token).critique(meta_edits, instruction)
