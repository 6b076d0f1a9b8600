"""Stage rewards, editing-chain decomposition and the GRPO objective.

Stage 2 scores a workflow as ``R_valid + R_sim`` against a reference
workflow; stage 3 as ``R_valid + R_effect`` from a critic's add/remove
counts. Advantages are group-normalised rewards and the policy objective is
the clipped ratio surrogate minus a KL penalty to a reference policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GroupTooSmall, MissingComponent, NonFiniteInput, UnknownTool
from .executor import ExecutionResult
from .registry import Registry, ToolKind
from .validator import ValidationReport
from .workflow import InitRef, StepRef, ValueRef, Workflow

DEFAULT_EPSILON = 0.2
DEFAULT_BETA = 0.04
STD_FLOOR = 1e-8


def valid_reward(report: ValidationReport, exec_result: ExecutionResult | None = None) -> int:
    """0 when the workflow is executable (and, if run, ran to completion), else -1."""
    if report.executable and (exec_result is None or exec_result.ok):
        return 0
    return -1


def effect_reward(n_add: int, n_remove: int) -> float:
    if n_add < 0 or n_remove < 0:
        raise ValueError("critic counts must be nonnegative")
    return 1.0 - 0.5 * (n_add + n_remove)


@dataclass(frozen=True)
class RewardBreakdown:
    stage: int
    r_valid: int
    r_sim: float | None = None
    r_effect: float | None = None

    @property
    def total(self) -> float:
        part = self.r_sim if self.stage == 2 else self.r_effect
        return self.r_valid + part

    def to_dict(self) -> dict:
        return {"stage": self.stage, "r_valid": self.r_valid, "r_sim": self.r_sim,
                "r_effect": self.r_effect, "total": self.total}


def stage_reward(stage: int, r_valid: int, r_sim: float | None = None,
                 r_effect: float | None = None) -> RewardBreakdown:
    if stage == 2:
        if r_sim is None:
            raise MissingComponent("stage 2 needs r_sim")
    elif stage == 3:
        if r_effect is None:
            raise MissingComponent("stage 3 needs r_effect")
    else:
        raise ValueError(f"stage must be 2 or 3, got {stage}")
    return RewardBreakdown(stage, r_valid, r_sim, r_effect)


# -- editing chains ------------------------------------------------------------------

@dataclass(frozen=True)
class EditChain:
    editor: int
    support: tuple[int, ...]
    inputs_from: tuple[ValueRef, ...] = ()

    def to_dict(self) -> dict:
        return {"editor": self.editor, "support": list(self.support),
                "inputs_from": [str(r) for r in self.inputs_from]}


def _forms_chain(r: Registry, model: str) -> bool:
    try:
        return r.lookup(model).kind == ToolKind.EDITING
    except UnknownTool:
        return False


def decompose_chains(w: Workflow, r: Registry) -> list[EditChain]:
    """One chain per editing step, with every non-editing ancestor reachable
    without passing through another editing step.

    Ancestors shared by several editors appear in each of their chains.
    Outputs of other editors and initial bindings become ``inputs_from``.
    """
    chains = []
    for st in w.steps:
        if not _forms_chain(r, st.model):
            continue
        support: set[int] = set()
        external: list[ValueRef] = []
        stack = [st.index]
        while stack:
            cur = w.step(stack.pop())
            for ref in cur.inputs.values():
                if isinstance(ref, InitRef):
                    if ref not in external:
                        external.append(ref)
                elif isinstance(ref, StepRef):
                    if _forms_chain(r, w.step(ref.step).model):
                        if ref not in external:
                            external.append(ref)
                    elif ref.step not in support:
                        support.add(ref.step)
                        stack.append(ref.step)
        chains.append(EditChain(st.index, tuple(sorted(support)), tuple(external)))
    return chains


# -- GRPO ------------------------------------------------------------------------------

def _finite(xs, what: str) -> np.ndarray:
    a = np.asarray(xs, dtype=float)
    if not np.isfinite(a).all():
        raise NonFiniteInput(f"{what} contains non-finite values")
    return a


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """(r - mean) / std with the population std; all zeros if std < 1e-8."""
    r = _finite(rewards, "rewards")
    if r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {r.size}")
    std = r.std()
    if std < STD_FLOOR:
        return [0.0] * r.size
    return [float(x) for x in (r - r.mean()) / std]


@dataclass
class GroupBatch:
    advantages: Sequence[float]
    logp_new: Sequence[float]
    logp_old: Sequence[float]
    logp_ref: Sequence[float]
    epsilon: float = DEFAULT_EPSILON
    beta: float = DEFAULT_BETA
    rewards: Sequence[float] = field(default_factory=list)

    def arrays(self) -> tuple[np.ndarray, ...]:
        a = _finite(self.advantages, "advantages")
        new = _finite(self.logp_new, "logp_new")
        old = _finite(self.logp_old, "logp_old")
        ref = _finite(self.logp_ref, "logp_ref")
        if not (a.shape == new.shape == old.shape == ref.shape):
            raise ValueError("batch arrays must have equal length")
        if a.size < 1:
            raise GroupTooSmall("empty group")
        if not (self.epsilon > 0 and self.beta >= 0) or not math.isfinite(self.epsilon + self.beta):
            raise ValueError("need epsilon > 0 and beta >= 0")
        return a, new, old, ref


def kl_terms(logp_new, logp_ref) -> np.ndarray:
    """Per-sample ``exp(d) - d - 1`` with ``d = logp_ref - logp_new``; never negative."""
    d = np.asarray(logp_ref, float) - np.asarray(logp_new, float)
    return np.expm1(d) - d


def grpo_objective(batch: GroupBatch) -> float:
    a, new, old, ref = batch.arrays()
    ratio = np.exp(new - old)
    clipped = np.clip(ratio, 1 - batch.epsilon, 1 + batch.epsilon)
    surrogate = np.minimum(ratio * a, clipped * a)
    return float(surrogate.mean() - batch.beta * kl_terms(new, ref).mean())


def grpo_grad_logp(batch: GroupBatch) -> np.ndarray:
    """d objective / d logp_new for each sample."""
    a, new, old, ref = batch.arrays()
    ratio = np.exp(new - old)
    clipped = np.clip(ratio, 1 - batch.epsilon, 1 + batch.epsilon)
    # the clipped branch is flat in ratio; the unclipped one has slope ratio * a
    active = ratio * a <= clipped * a
    g_surr = np.where(active, ratio * a, 0.0)
    g_kl = 1.0 - np.exp(ref - new)
    return (g_surr - batch.beta * g_kl) / a.size


def sft_nll(token_logprobs: Sequence[float]) -> float:
    lp = _finite(token_logprobs, "token_logprobs").reshape(-1)
    if (lp > 0).any():
        raise ValueError("log-probabilities must be <= 0")
    return 0.0 - float(lp.sum())
