"""A tabular softmax policy trained with the group-relative objective.

Each task offers a fixed list of candidate workflows; the policy holds one
logit per candidate. Every iteration samples a group per task from the
current policy, scores the group with the stage-2 reward, and takes
gradient-ascent steps on the clipped/KL objective with the sampling policy
as the "old" policy and the initial policy as the reference.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import GroupTooSmall, NoCandidates, WorkflowError
from .executor import Backend, execute_workflow
from .matching import similarity_reward
from .mock import MockBackend
from .netpbm import checkerboard
from .registry import Registry, default_registry
from .rewards import (
    DEFAULT_BETA,
    DEFAULT_EPSILON,
    GroupBatch,
    RewardBreakdown,
    grpo_grad_logp,
    grpo_objective,
    group_advantages,
    stage_reward,
    valid_reward,
)
from .validator import validate_workflow
from .workflow import Workflow, parse_workflow


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - np.log(np.exp(z).sum())


@dataclass
class ToyPolicy:
    logits: dict[str, np.ndarray]
    temperature: float = 1.0

    @classmethod
    def uniform(cls, sizes: Mapping[str, int], temperature: float = 1.0) -> "ToyPolicy":
        for name, n in sizes.items():
            if n < 1:
                raise NoCandidates(f"task {name!r} has no candidates")
        return cls({k: np.zeros(n) for k, n in sizes.items()}, temperature)

    def log_probs(self, task: str) -> np.ndarray:
        return _log_softmax(self.logits[task] / self.temperature)

    def probs(self, task: str) -> np.ndarray:
        return np.exp(self.log_probs(task))

    def copy(self) -> "ToyPolicy":
        return ToyPolicy({k: v.copy() for k, v in self.logits.items()}, self.temperature)


def objective_and_grad(logits: np.ndarray, samples: np.ndarray, advantages: np.ndarray,
                       logp_old: np.ndarray, ref_logits: np.ndarray, temperature: float,
                       epsilon: float, beta: float) -> tuple[float, np.ndarray]:
    """Objective for one sampled group and its gradient with respect to the logits."""
    logp = _log_softmax(logits / temperature)
    logp_ref = _log_softmax(ref_logits / temperature)
    batch = GroupBatch(advantages, logp[samples], logp_old, logp_ref[samples], epsilon, beta)
    g_logp = grpo_grad_logp(batch)
    p = np.exp(logp)
    # d logp[c] / d logits[k] = ([k == c] - p[k]) / T
    grad = (np.bincount(samples, weights=g_logp, minlength=logits.size)
            - g_logp.sum() * p) / temperature
    return grpo_objective(batch), grad


@dataclass
class TrainResult:
    curve: list[tuple[int, float, float]]
    policy: ToyPolicy
    tasks: list[str] = field(default_factory=list)

    def mean_rewards(self) -> np.ndarray:
        return np.array([m for _, m, _ in self.curve])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "mean_reward", "objective"])
        for it, m, obj in self.curve:
            w.writerow([it, f"{m:.6f}", f"{obj:.6f}"])
        return buf.getvalue()


def train_tabular(reward_table: Mapping[str, Sequence[float]], group_size: int = 8,
                  iterations: int = 300, step_size: float = 0.1, seed: int = 0,
                  epsilon: float = DEFAULT_EPSILON, beta: float = DEFAULT_BETA,
                  temperature: float = 1.0, inner_steps: int = 1) -> TrainResult:
    """Train on precomputed per-candidate rewards, one entry per task."""
    if group_size < 2:
        raise GroupTooSmall(f"group size must be >= 2, got {group_size}")
    rewards = {k: np.asarray(v, float) for k, v in reward_table.items()}
    for name, r in rewards.items():
        if r.size < 2:
            raise NoCandidates(f"task {name!r} needs at least 2 candidates")
    policy = ToyPolicy.uniform({k: r.size for k, r in rewards.items()}, temperature)
    ref = policy.copy()
    rng = np.random.default_rng(seed)
    names = sorted(rewards)
    curve = []
    for it in range(iterations):
        means, objs = [], []
        for name in names:
            logp_old_all = policy.log_probs(name)
            samples = rng.choice(rewards[name].size, size=group_size, p=np.exp(logp_old_all))
            r = rewards[name][samples]
            adv = np.asarray(group_advantages(r))
            logp_old = logp_old_all[samples]
            obj = None
            for _ in range(inner_steps):
                val, grad = objective_and_grad(policy.logits[name], samples, adv, logp_old,
                                               ref.logits[name], temperature, epsilon, beta)
                if obj is None:
                    obj = val
                policy.logits[name] = policy.logits[name] + step_size * grad
            means.append(float(r.mean()))
            objs.append(obj)
        curve.append((it, float(np.mean(means)), float(np.mean(objs))))
    return TrainResult(curve, policy, names)


# -- workflow tasks ------------------------------------------------------------------------

@dataclass
class ToyTask:
    name: str
    candidates: list[str]   # workflow documents; unparseable ones score -1
    gt: Workflow
    instruction: str = ""


def score_candidate(document: str, gt: Workflow, registry: Registry | None = None,
                    backend: Backend | None = None, init: Mapping[str, Any] | None = None,
                    seed: int = 0) -> RewardBreakdown:
    """Stage-2 reward of one candidate document against ``gt``."""
    r = registry if registry is not None else default_registry()
    b = backend if backend is not None else MockBackend()
    init = init if init is not None else {"image": checkerboard(32, 32)}
    try:
        w = parse_workflow(document)
    except WorkflowError:
        return stage_reward(2, -1, 0.0)
    report = validate_workflow(w, r)
    run = execute_workflow(w, r, b, init, seed) if report.executable else None
    rv = valid_reward(report, run)
    return stage_reward(2, rv, similarity_reward(w, gt, r) if rv == 0 else 0.0)


def load_toy_tasks(path=None) -> list[ToyTask]:
    if path is None:
        text = resources.files("brickflow.data").joinpath("toy_tasks.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    data = json.loads(text)
    tasks = []
    for rec in data["tasks"]:
        docs = [c if isinstance(c, str) else json.dumps(c) for c in rec["candidates"]]
        if not docs:
            raise NoCandidates(f"task {rec['name']!r} has no candidates")
        tasks.append(ToyTask(rec["name"], docs, parse_workflow(json.dumps(rec["gt"])),
                             rec.get("instruction", "")))
    return tasks


def toy_train(tasks: Sequence[ToyTask], group_size: int = 8, iterations: int = 300,
              step_size: float = 0.1, seed: int = 0, registry: Registry | None = None,
              **kwargs) -> TrainResult:
    """Score every candidate once, then run :func:`train_tabular`."""
    if not tasks:
        raise NoCandidates("no tasks")
    table = {}
    for t in tasks:
        if len(t.candidates) < 2:
            raise NoCandidates(f"task {t.name!r} needs at least 2 candidates")
        table[t.name] = [score_candidate(c, t.gt, registry, seed=seed).total for c in t.candidates]
    return train_tabular(table, group_size, iterations, step_size, seed, **kwargs)
