"""Similarity between two workflows by depth-layered node matching.

Each step gets a depth: the longest path from it to a sink (a step nobody
else consumes), so the final steps sit at depth 0. Nodes are only matched
within equal depths, one layer at a time with an optimal assignment, and a
pair survives only if its similarity reaches the threshold. Layers are
visited deepest first so that a reference ``step<k>[x]`` can be compared by
asking whether the two producing steps were matched to each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .registry import Registry, default_registry
from .workflow import InitRef, LiteralNumber, LiteralText, NullRef, StepRef, ValueRef, Workflow, workflow_graph

SIM_THRESHOLD = 0.6
_TIE_TOL = 1e-12


# -- assignment ---------------------------------------------------------------------

def _min_cost_square(cost: np.ndarray) -> list[int]:
    """Shortest augmenting path Hungarian method for a square cost matrix.

    Returns ``col_of_row``.
    """
    n = cost.shape[0]
    INF = math.inf
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)     # p[col] = row matched to col (1-based, 0 = free)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = [0] * n
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _best_total(score: np.ndarray) -> float:
    if score.size == 0:
        return 0.0
    cols = _min_cost_square(-score)
    return float(sum(score[i, c] for i, c in enumerate(cols)))


def hungarian_assign(score: Sequence[Sequence[float]] | np.ndarray) -> list[tuple[int, int]]:
    """Maximum-total assignment of ``min(m, n)`` row/column pairs.

    Among optimal assignments the lexicographically smallest sorted pair list
    is returned: rows are fixed in order, each to the lowest column that
    still allows the optimum.
    """
    s = np.asarray(score, dtype=float)
    if s.ndim != 2 or s.size == 0:
        return []
    if not np.isfinite(s).all():
        raise ValueError("score matrix must be finite")
    m, n = s.shape
    k = max(m, n)
    square = np.zeros((k, k))
    square[:m, :n] = s
    target = _best_total(square)
    tol = _TIE_TOL * max(1.0, abs(target), float(np.abs(s).sum()))

    rows = list(range(k))
    cols = list(range(k))
    fixed_total = 0.0
    pairs: list[tuple[int, int]] = []
    for r in range(k):
        rest_rows = [x for x in rows if x != r]
        chosen = None
        for c in cols:
            rest_cols = [x for x in cols if x != c]
            sub = square[np.ix_(rest_rows, rest_cols)]
            if fixed_total + square[r, c] + _best_total(sub) >= target - tol:
                chosen = c
                break
        assert chosen is not None
        fixed_total += square[r, chosen]
        rows.remove(r)
        cols.remove(chosen)
        if r < m and chosen < n:
            pairs.append((r, chosen))
    return pairs


# -- depth layering --------------------------------------------------------------------

def node_depths(w: Workflow) -> dict[int, int]:
    """Longest path (in edges) from each step to a step with no consumers."""
    g = workflow_graph(w)
    succ: dict[int, list[int]] = {v: [] for v in g.vertices}
    for i, j in g.edges:
        succ[i].append(j)
    depth: dict[int, int] = {}
    for v in sorted(g.vertices, reverse=True):  # consumers always have larger indices
        depth[v] = 1 + max((depth[j] for j in succ[v]), default=-1)
    return dict(sorted(depth.items()))


@dataclass(frozen=True)
class Node:
    step: int
    tool: str
    inputs: Mapping[str, ValueRef]


@dataclass(frozen=True)
class LayeredGraph:
    nodes: tuple[Node, ...]
    depth: Mapping[int, int]

    @classmethod
    def of(cls, w: Workflow, registry: Registry | None = None) -> "LayeredGraph":
        r = registry if registry is not None else default_registry()
        nodes = tuple(Node(st.index, r.canonical(st.model), st.inputs) for st in w.steps)
        return cls(nodes, node_depths(w))

    def layer(self, d: int) -> list[Node]:
        return [n for n in self.nodes if self.depth[n.step] == d]


@dataclass
class MatchResult:
    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    size_g: int = 0
    size_gt: int = 0

    @property
    def denominator(self) -> int:
        return max(self.size_g, self.size_gt)

    def partner(self, step: int) -> int | None:
        return next((b for a, b, _ in self.pairs if a == step), None)


def _norm_text(t: str) -> str:
    return " ".join(t.split()).casefold()


def _same_param(a: ValueRef, b: ValueRef, matched: MatchResult) -> bool:
    if isinstance(a, NullRef) and isinstance(b, NullRef):
        return True
    if isinstance(a, LiteralText) and isinstance(b, LiteralText):
        return _norm_text(a.text) == _norm_text(b.text)
    if isinstance(a, LiteralNumber) and isinstance(b, LiteralNumber):
        return abs(a.value - b.value) <= 1e-9
    if isinstance(a, InitRef) and isinstance(b, InitRef):
        return a.field == b.field
    if isinstance(a, StepRef) and isinstance(b, StepRef):
        return a.field == b.field and matched.partner(a.step) == b.step
    return False


def node_similarity(a: Node, b: Node, matched_so_far: MatchResult | None = None) -> float:
    """Half for using the same tool, half for the share of identical parameters."""
    matched = matched_so_far if matched_so_far is not None else MatchResult()
    same_tool = 1.0 if a.tool == b.tool else 0.0
    slots = set(a.inputs) | set(b.inputs)
    if not slots:
        share = 1.0
    else:
        same = sum(1 for s in slots
                   if s in a.inputs and s in b.inputs
                   and _same_param(a.inputs[s], b.inputs[s], matched))
        share = same / len(slots)
    return 0.5 * same_tool + 0.5 * share


def match_workflows(g: Workflow, gt: Workflow, registry: Registry | None = None,
                    threshold: float = SIM_THRESHOLD) -> MatchResult:
    lg, lgt = LayeredGraph.of(g, registry), LayeredGraph.of(gt, registry)
    result = MatchResult(size_g=len(g.steps), size_gt=len(gt.steps))
    depths = set(lg.depth.values()) & set(lgt.depth.values())
    for d in sorted(depths, reverse=True):
        left, right = lg.layer(d), lgt.layer(d)
        sims = np.array([[node_similarity(a, b, result) for b in right] for a in left])
        for i, j in hungarian_assign(sims):
            if sims[i, j] >= threshold:
                result.pairs.append((left[i].step, right[j].step, float(sims[i, j])))
    return result


def similarity_reward(g: Workflow, gt: Workflow, registry: Registry | None = None,
                      threshold: float = SIM_THRESHOLD) -> float:
    """Coverage of matched nodes plus their mean similarity, each weighted 0.5."""
    m = match_workflows(g, gt, registry, threshold)
    if not m.pairs:
        return 0.0
    coverage = len(m.pairs) / m.denominator
    mean_sim = sum(s for _, _, s in m.pairs) / len(m.pairs)
    return 0.5 * coverage + 0.5 * mean_sim
