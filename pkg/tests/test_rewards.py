import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brickflow.errors import GroupTooSmall, MissingComponent, NonFiniteInput
from brickflow.executor import execute_workflow
from brickflow.mock import MockBackend
from brickflow.rewards import (
    GroupBatch,
    decompose_chains,
    effect_reward,
    group_advantages,
    grpo_grad_logp,
    grpo_objective,
    kl_terms,
    sft_nll,
    stage_reward,
    valid_reward,
)
from brickflow.training import objective_and_grad
from brickflow.validator import validate_workflow
from brickflow.workflow import InitRef, StepRef, parse_workflow

from conftest import example
from mutations import edit


class _Failing:
    def invoke(self, tool, inputs, seed):
        raise RuntimeError("never reached")


def test_valid_reward(registry, checker64):
    w = example("example2")
    rep = validate_workflow(w, registry)
    assert valid_reward(rep, execute_workflow(w, registry, MockBackend(), {"image": checker64})) == 0
    bad = parse_workflow(edit("example2", lambda d: d["pipeline"][1].update(model="X")))
    assert valid_reward(validate_workflow(bad, registry)) == -1
    faulted = execute_workflow(w, registry, None, {"image": checker64})
    assert valid_reward(rep, faulted) == -1


def test_chains_example2(registry):
    (c,) = decompose_chains(example("example2"), registry)
    assert (c.editor, c.support) == (3, (1, 2))


def test_chains_example3(registry):
    a, b = decompose_chains(example("example3"), registry)
    assert (a.editor, a.support) == (4, (1, 3))
    # FILL reaches RES through ADD-PRED's mask input
    assert (b.editor, b.support) == (5, (1, 2))
    assert StepRef(4, "image") in b.inputs_from


def test_chains_example1(registry):
    a, b = decompose_chains(example("example1"), registry)
    assert (a.editor, a.support, b.editor, b.support) == (2, (1,), 4, (3,))
    assert InitRef("image") in a.inputs_from


def test_no_chains_for_predictive_only(registry):
    w = parse_workflow('{"process": "p", "pipeline": [{"step": 1, "model": "SOS", "input": '
                       '{"image": "init[image]"}, "output": {}}, {"result": ["step1[image]"]}]}')
    assert decompose_chains(w, registry) == []


def test_effect_reward():
    assert effect_reward(0, 0) == 1.0
    assert effect_reward(1, 1) == 0.0
    assert effect_reward(3, 0) == -0.5
    with pytest.raises(ValueError):
        effect_reward(-1, 0)


def test_stage_reward():
    assert stage_reward(2, 0, r_sim=0.7833).total == 0.7833
    assert stage_reward(3, -1, r_effect=1.0).total == 0.0
    with pytest.raises(MissingComponent):
        stage_reward(2, 0)
    with pytest.raises(MissingComponent):
        stage_reward(3, 0, r_sim=1.0)


def test_advantage_examples():
    assert group_advantages([1, 1, 1]) == [0.0, 0.0, 0.0]
    assert group_advantages([1, 0]) == [1.0, -1.0]
    assert group_advantages([2, 1, 0]) == pytest.approx([1.2247, 0, -1.2247], abs=1e-4)
    with pytest.raises(GroupTooSmall):
        group_advantages([1.0])
    with pytest.raises(NonFiniteInput):
        group_advantages([1.0, math.nan])


def test_advantage_normalisation():
    rng = np.random.default_rng(0)
    for _ in range(200):
        r = rng.normal(size=rng.integers(2, 16)) * rng.uniform(0.01, 10)
        a = np.array(group_advantages(r))
        assert abs(a.mean()) <= 1e-9 and abs(a.std() - 1) <= 1e-9


def test_objective_worked_examples():
    lp = [-1.0, -2.0]
    assert grpo_objective(GroupBatch([1.0, -1.0], lp, lp, lp)) == 0.0
    b = GroupBatch([1, -1], [math.log(1.5), 0.0], [0.0, 0.0], [0.0, 0.0], epsilon=0.2, beta=0.0)
    assert grpo_objective(b) == pytest.approx(0.1, abs=1e-9)
    ln2 = math.log(2)
    b = GroupBatch([0, 0], [-1.0, -2.0], [-1.0, -2.0], [-1.0 + ln2, -2.0 + ln2], beta=1.0)
    assert grpo_objective(b) == pytest.approx(-(1 - ln2), abs=1e-9)


def test_batch_checks():
    with pytest.raises(ValueError):
        grpo_objective(GroupBatch([1.0], [0.0, 0.0], [0.0], [0.0]))
    with pytest.raises(NonFiniteInput):
        grpo_objective(GroupBatch([1.0], [math.inf], [0.0], [0.0]))
    with pytest.raises(ValueError):
        grpo_objective(GroupBatch([1.0], [0.0], [0.0], [0.0], epsilon=0.0))


def _per_sample(a, ratio, eps=0.2):
    return min(ratio * a, min(max(ratio, 1 - eps), 1 + eps) * a)


def test_clipping_flat_regions():
    grid = np.linspace(0.5, 1.5, 101)
    for a in (1.0, -1.0):
        for r in grid:
            b = GroupBatch([a], [math.log(r)], [0.0], [math.log(r)], beta=0.0)
            assert grpo_objective(b) == pytest.approx(_per_sample(a, r))
            flat = (a > 0 and r > 1.2) or (a < 0 and r < 0.8)
            if flat:
                assert grpo_grad_logp(b)[0] == 0.0
                h = 1e-6
                up = GroupBatch([a], [math.log(r) + h], [0.0], [math.log(r)], beta=0.0)
                assert grpo_objective(up) == pytest.approx(grpo_objective(b), abs=1e-12)


@given(st.floats(-30, 30), st.floats(-30, 30))
def test_kl_nonnegative(new, ref):
    assert kl_terms([new], [ref])[0] >= 0.0


def _fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    done = 0
    while done < 50:
        n = int(rng.integers(2, 6))
        G = int(rng.integers(2, 9))
        logits = rng.normal(size=n)
        ref = rng.normal(size=n)
        old = logits + rng.normal(scale=0.3, size=n)
        samples = rng.integers(0, n, G)
        adv = np.array(group_advantages(rng.normal(size=G)))
        logp_old_all = old - np.log(np.exp(old).sum())
        logp_old = logp_old_all[samples]
        t = float(rng.uniform(0.5, 2.0))
        beta = float(rng.uniform(0, 0.5))
        f = lambda z: objective_and_grad(z, samples, adv, logp_old, ref, t, 0.2, beta)[0]
        _, g = objective_and_grad(logits, samples, adv, logp_old, ref, t, 0.2, beta)
        # skip instances sitting on a clipping kink, where the derivative is undefined
        lp = logits / t - np.log(np.exp(logits / t).sum())
        ratio = np.exp(lp[samples] - logp_old)
        if np.min(np.abs(np.abs(ratio - 1) - 0.2)) < 1e-3:
            continue
        fd = _fd_grad(f, logits)
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(fd), 1e-8)
        done += 1


def test_sft_nll():
    assert sft_nll([-0.5, -1.5]) == 2.0
    assert sft_nll([]) == 0.0
    assert sft_nll([0, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        sft_nll([0.1])
