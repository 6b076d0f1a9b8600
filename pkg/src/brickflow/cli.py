"""Command-line entry point.

Exit codes: 0 success, 1 the input was understood but failed (invalid
workflow, execution fault, critic trouble), 2 bad usage. Diagnostics go to
stderr; stdout carries only JSON, CSV or plain results.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .critic import MetaEdit, RemoteCritic, TaskSpec, abstract_chain, judge, mock_critic
from .errors import BrickflowError
from .executor import execute_workflow
from .matching import similarity_reward
from .mock import MockBackend
from .netpbm import read_ppm, write_pgm, write_ppm
from .prompt import assemble_builder_prompt, default_examples
from .raster import ImageBuf, MaskBuf
from .registry import Registry, default_registry, load_registry_file
from .rewards import decompose_chains, effect_reward, valid_reward
from .training import load_toy_tasks, toy_train
from .validator import validate_document
from .workflow import Workflow


class _Failure(Exception):
    """Domain failure: report on stderr, exit 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _registry(args) -> Registry:
    return load_registry_file(args.registry) if args.registry else default_registry()


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _Failure(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_valid(path: str, r: Registry) -> Workflow:
    w, report = validate_document(_read(path), r)
    if w is None or not report.executable:
        for d in report.errors:
            print(f"{path}: {d.code.value}: {d.message}", file=sys.stderr)
        raise _Failure(f"{path} is not an executable workflow")
    return w


def cmd_validate(args) -> int:
    r = _registry(args)
    _, report = validate_document(_read(args.workflow), r)
    print(report.to_json())
    return 0 if report.executable else 1


def cmd_run(args) -> int:
    r = _registry(args)
    w = _load_valid(args.workflow, r)
    try:
        image = read_ppm(args.image)
    except OSError as exc:
        raise _Failure(f"cannot read {args.image}: {exc}") from None
    backend = MockBackend() if args.backend == "mock" else None
    result = execute_workflow(w, r, backend, {"image": image}, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.jsonl").write_text(result.trace_jsonl(args.seed), encoding="utf-8")
    files = []
    for k, v in enumerate(result.results):
        if isinstance(v, ImageBuf):
            name = f"result{k}.ppm"
            write_ppm(out / name, v)
        elif isinstance(v, MaskBuf):
            name = f"result{k}.pgm"
            write_pgm(out / name, v)
        else:
            name = f"result{k}.txt"
            (out / name).write_text(f"{v}\n", encoding="utf-8")
        files.append(name)
    summary = {"status": "Ok" if result.ok else "Fault", "seed": args.seed, "results": files}
    if result.fault is not None:
        summary["fault"] = {"step": result.fault.step, "reason": result.fault.reason.value,
                            "detail": result.fault.detail}
        print(f"step {result.fault.step}: {result.fault.reason.value}: {result.fault.detail}",
              file=sys.stderr)
    print(json.dumps(summary))
    return 0 if result.ok else 1


def cmd_score_sim(args) -> int:
    r = _registry(args)
    g, gt = _load_valid(args.workflow, r), _load_valid(args.gt, r)
    print(f"{similarity_reward(g, gt, r):.6f}")
    return 0


def _load_task(path: str) -> TaskSpec:
    try:
        rec = json.loads(_read(path))
        edits = [MetaEdit(e["verb"], e["target"]) for e in rec["required_edits"]]
        return TaskSpec(str(rec.get("instruction", "")), tuple(edits))
    except (ValueError, KeyError, TypeError) as exc:
        raise _Failure(f"{path}: bad task file ({exc})") from None


def cmd_score_effect(args) -> int:
    r = _registry(args)
    task = _load_task(args.task)
    w, report = validate_document(_read(args.workflow), r)
    if w is None:
        raise _Failure(f"{args.workflow} does not parse")
    metas = [abstract_chain(c, w, r) for c in decompose_chains(w, r)]
    critic = mock_critic(task) if args.critic == "mock" else RemoteCritic.from_env()
    crit = judge(metas, task.instruction or w.process, critic)
    print(json.dumps({"n_add": crit.n_add, "n_remove": crit.n_remove,
                      "r_valid": valid_reward(report),
                      "r_effect": effect_reward(crit.n_add, crit.n_remove)}))
    return 0


def cmd_chains(args) -> int:
    r = _registry(args)
    w, _ = validate_document(_read(args.workflow), r)
    if w is None:
        raise _Failure(f"{args.workflow} does not parse")
    chains = decompose_chains(w, r)
    print(json.dumps([{**c.to_dict(), "meta_edit": abstract_chain(c, w, r).to_dict()}
                      for c in chains], indent=2))
    return 0


def cmd_prompt(args) -> int:
    print(assemble_builder_prompt(_registry(args), default_examples(), args.instruction), end="")
    return 0


def cmd_train_toy(args) -> int:
    tasks = load_toy_tasks(args.fixtures)
    res = toy_train(tasks, group_size=args.group, iterations=args.iters,
                    step_size=args.step_size, seed=args.seed, registry=_registry(args))
    csv_text = res.to_csv()
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="brickflow", description="Validate, run and score tool workflows.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, workflow=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--registry", help="registry JSON (default: bundled)")
        if workflow:
            sp.add_argument("-w", "--workflow", required=True)
        sp.set_defaults(func=func)
        return sp

    add("validate", cmd_validate, "print the validation report")
    sp = add("run", cmd_run, "execute with the mock backend")
    sp.add_argument("-i", "--image", required=True, help="input PPM")
    sp.add_argument("-o", "--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--backend", choices=("mock", "none"), default="mock")

    score = sub.add_parser("score", help="compute a reward")
    ssub = score.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    sp = ssub.add_parser("sim", help="graph-matching similarity to a reference")
    sp.add_argument("--registry")
    sp.add_argument("-w", "--workflow", required=True)
    sp.add_argument("--gt", required=True)
    sp.set_defaults(func=cmd_score_sim)
    sp = ssub.add_parser("effect", help="critic-based effect reward")
    sp.add_argument("--registry")
    sp.add_argument("-w", "--workflow", required=True)
    sp.add_argument("--task", required=True)
    sp.add_argument("--critic", choices=("mock", "remote"), default="mock")
    sp.set_defaults(func=cmd_score_effect)

    add("chains", cmd_chains, "list editing chains")
    sp = add("prompt", cmd_prompt, "print the builder prompt", workflow=False)
    sp.add_argument("--instruction", required=True)
    sp = add("train-toy", cmd_train_toy, "train the tabular toy policy", workflow=False)
    sp.add_argument("--fixtures", help="toy task JSON (default: bundled)")
    sp.add_argument("--iters", type=int, default=300)
    sp.add_argument("--group", type=int, default=8)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--step-size", type=float, default=0.1)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (_Failure, BrickflowError, OSError) as exc:
        print(f"brickflow: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
