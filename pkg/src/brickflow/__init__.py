"""Typed tool-invocation workflows for image editing: parse, check, run and score them."""

from .critic import Critique, MetaEdit, RemoteCritic, TaskSpec, abstract_chain, judge, mock_critic
from .executor import ExecutionResult, Fault, FaultReason, execute_workflow, topological_schedule
from .matching import MatchResult, hungarian_assign, match_workflows, node_depths, similarity_reward
from .mock import MockBackend
from .prompt import assemble_builder_prompt, default_examples
from .raster import ImageBuf, MaskBuf, op_bbox, op_compose, op_inverse, op_resize
from .registry import (
    Registry,
    SlotSpec,
    ToolKind,
    ToolSpec,
    check_constraints,
    default_registry,
    load_registry,
    lookup_tool,
    register_tool,
)
from .rewards import (
    EditChain,
    GroupBatch,
    RewardBreakdown,
    decompose_chains,
    effect_reward,
    group_advantages,
    grpo_objective,
    sft_nll,
    stage_reward,
    valid_reward,
)
from .training import toy_train, train_tabular
from .validator import ValidationReport, validate_document, validate_workflow
from .workflow import (
    SemanticType,
    Step,
    Workflow,
    parse_value_ref,
    parse_workflow,
    serialize_workflow,
    workflow_graph,
)

__version__ = "0.1.0"

__all__ = [
    "abstract_chain",
    "assemble_builder_prompt",
    "check_constraints",
    "Critique",
    "decompose_chains",
    "default_examples",
    "default_registry",
    "EditChain",
    "effect_reward",
    "execute_workflow",
    "ExecutionResult",
    "Fault",
    "FaultReason",
    "group_advantages",
    "GroupBatch",
    "grpo_objective",
    "hungarian_assign",
    "ImageBuf",
    "judge",
    "load_registry",
    "lookup_tool",
    "MaskBuf",
    "match_workflows",
    "MatchResult",
    "MetaEdit",
    "mock_critic",
    "MockBackend",
    "node_depths",
    "op_bbox",
    "op_compose",
    "op_inverse",
    "op_resize",
    "parse_value_ref",
    "parse_workflow",
    "register_tool",
    "Registry",
    "RemoteCritic",
    "RewardBreakdown",
    "SemanticType",
    "serialize_workflow",
    "sft_nll",
    "similarity_reward",
    "SlotSpec",
    "stage_reward",
    "Step",
    "TaskSpec",
    "ToolKind",
    "ToolSpec",
    "topological_schedule",
    "toy_train",
    "train_tabular",
    "valid_reward",
    "validate_document",
    "validate_workflow",
    "ValidationReport",
    "Workflow",
    "workflow_graph",
]
