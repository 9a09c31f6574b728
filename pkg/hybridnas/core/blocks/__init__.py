"""骨干计算块与计算图"""

from .base import Block, BlockKind, BlockSpec, ForwardTrace
from .graph import (
    ComputeGraph,
    CostBreakdown,
    RecurrentState,
    build_graph,
    build_plain_graph,
    cost,
    cost_breakdown,
    cost_full_model,
    forward,
    plan_graph,
    summary,
)

__all__ = [
    "Block",
    "BlockKind",
    "BlockSpec",
    "ForwardTrace",
    "ComputeGraph",
    "CostBreakdown",
    "RecurrentState",
    "build_graph",
    "build_plain_graph",
    "cost",
    "cost_breakdown",
    "cost_full_model",
    "forward",
    "plan_graph",
    "summary",
]
