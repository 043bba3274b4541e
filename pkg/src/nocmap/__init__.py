"""Hybrid design-time/run-time application mapping for mesh-NoC MPSoCs.

Design-time: multi-objective exploration of task mappings with composable
timing and energy analysis, compacted into constraint graphs and serialized
as operating points. Run-time: a constraint-solving manager that admits
application mixes under temporal or spatial isolation.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    Architecture,
    EnergyModel,
    InvariantError,
    Message,
    ParseError,
    PE,
    SchedulingParams,
    Task,
    TaskGraph,
    hop_count,
    load_architecture,
    load_taskgraph,
    xy_route,
)
