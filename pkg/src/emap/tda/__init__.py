from .bottleneck import bottleneck_distance, normalized_bottleneck
from .diagram import DiagramError, PersistenceDiagram, diagrams_from_json, diagrams_to_json
from .rips import (
    DEFAULT_SIMPLEX_BUDGET,
    EdgeFiltration,
    FiltrationParams,
    SimplexBudgetExceeded,
    rips_persistence,
)

__all__ = [
    "DEFAULT_SIMPLEX_BUDGET",
    "DiagramError",
    "EdgeFiltration",
    "FiltrationParams",
    "PersistenceDiagram",
    "SimplexBudgetExceeded",
    "bottleneck_distance",
    "diagrams_from_json",
    "diagrams_to_json",
    "normalized_bottleneck",
    "rips_persistence",
]
