"""Path conditions.

Along a value-flow path every vertex holds the same value.  Guards are
written against the variables of their edge's endpoints, so before they are
conjoined each endpoint variable is renamed to the variable of the path head,
which is also where the property-specific constraint is instantiated.  That is
how a guard such as ``a != 0`` on ``a -> c`` meets ``p == 0`` on a path that
starts at ``p``.
"""

from __future__ import annotations

from functools import lru_cache

from .conditions import TRUE, Condition, conj, conjuncts
from .ir import Edge, Path, ValueFlowGraph

# Stand-in for the flowing value in facts shared between paths with
# different heads.  Not a legal .vfg identifier, so it cannot collide.
FLOW = "@v"


def edge_guard(g: ValueFlowGraph, edge: Edge, flow_var: str) -> Condition:
    if edge.guard == TRUE:
        return TRUE
    return _renamed(edge.guard, g.vertices[edge.src].variable, g.vertices[edge.dst].variable, flow_var)


@lru_cache(maxsize=100_000)
def _renamed(guard: Condition, a: str, b: str, flow_var: str) -> Condition:
    return guard.rename({a: flow_var, b: flow_var})


def path_condition(g: ValueFlowGraph, path: Path) -> Condition:
    """Conjunction of the (normalized) guards of ``path``; ``true`` for one vertex."""
    head = g.vertices[path[0]].variable
    return conj(*(edge_guard(g, e, head) for e in g.path_edges(path)))


def guard_atoms(g: ValueFlowGraph, edges: list[Edge], flow_var: str) -> list[tuple[Condition, Edge]]:
    """Each normalized guard conjunct paired with the edge it came from."""
    out = []
    for e in edges:
        for c in conjuncts(edge_guard(g, e, flow_var)):
            out.append((c, e))
    return out
