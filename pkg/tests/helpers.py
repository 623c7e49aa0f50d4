"""Shared oracles for the engine tests."""

from vflow.conditions import conj
from vflow.ir import enumerate_paths
from vflow.pathcond import path_condition
from vflow.propspec import instantiate_psc, match_vertices
from vflow.workload import GenParams


def oracle_paths(g, specs, solver):
    """Brute force: every realizable source-to-sink path whose pc and psc are jointly sat."""
    out = {}
    for s in specs:
        keep = []
        for p in enumerate_paths(g, match_vertices(s.src, g), match_vertices(s.sink, g)):
            if solver.check(conj(path_condition(g, p), instantiate_psc(s, g.vertices[p[0]]))):
                keep.append(p)
        out[s.name] = keep
    return out


def small_params(seed: int) -> GenParams:
    return GenParams(functions=1 + seed % 3, vertices_min=2, vertices_max=5, properties=1 + seed % 5)
