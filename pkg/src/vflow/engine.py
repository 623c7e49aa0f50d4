"""Shared engine types and the per-property baseline analyzer."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Iterable, Iterator, Optional, Sequence

from .conditions import Condition, conj
from .ir import Edge, Path, Stack, ValueFlowGraph, advance
from .pathcond import edge_guard
from .propspec import PropertySpec, instantiate_psc, match_vertices
from .solver import Solver, SolverBudgetExceeded, SolverCounters


@dataclass(frozen=True)
class FeasiblePath:
    property: str
    path: Path
    pc: Condition
    source: str
    sink: str


@dataclass
class AnalysisStats:
    vertices_visited: int = 0
    solver: SolverCounters = field(default_factory=SolverCounters)
    pruned_psc: int = 0
    pruned_rule2: int = 0
    pruned_rule34: int = 0
    psc_checks_saved: int = 0
    skeleton_visited: int = 0

    def merge(self, other: "AnalysisStats") -> None:
        for f in fields(self):
            if f.name == "solver":
                self.solver.merge(other.solver)
            else:
                setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            out[f.name] = value.as_dict() if f.name == "solver" else value
        return out


Results = dict[str, list[FeasiblePath]]


# -- traversal spaces ----------------------------------------------------------


class GraphSpace:
    """Realizable DFS over the linked graph; a node is ``(vertex, pending calls)``."""

    def __init__(self, g: ValueFlowGraph):
        self.g = g

    def root(self, source: str):
        return (source, ())

    def vertex(self, node) -> str:
        return node[0]

    def children(self, node) -> Iterator[tuple[Edge, object]]:
        vid, stack = node
        for e in self.g.succ[vid]:
            nxt = advance(stack, e)
            if nxt is not None:
                yield e, (e.dst, nxt)


class _TrieNode:
    __slots__ = ("vertex", "children")

    def __init__(self, vertex: str):
        self.vertex = vertex
        self.children: dict[str, "_TrieNode"] = {}


class CandidateSpace:
    """DFS restricted to a fixed set of candidate paths (prefix tree)."""

    def __init__(self, g: ValueFlowGraph, paths: Iterable[Path]):
        self.g = g
        self.roots: dict[str, _TrieNode] = {}
        for p in paths:
            node = self.roots.setdefault(p[0], _TrieNode(p[0]))
            for v in p[1:]:
                node = node.children.setdefault(v, _TrieNode(v))

    def root(self, source: str):
        return self.roots.get(source)

    def vertex(self, node) -> str:
        return node.vertex

    def children(self, node):
        for vid in sorted(node.children):
            yield self.g.edge(node.vertex, vid), node.children[vid]


# -- naive engine --------------------------------------------------------------


def _naive_root(g, space, spec: PropertySpec, source: str, sinks: frozenset, solver: Solver):
    stats = AnalysisStats()
    found: list[FeasiblePath] = []
    root = space.root(source)
    if root is None:
        return found, stats
    head = g.vertices[source].variable
    psc = instantiate_psc(spec, g.vertices[source])
    path: list[str] = [source]
    guards: list[Condition] = []

    def visit(node) -> None:
        vid = space.vertex(node)
        stats.vertices_visited += 1
        pc = conj(*guards)
        try:
            ok = solver.is_sat(conj(pc, psc))
        except SolverBudgetExceeded as exc:
            exc.path = tuple(path)
            raise
        if not ok:
            stats.pruned_psc += 1
            return
        if vid in sinks:
            found.append(FeasiblePath(spec.name, tuple(path), pc, source, vid))
        for edge, child in space.children(node):
            path.append(edge.dst)
            guards.append(edge_guard(g, edge, head))
            visit(child)
            guards.pop()
            path.pop()

    visit(root)
    stats.solver.merge(solver.counters)
    return found, stats


def check_naive(
    g: ValueFlowGraph,
    specs: Sequence[PropertySpec],
    solver: Optional[Solver] = None,
    candidates: Optional[dict[str, list[Path]]] = None,
    threads: int = 1,
) -> tuple[Results, AnalysisStats]:
    """Independent demand-driven search for every property and source.

    With ``candidates`` (property name -> stitched paths) the search runs over
    those paths only; otherwise it walks the graph.
    """
    solver = solver or Solver()
    jobs = []
    for spec in specs:
        space = GraphSpace(g) if candidates is None else CandidateSpace(g, candidates.get(spec.name, []))
        sinks = frozenset(match_vertices(spec.sink, g))
        for source in match_vertices(spec.src, g):
            jobs.append((space, spec, source, sinks))

    def run(job):
        space, spec, source, sinks = job
        return _naive_root(g, space, spec, source, sinks, solver.fork())

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(j) for j in jobs]

    results: Results = {s.name: [] for s in specs}
    stats = AnalysisStats()
    for (_, spec, _, _), (found, st) in zip(jobs, outcomes):
        results[spec.name].extend(found)
        stats.merge(st)
    for name in results:
        results[name].sort(key=lambda fp: fp.path)
    solver.counters.merge(stats.solver)
    return results, stats


def path_sets(results: Results) -> dict[str, list[Path]]:
    return {name: [fp.path for fp in fps] for name, fps in results.items()}
