"""Aggregate predicates over feasible paths.

``never``: every feasible path is a bug.  ``never-sim``: two distinct paths
from one source must not be feasible together.  ``must``: some path from each
source must be taken whenever the source occurs.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

from .conditions import Condition, conj, disj, neg
from .engine import FeasiblePath, Results
from .ir import Path, ValueFlowGraph
from .propspec import PropertySpec, instantiate_psc, match_vertices
from .solver import Solver


@dataclass(frozen=True)
class BugReport:
    property: str
    kind: str
    witness: tuple[Path, ...]
    source: str
    condition_checked: Condition

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "source": self.source,
            "witness": [list(p) for p in self.witness],
            "condition": str(self.condition_checked),
        }


def by_source(paths: Sequence[FeasiblePath], sources: Sequence[str] = ()) -> dict[str, list[FeasiblePath]]:
    """Group paths by head; ``sources`` adds entries for path-less sources."""
    out: dict[str, list[FeasiblePath]] = {s: [] for s in sources}
    for fp in paths:
        out.setdefault(fp.source, []).append(fp)
    return {s: sorted(out[s], key=lambda fp: fp.path) for s in sorted(out)}


def agg_never(paths: Sequence[FeasiblePath], psc: Condition) -> list[BugReport]:
    """One report per feasible path; ``psc`` is already bound to the head."""
    return [
        BugReport(fp.property, "path-bug", (fp.path,), fp.source, conj(fp.pc, psc))
        for fp in sorted(paths, key=lambda fp: fp.path)
    ]


def agg_never_sim(paths: Sequence[FeasiblePath], psc: Condition, solver: Solver) -> list[BugReport]:
    """Pairs of distinct paths from one source whose conditions can hold together."""
    reports = []
    ordered = sorted(paths, key=lambda fp: fp.path)
    for a, b in combinations(ordered, 2):
        if a.path == b.path:
            continue
        cond = conj(a.pc, b.pc, psc)
        if solver.is_sat(cond):
            reports.append(BugReport(a.property, "pair-bug", (a.path, b.path), a.source, cond))
    return reports


def agg_must(name: str, source: str, paths: Sequence[FeasiblePath], psc: Condition,
             source_cond: Condition, solver: Solver) -> list[BugReport]:
    """A leak when the source can occur while no path's condition holds."""
    cond = conj(neg(disj(*(fp.pc for fp in paths))), source_cond, psc)
    if solver.is_sat(cond):
        return [BugReport(name, "leak-bug", ((source,),), source, cond)]
    return []


def aggregate_property(g: ValueFlowGraph, spec: PropertySpec, paths: Sequence[FeasiblePath],
                       solver: Optional[Solver] = None, threads: int = 1) -> list[BugReport]:
    solver = solver or Solver()
    groups = by_source(paths, match_vertices(spec.src, g) if spec.agg == "must" else ())

    def one(item: tuple[str, list[FeasiblePath]], s: Solver) -> list[BugReport]:
        source, fps = item
        psc = instantiate_psc(spec, g.vertices[source])
        if spec.agg == "never":
            return agg_never(fps, psc)
        if spec.agg == "never-sim":
            return agg_never_sim(fps, psc, s)
        return agg_must(spec.name, source, fps, psc, g.vertices[source].cond, s)

    items = list(groups.items())
    if threads > 1 and len(items) > 1:
        workers = [solver.fork() for _ in items]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(one, items, workers))
        for w in workers:
            solver.counters.merge(w.counters)
    else:
        chunks = [one(item, solver) for item in items]
    return [r for chunk in chunks for r in chunk]


def aggregate(g: ValueFlowGraph, specs: Sequence[PropertySpec], results: Results,
              solver: Optional[Solver] = None, threads: int = 1) -> dict[str, list[BugReport]]:
    solver = solver or Solver()
    return {s.name: aggregate_property(g, s, results.get(s.name, []), solver, threads) for s in specs}

