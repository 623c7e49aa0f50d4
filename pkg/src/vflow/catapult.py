"""Inter-property-aware engine.

Properties are checked group by group.  A group is the set of properties
that share exactly the same source vertices; its members are searched in one
merged traversal that carries the set of still-live properties.  While a group
is traversed the engine records facts for the properties of later groups:
which vertices cannot reach their sinks, and which edge sets contradict their
property-specific constraints.  Later groups prune with those facts.

Rules (numbering used by ``rules`` masks and the CLI):

1. order groups by descending sink count
2. record / use sink reachability
3. record / use unsat cores for equal constraints
4. record / use interpolants for different constraints
5. merge traversals of properties with equal sources
6. implied constraint: a satisfiable stronger check settles the weaker one
7. overlapping constraints: one joint check settles both when satisfiable
8. disjoint, exhaustive constraints: one failed check settles the other
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .conditions import TRUE, Condition, conj
from .engine import AnalysisStats, CandidateSpace, FeasiblePath, GraphSpace, Results
from .ir import Edge, Path, ValueFlowGraph
from .pathcond import FLOW, edge_guard, guard_atoms
from .propspec import FLOW_SYMBOL, PropertySpec, instantiate_psc, match_vertices
from .solver import NotUnsatError, Solver, SolverBudgetExceeded

ALL_RULES = frozenset(range(1, 9))
DEFAULT_SKELETON_BUDGET = 100_000


class InvariantViolation(RuntimeError):
    """An internal store invariant does not hold."""


def rules_from_mask(mask: int) -> frozenset[int]:
    """Bit ``k-1`` of ``mask`` enables rule ``k``."""
    return frozenset(k for k in range(1, 9) if mask >> (k - 1) & 1)


@dataclass
class PlanGroup:
    members: list[PropertySpec]
    sources: list[str]
    sink_count: int
    strategies: list[tuple[str, str, str]] = field(default_factory=list)


@dataclass
class Plan:
    groups: list[PlanGroup]
    rules: frozenset[int]
    reach_bits: list[int]
    core_targets: dict[str, int]
    interp_targets: dict[str, list[PropertySpec]]
    relation: dict[tuple[str, str], str]
    exhaustive: set[tuple[str, str]]
    eager_targets: list[list[tuple[Condition, int]]]

    @property
    def check_order(self) -> list[str]:
        return [s.name for grp in self.groups for s in grp.members]

    def describe(self) -> dict:
        later = {}
        for i, grp in enumerate(self.groups):
            later[i] = [s.name for g2 in self.groups[i + 1:] for s in g2.members]
        return {
            "order": self.check_order,
            "groups": [[s.name for s in grp.members] for grp in self.groups],
            "psc_strategies": [
                {"first": a, "second": b, "strategy": st}
                for grp in self.groups for a, b, st in grp.strategies
            ],
            "recording": [
                {
                    "from": [s.name for s in grp.members],
                    "reach_for": later[i] if 2 in self.rules else [],
                    "cores_for": sorted({t.name for s in grp.members for t in self._targets(s, 3)}),
                    "interpolants_for": sorted({t.name for s in grp.members for t in self._targets(s, 4)}),
                }
                for i, grp in enumerate(self.groups)
            ],
            "rules": sorted(self.rules),
        }

    def _targets(self, spec: PropertySpec, rule: int) -> list[PropertySpec]:
        everyone = [s for grp in self.groups for s in grp.members]
        if rule == 3:
            mask = self.core_targets.get(spec.name, 0)
            return [s for s in everyone if s.mask & mask]
        return self.interp_targets.get(spec.name, [])


def make_plans(
    g: ValueFlowGraph,
    specs: Sequence[PropertySpec],
    solver: Optional[Solver] = None,
    rules: frozenset[int] = ALL_RULES,
    forced_order: Optional[Sequence[str]] = None,
    eager_conflicts: bool = False,
) -> Plan:
    if not specs:
        raise ValueError("no properties to plan for")
    solver = solver or Solver()
    if forced_order is not None:
        if sorted(forced_order) != sorted(s.name for s in specs):
            raise ValueError("forced order must be a permutation of the property names")
        rank = {name: i for i, name in enumerate(forced_order)}
    else:
        rank = {s.name: s.bit for s in specs}

    sources = {s.name: match_vertices(s.src, g) for s in specs}
    sink_count = {s.name: len(match_vertices(s.sink, g)) for s in specs}

    buckets: dict[tuple, list[PropertySpec]] = {}
    for s in sorted(specs, key=lambda s: rank[s.name]):
        key = tuple(sources[s.name]) if 5 in rules else (s.name,)
        buckets.setdefault(key, []).append(s)
    groups = [
        PlanGroup(members, sources[members[0].name], sum(sink_count[m.name] for m in members))
        for members in buckets.values()
    ]
    if forced_order is not None:
        groups.sort(key=lambda grp: min(rank[m.name] for m in grp.members))
    elif 1 in rules:
        groups.sort(key=lambda grp: (-grp.sink_count, min(m.name for m in grp.members)))
    else:
        groups.sort(key=lambda grp: min(rank[m.name] for m in grp.members))

    relation: dict[tuple[str, str], str] = {}
    exhaustive: set[tuple[str, str]] = set()
    psc_rules = rules & {6, 7, 8}
    for grp in groups:
        if len(grp.members) < 2 or not psc_rules:
            continue
        ms = grp.members
        for a in ms:
            for b in ms:
                if a is not b:
                    relation[(a.name, b.name)] = solver.classify_psc_pair(a.psc, b.psc)
                    if relation[(a.name, b.name)] == "disjoint" and solver.exhaustive(a.psc, b.psc):
                        exhaustive.add((a.name, b.name))
        # stronger constraints first so that rule 6 can settle the weaker ones
        strength = {m.name: sum(relation[(m.name, o.name)] == "implies" for o in ms if o is not m) for m in ms}
        grp.members = sorted(ms, key=lambda m: (-strength[m.name], rank[m.name]))
        for i, a in enumerate(grp.members):
            for b in grp.members[i + 1:]:
                rel = relation[(a.name, b.name)]
                if rel == "implies" and 6 in rules:
                    st = "implies-chain"
                elif rel == "overlapping" and relation[(b.name, a.name)] == "overlapping" and 7 in rules:
                    st = "joint-check"
                elif rel == "disjoint" and 8 in rules and (a.name, b.name) in exhaustive:
                    st = "disjoint-pair"
                else:
                    st = "independent"
                grp.strategies.append((a.name, b.name, st))

    reach_bits: list[int] = []
    core_targets: dict[str, int] = {}
    interp_targets: dict[str, list[PropertySpec]] = {}
    eager_targets: list[list[tuple[Condition, int]]] = []
    for i, grp in enumerate(groups):
        later = [s for g2 in groups[i + 1:] for s in g2.members]
        reach_bits.append(sum(s.mask for s in later) if 2 in rules else 0)
        by_psc: dict[Condition, int] = {}
        for x in grp.members:
            same = [y for y in later if solver.equivalent(x.psc, y.psc)]
            diff = [y for y in later if y not in same and y.psc != TRUE]
            if 3 in rules and same and x.psc != TRUE:
                core_targets[x.name] = sum(y.mask for y in same)
            if 4 in rules and diff and x.psc != TRUE:
                interp_targets[x.name] = diff
        if eager_conflicts and rules & {3, 4}:
            for y in later:
                if y.psc != TRUE:
                    by_psc[y.psc] = by_psc.get(y.psc, 0) | y.mask
        eager_targets.append(sorted(by_psc.items(), key=lambda kv: str(kv[0])))
    return Plan(groups, frozenset(rules), reach_bits, core_targets, interp_targets, relation, exhaustive, eager_targets)


# -- stores --------------------------------------------------------------------


class SinkReachStore:
    """``(vertex, bit) -> reaches?``; absent keys are unknown."""

    def __init__(self):
        self.entries: dict[tuple[str, int], bool] = {}

    def get(self, vertex: str, bit: int) -> Optional[bool]:
        return self.entries.get((vertex, bit))


class _BudgetOut(Exception):
    pass


def finalize_reach(store: SinkReachStore, g: ValueFlowGraph, vertex: str, bits: Sequence[int],
                   sinks: dict[int, frozenset]) -> SinkReachStore:
    """Decide ``vertex`` from already-decided successors."""
    for bit in bits:
        if store.get(vertex, bit) is not None:
            continue
        if vertex in sinks[bit]:
            store.entries[(vertex, bit)] = True
            continue
        verdicts = [store.get(e.dst, bit) for e in g.succ[vertex]]
        if any(v is None for v in verdicts):
            raise InvariantViolation(f"successor of {vertex} undecided for property bit {bit}")
        store.entries[(vertex, bit)] = any(verdicts)
    return store


def record_reach(store: SinkReachStore, g: ValueFlowGraph, vertex: str, bits: Sequence[int],
                 sinks: dict[int, frozenset], budget: int) -> int:
    """Walk the constraint-free subgraph below ``vertex`` until it can be finalized.

    Returns the number of vertices the walk touched.  When the walk would
    exceed ``budget`` the remaining entries are left unknown.
    """
    steps = 0

    def settle(v: str, pending: list[int]) -> None:
        nonlocal steps
        todo = [b for b in pending if store.get(v, b) is None and v not in sinks[b]]
        if todo:
            for e in g.succ[v]:
                if any(store.get(e.dst, b) is None for b in todo):
                    steps += 1
                    if steps > budget:
                        raise _BudgetOut
                    settle(e.dst, todo)
        finalize_reach(store, g, v, pending, sinks)

    try:
        settle(vertex, list(bits))
    except _BudgetOut:
        pass
    return steps


@dataclass(frozen=True)
class ConflictEntry:
    edges: frozenset[int]
    bits: int
    rule: int
    fact: Condition  # the recorded psc (rule 3) or interpolant (rule 4), over FLOW


class ConflictStore:
    """Edge sets known to contradict some properties' constraints.

    Entries are indexed by their topologically last edge: a path contains an
    entry's edges only after it has traversed that edge.
    """

    def __init__(self, g: ValueFlowGraph):
        self.g = g
        self.by_key: dict[Optional[int], list[ConflictEntry]] = defaultdict(list)
        self.entries: list[ConflictEntry] = []

    def add(self, entry: ConflictEntry) -> None:
        if entry in self.entries:
            return
        self.entries.append(entry)
        if entry.edges:
            key = max(entry.edges, key=lambda eid: self.g.topo_index[self.g.edges[eid].dst])
        else:
            key = None
        self.by_key[key].append(entry)

    def covered(self, path_edges: set[int]) -> int:
        """Bits of every entry contained in ``path_edges``, whatever its key."""
        bits = 0
        for entry in self.entries:
            if entry.edges <= path_edges:
                bits |= entry.bits
        return bits

    def hits(self, key: Optional[int], path_edges: set[int]) -> int:
        bits = 0
        for entry in self.by_key.get(key, ()):
            if entry.edges <= path_edges:
                bits |= entry.bits
        return bits


# -- the engine ----------------------------------------------------------------


class Catapult:
    def __init__(
        self,
        g: ValueFlowGraph,
        specs: Sequence[PropertySpec],
        solver: Optional[Solver] = None,
        rules: frozenset[int] = ALL_RULES,
        forced_order: Optional[Sequence[str]] = None,
        candidates: Optional[dict[str, list[Path]]] = None,
        skeleton_budget: int = DEFAULT_SKELETON_BUDGET,
        eager_conflicts: bool = False,
    ):
        self.g = g
        self.specs = list(specs)
        self.solver = solver or Solver()
        self.rules = frozenset(rules)
        self.candidates = candidates
        self.skeleton_budget = skeleton_budget
        self.plan = make_plans(g, self.specs, self.solver, self.rules, forced_order, eager_conflicts)
        self.reach = SinkReachStore()
        self.conflicts = ConflictStore(g)
        self.stats = AnalysisStats()
        self.sinks = {s.bit: frozenset(match_vertices(s.sink, g)) for s in self.specs}
        self.by_bit = {s.bit: s for s in self.specs}

    def run(self) -> Results:
        results: Results = {s.name: [] for s in self.specs}
        before = self.solver.counters.as_dict()
        for index, grp in enumerate(self.plan.groups):
            self._run_group(index, grp, results)
        after = self.solver.counters.as_dict()
        for k in after:
            setattr(self.stats.solver, k, getattr(self.stats.solver, k) + after[k] - before[k])
        for name in results:
            results[name].sort(key=lambda fp: fp.path)
        return results

    # -- group traversal --

    def _space(self, grp: PlanGroup):
        if self.candidates is None:
            return GraphSpace(self.g)
        paths = sorted({p for m in grp.members for p in self.candidates.get(m.name, [])})
        return CandidateSpace(self.g, paths)

    def _run_group(self, index: int, grp: PlanGroup, results: Results) -> None:
        g, rules, stats = self.g, self.rules, self.stats
        space = self._space(grp)
        members = grp.members
        reach_bits = [b for b in range(len(self.specs)) if self.plan.reach_bits[index] >> b & 1]
        eager = self.plan.eager_targets[index]
        for source in grp.sources:
            root = space.root(source)
            if root is None:
                continue
            head = g.vertices[source].variable
            pscs = {m.bit: instantiate_psc(m, g.vertices[source]) for m in members}
            path: list[str] = [source]
            edges: list[Edge] = []
            edge_ids: set[int] = set()
            guards: list[Condition] = []

            def visit(node, live: list[PropertySpec], parent_sat: bool, via: Optional[Edge]) -> None:
                vid = space.vertex(node)
                stats.vertices_visited += 1
                if 2 in rules:
                    kept = []
                    for m in live:
                        if self.reach.get(vid, m.bit) is False:
                            stats.pruned_rule2 += 1
                        else:
                            kept.append(m)
                    live = kept
                if rules & {3, 4} and live:
                    hit = self.conflicts.hits(via.eid if via else None, edge_ids)
                    if hit:
                        kept = []
                        for m in live:
                            if hit & m.mask:
                                stats.pruned_rule34 += 1
                            else:
                                kept.append(m)
                        live = kept
                pc = conj(*guards)
                pc_sat = parent_sat and (via is None or edge_guard(g, via, head) == TRUE)
                if live:
                    verdict, pc_sat = self._psc_checks(live, pc, pscs, pc_sat, path)
                    for m in live:
                        if not verdict[m.bit]:
                            stats.pruned_psc += 1
                            self._record_conflict(m, edges, path)
                    live = [m for m in live if verdict[m.bit]]
                if eager:
                    self._eager(eager, pc, head, edges, path)
                for m in live:
                    if vid in self.sinks[m.bit]:
                        results[m.name].append(FeasiblePath(m.name, tuple(path), pc, source, vid))
                if live:
                    for edge, child in space.children(node):
                        path.append(edge.dst)
                        edges.append(edge)
                        edge_ids.add(edge.eid)
                        guards.append(edge_guard(g, edge, head))
                        visit(child, live, True, edge)
                        guards.pop()
                        edge_ids.discard(edge.eid)
                        edges.pop()
                        path.pop()
                if reach_bits:
                    stats.skeleton_visited += record_reach(
                        self.reach, g, vid, reach_bits, self.sinks, self.skeleton_budget
                    )

            visit(root, list(members), True, None)

    def _sat(self, cond: Condition, path: list[str]) -> bool:
        try:
            return self.solver.is_sat(cond)
        except SolverBudgetExceeded as exc:
            exc.path = tuple(path)
            raise

    def _psc_checks(self, live, pc, pscs, pc_sat, path):
        rules, stats, plan = self.rules, self.stats, self.plan
        verdict: dict[int, bool] = {}
        for i, y in enumerate(live):
            if y.bit in verdict:
                continue
            inferred = None
            if 6 in rules:
                if any(verdict.get(x.bit) and plan.relation.get((x.name, y.name)) == "implies" for x in live):
                    inferred = True
            if inferred is None and 8 in rules and pc_sat:
                if any(verdict.get(x.bit) is False and (x.name, y.name) in plan.exhaustive for x in live):
                    inferred = True
            if inferred is not None:
                verdict[y.bit] = inferred
                stats.psc_checks_saved += 1
                continue
            partner = None
            if 7 in rules:
                for z in live[i + 1:]:
                    if z.bit not in verdict and plan.relation.get((y.name, z.name)) == "overlapping" \
                            and plan.relation.get((z.name, y.name)) == "overlapping":
                        partner = z
                        break
            if partner is not None:
                if self._sat(conj(pc, pscs[y.bit], pscs[partner.bit]), path):
                    verdict[y.bit] = verdict[partner.bit] = True
                    stats.psc_checks_saved += 1
                    pc_sat = True
                    continue
            ok = self._sat(conj(pc, pscs[y.bit]), path)
            verdict[y.bit] = ok
            pc_sat = pc_sat or ok
        return verdict, pc_sat

    # -- conflict recording --

    def _canonical_atoms(self, edges: list[Edge]) -> list[tuple[Condition, Edge]]:
        return guard_atoms(self.g, edges, FLOW)

    def _record_conflict(self, spec: PropertySpec, edges: list[Edge], path) -> None:
        core_bits = self.plan.core_targets.get(spec.name, 0)
        interp = self.plan.interp_targets.get(spec.name, [])
        if not core_bits and not interp:
            return
        atoms = self._canonical_atoms(edges)
        psc = spec.psc.rename({FLOW_SYMBOL: FLOW})
        try:
            core = self.solver.unsat_core_indices([a for a, _ in atoms], psc)
        except NotUnsatError:
            return  # the clash needs the head variable itself; not reusable
        core_edges = frozenset(atoms[i][1].eid for i in core)
        if core_bits:
            self.conflicts.add(ConflictEntry(core_edges, core_bits, 3, psc))
        if interp:
            core_atoms = [atoms[i][0] for i in core]
            gamma = self.solver.interpolant(core_atoms, psc, var=FLOW)
            if gamma is None:
                return
            bits = 0
            for y in interp:
                if not self.solver.check(conj(gamma, y.psc.rename({FLOW_SYMBOL: FLOW}))):
                    bits |= y.mask
            if bits:
                self.conflicts.add(ConflictEntry(core_edges, bits, 4, gamma))

    def _eager(self, targets, pc, head, edges, path) -> None:
        known = self.conflicts.covered({e.eid for e in edges})
        for psc_template, bits in targets:
            if bits & ~known == 0:
                continue
            flowing = psc_template.rename({FLOW_SYMBOL: head})
            if self._sat(conj(pc, flowing), path):
                continue
            atoms = self._canonical_atoms(edges)
            canon = psc_template.rename({FLOW_SYMBOL: FLOW})
            try:
                core = self.solver.unsat_core_indices([a for a, _ in atoms], canon)
            except NotUnsatError:
                continue
            self.conflicts.add(ConflictEntry(frozenset(atoms[i][1].eid for i in core), bits, 3, canon))


def check_catapult(
    g: ValueFlowGraph,
    specs: Sequence[PropertySpec],
    solver: Optional[Solver] = None,
    rules: frozenset[int] = ALL_RULES,
    forced_order: Optional[Sequence[str]] = None,
    candidates: Optional[dict[str, list[Path]]] = None,
    skeleton_budget: int = DEFAULT_SKELETON_BUDGET,
    eager_conflicts: bool = False,
) -> tuple[Results, AnalysisStats]:
    engine = Catapult(g, specs, solver, rules, forced_order, candidates, skeleton_budget, eager_conflicts)
    results = engine.run()
    return results, engine.stats
