"""Function summaries and their composition into complete source-to-sink paths.

Three kinds are kept per function ``f``:

* transfer: formal parameter of ``f`` to a formal return of ``f``
* input: formal parameter of ``f`` to a sink in ``f`` or below, without returning
* output: a source in ``f`` or below to a formal return of ``f``, without pending calls

Same-level paths inside ``f`` walk ``f``'s own edges and jump over a call
site through a callee transfer summary.  Summaries hold full vertex
sequences; path conditions are left to the engines.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .ir import Path, ValueFlowGraph
from .propspec import PropertySet, PropertySpec, match_vertices

KINDS = ("transfer", "input", "output")


class SchedulingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Summary:
    kind: str
    path: Path
    label: PropertySet
    function: str


@dataclass
class FunctionSummaries:
    transfer: list[Summary] = field(default_factory=list)
    input: list[Summary] = field(default_factory=list)
    output: list[Summary] = field(default_factory=list)

    def of_kind(self, kind: str) -> list[Summary]:
        return getattr(self, kind)

    def all(self) -> list[Summary]:
        return self.transfer + self.input + self.output


class SummaryDB:
    def __init__(self, width: int):
        self.width = width
        self.functions: dict[str, FunctionSummaries] = {}

    def __contains__(self, fname: str) -> bool:
        return fname in self.functions

    def __getitem__(self, fname: str) -> FunctionSummaries:
        return self.functions[fname]

    def put(self, fname: str, sums: FunctionSummaries) -> None:
        self.functions[fname] = sums


class _Endpoints:
    """Per-property source and sink vertex sets, plus their bit masks per vertex."""

    def __init__(self, g: ValueFlowGraph, specs: Sequence[PropertySpec]):
        self.width = len(specs)
        self.full = (1 << self.width) - 1
        self.src_bits: dict[str, int] = {}
        self.sink_bits: dict[str, int] = {}
        for s in specs:
            for v in match_vertices(s.src, g):
                self.src_bits[v] = self.src_bits.get(v, 0) | s.mask
            for v in match_vertices(s.sink, g):
                self.sink_bits[v] = self.sink_bits.get(v, 0) | s.mask

    def label(self, bits: int) -> PropertySet:
        return PropertySet(bits, self.width)


# -- schedule ------------------------------------------------------------------


def bottom_up_schedule(g: ValueFlowGraph) -> list[list[str]]:
    """Batches of defined functions; callees always sit in earlier batches."""
    defined = sorted(f for f, fn in g.functions.items() if not fn.external)
    level: dict[str, int] = {}
    visiting: set[str] = set()

    def depth(f: str) -> int:
        if f in level:
            return level[f]
        if f in visiting:
            raise SchedulingError(f"recursive call cycle through {f}")
        visiting.add(f)
        below = [depth(c) for c in g.call_graph.get(f, ()) if not g.functions[c].external]
        visiting.discard(f)
        level[f] = 1 + max(below, default=-1)
        return level[f]

    for f in defined:
        depth(f)
    batches: list[list[str]] = [[] for _ in range(1 + max(level.values(), default=-1))]
    for f in defined:
        batches[level[f]].append(f)
    return batches


# -- building ------------------------------------------------------------------


def _same_level(g: ValueFlowGraph, fname: str, start: str, db: SummaryDB) -> list[Path]:
    """Every same-level path of ``fname`` starting at ``start`` (prefixes included)."""
    out: list[Path] = []

    def walk(path: Path) -> None:
        out.append(path)
        v = path[-1]
        for e in g.succ[v]:
            if e.kind == "intra":
                walk(path + (e.dst,))
            elif e.kind == "call":
                callee = g.vertices[e.dst].function
                if callee not in db:
                    raise SchedulingError(f"{callee} is not summarized before {fname}")
                for t in db[callee].transfer:
                    if t.path[0] != e.dst:
                        continue
                    for r in g.succ[t.path[-1]]:
                        if r.kind == "ret" and r.site == e.site:
                            walk(path + t.path + (r.dst,))

    walk((start,))
    return out


def build_summaries(g: ValueFlowGraph, fname: str, db: SummaryDB, specs: Sequence[PropertySpec],
                    ends: Optional[_Endpoints] = None) -> FunctionSummaries:
    ends = ends or _Endpoints(g, specs)
    fn = g.functions[fname]
    for callee in g.call_graph.get(fname, ()):
        if not g.functions[callee].external and callee not in db:
            raise SchedulingError(f"{callee} is not summarized before {fname}")
    sums = FunctionSummaries()
    if fn.external:
        return sums
    params = [v for v in fn.vertices if g.vertices[v].is_formal_param]
    rets = {v for v in fn.vertices if g.vertices[v].is_formal_ret}
    sources = [v for v in fn.vertices if ends.src_bits.get(v)]

    for p in sorted(params):
        for path in _same_level(g, fname, p, db):
            tail = path[-1]
            if tail in rets:
                sums.transfer.append(Summary("transfer", path, ends.label(ends.full), fname))
            if ends.sink_bits.get(tail):
                sums.input.append(Summary("input", path, ends.label(ends.sink_bits[tail]), fname))
            for e in g.succ[tail]:
                if e.kind == "call":
                    callee = g.vertices[e.dst].function
                    for s in db[callee].input:
                        if s.path[0] == e.dst:
                            sums.input.append(Summary("input", path + s.path, s.label, fname))

    starts: list[tuple[Path, int]] = [((v,), ends.src_bits[v]) for v in sorted(sources)]
    # sources below: callee outputs returning into this function
    for v in sorted(fn.vertices):
        for e in g.pred[v]:
            if e.kind != "ret":
                continue
            callee = g.vertices[e.src].function
            for s in db[callee].output:
                if s.path[-1] == e.src:
                    starts.append((s.path + (v,), s.label.bits))
    for prefix, bits in starts:
        for path in _same_level(g, fname, prefix[-1], db):
            if path[-1] in rets:
                sums.output.append(Summary("output", prefix + path[1:], ends.label(bits), fname))

    for kind in KINDS:
        uniq = {s.path: s for s in sums.of_kind(kind)}
        setattr(sums, kind, [uniq[p] for p in sorted(uniq)])
    return sums


def summarize(g: ValueFlowGraph, specs: Sequence[PropertySpec], threads: int = 1) -> SummaryDB:
    """Build the whole database batch by batch."""
    ends = _Endpoints(g, specs)
    db = SummaryDB(len(specs))
    for batch in bottom_up_schedule(g):
        if threads > 1 and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                built = list(pool.map(lambda f: build_summaries(g, f, db, specs, ends), batch))
        else:
            built = [build_summaries(g, f, db, specs, ends) for f in batch]
        for f, sums in zip(batch, built):
            db.put(f, sums)
    return db


# -- stitching -----------------------------------------------------------------


def stitch_labeled(g: ValueFlowGraph, db: SummaryDB, specs: Sequence[PropertySpec]) -> dict[Path, PropertySet]:
    """Every composed source-to-sink path with the AND of its segment labels.

    Each path is assembled in the function holding its highest frame:
    an optional callee output returning into it, a same-level middle, and an
    optional callee input entered from it.
    """
    ends = _Endpoints(g, specs)
    found: dict[Path, int] = {}

    def emit(path: Path, bits: int) -> None:
        bits &= ends.src_bits.get(path[0], 0) & ends.sink_bits.get(path[-1], 0)
        if bits:
            found[path] = found.get(path, 0) | bits

    for fname, fn in sorted(g.functions.items()):
        if fn.external:
            continue
        heads: list[tuple[Path, int]] = [((v,), ends.full) for v in sorted(fn.vertices) if ends.src_bits.get(v)]
        for v in sorted(fn.vertices):
            for e in g.pred[v]:
                if e.kind == "ret":
                    for s in db[g.vertices[e.src].function].output:
                        if s.path[-1] == e.src:
                            heads.append((s.path + (v,), s.label.bits))
        for prefix, bits in heads:
            for mid in _same_level(g, fname, prefix[-1], db):
                path = prefix + mid[1:]
                tail = mid[-1]
                if ends.sink_bits.get(tail):
                    emit(path, bits)
                for e in g.succ[tail]:
                    if e.kind == "call":
                        for s in db[g.vertices[e.dst].function].input:
                            if s.path[0] == e.dst:
                                emit(path + s.path, bits & s.label.bits)
    return {p: ends.label(found[p]) for p in sorted(found)}


def stitch(g: ValueFlowGraph, db: SummaryDB, specs: Sequence[PropertySpec]) -> dict[str, list[Path]]:
    """Candidate paths per property name, sorted."""
    labeled = stitch_labeled(g, db, specs)
    return {s.name: [p for p, lab in labeled.items() if s.bit in lab] for s in specs}


# -- .vfsum --------------------------------------------------------------------

_LINE_RE = re.compile(r"^(\S+)\s+(transfer|input|output)\s+0b([01]+)\s+(.+)$")


def dump_summaries(db: SummaryDB) -> str:
    lines = [f"width {db.width}"]
    for fname in sorted(db.functions):
        for s in db[fname].all():
            lines.append(f"{fname} {s.kind} {s.label!r} {' '.join(s.path)}")
    return "\n".join(lines) + "\n"


def load_summaries(text: str) -> SummaryDB:
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or not rows[0].startswith("width "):
        raise ValueError("missing width header")
    db = SummaryDB(int(rows[0].split()[1]))
    for n, row in enumerate(rows[1:], start=2):
        m = _LINE_RE.match(row)
        if not m:
            raise ValueError(f"line {n}: bad summary line {row!r}")
        fname, kind, bits, verts = m.groups()
        sums = db.functions.setdefault(fname, FunctionSummaries())
        sums.of_kind(kind).append(Summary(kind, tuple(verts.split()), PropertySet(int(bits, 2), db.width), fname))
    return db


def iter_summaries(db: SummaryDB) -> Iterable[Summary]:
    for fname in sorted(db.functions):
        yield from db[fname].all()
