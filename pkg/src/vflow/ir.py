"""Value-flow graph model, ``.vfg`` parsing/printing and path utilities.

A path is a plain tuple of vertex ids.  Inter-procedural paths must be
realizable: a return edge taken after a call edge has to go back to the call
site it came from, while returns with no pending call (the value escaping to
a caller) and calls left open at the end (the value sinking in a callee) are
both allowed.
"""

from __future__ import annotations

import heapq
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .conditions import TRUE, Condition, ConditionSyntaxError, format_atom_list, parse_atom_list

Path = tuple[str, ...]


class VfgError(ValueError):
    """Malformed or inconsistent ``.vfg`` input."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


class ConcatError(ValueError):
    pass


@dataclass(frozen=True)
class Stmt:
    """Statement kind of a vertex.

    ``kind`` is one of call/load/store/assign/global/param/ret/other.  Calls
    carry ``callee`` and ``position`` ("ret" or "arg" with ``index``); loads
    are at "result" or "operand" (the dereferenced pointer, the default);
    stores at "address" (default) or "stored"; params carry ``index``.
    """

    kind: str
    callee: Optional[str] = None
    position: Optional[str] = None
    index: Optional[int] = None
    tag: Optional[str] = None

    def __str__(self) -> str:
        if self.kind == "call":
            pos = "ret" if self.position == "ret" else f"arg {self.index}"
            return f"call {self.callee} {pos}"
        if self.kind == "param":
            return f"param {self.index}"
        if self.kind == "other":
            return f"other {self.tag}"
        if self.kind in ("load", "store"):
            return f"{self.kind} {self.position}"
        return self.kind


@dataclass(frozen=True)
class Vertex:
    id: str
    variable: str
    stmt: Stmt
    function: str
    cond: Condition = TRUE
    site: Optional[str] = None
    # extra actual-argument roles: (callee, index, site)
    passes: tuple[tuple[str, int, str], ...] = ()

    @property
    def is_formal_param(self) -> bool:
        return self.stmt.kind == "param"

    @property
    def is_formal_ret(self) -> bool:
        return self.stmt.kind == "ret"

    @property
    def is_actual_ret(self) -> bool:
        return self.stmt.kind == "call" and self.stmt.position == "ret"

    @property
    def is_actual_param(self) -> bool:
        return (self.stmt.kind == "call" and self.stmt.position == "arg") or bool(self.passes)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    guard: Condition = TRUE
    kind: str = "intra"  # intra | call | ret
    site: Optional[str] = None  # "<caller>:<site>" for bind edges
    eid: int = -1


@dataclass
class Function:
    name: str
    arity: int
    vertices: list[str] = field(default_factory=list)
    external: bool = False


class ValueFlowGraph:
    """Immutable after construction; all iteration orders are by vertex id."""

    def __init__(self, functions: dict[str, Function], vertices: dict[str, Vertex], edges: Iterable[Edge]):
        self.functions = functions
        self.vertices = vertices
        ordered = sorted(edges, key=lambda e: (e.src, e.dst))
        self.edges: list[Edge] = [
            Edge(e.src, e.dst, e.guard, e.kind, e.site, i) for i, e in enumerate(ordered)
        ]
        self.edge_index: dict[tuple[str, str], Edge] = {(e.src, e.dst): e for e in self.edges}
        self.succ: dict[str, list[Edge]] = {v: [] for v in vertices}
        self.pred: dict[str, list[Edge]] = {v: [] for v in vertices}
        for e in self.edges:
            self.succ[e.src].append(e)
            self.pred[e.dst].append(e)
        for v in vertices:
            self.pred[v].sort(key=lambda e: e.src)
        self.call_graph: dict[str, set[str]] = {f: set() for f in functions}
        for v in vertices.values():
            if v.stmt.kind == "call" and not functions[v.stmt.callee].external:
                self.call_graph[v.function].add(v.stmt.callee)
            for callee, _, _ in v.passes:
                self.call_graph[v.function].add(callee)
        self.topo_index = {v: i for i, v in enumerate(self._topological())}

    def _topological(self) -> list[str]:
        indeg = {v: len(self.pred[v]) for v in self.vertices}
        ready = sorted(v for v, d in indeg.items() if d == 0)
        order: list[str] = []
        heapq.heapify(ready)
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for e in self.succ[v]:
                indeg[e.dst] -= 1
                if indeg[e.dst] == 0:
                    heapq.heappush(ready, e.dst)
        if len(order) != len(self.vertices):
            cyclic = sorted(v for v, d in indeg.items() if d > 0)
            raise VfgError(f"cyclic value flow through {', '.join(cyclic[:5])}")
        return order

    def __len__(self) -> int:
        return len(self.vertices)

    def vertex(self, vid: str) -> Vertex:
        return self.vertices[vid]

    def edge(self, src: str, dst: str) -> Edge:
        return self.edge_index[(src, dst)]

    def path_edges(self, path: Path) -> list[Edge]:
        return [self.edge_index[(a, b)] for a, b in zip(path, path[1:])]

    def is_path(self, path: Path) -> bool:
        if not path or any(v not in self.vertices for v in path):
            return False
        if any((a, b) not in self.edge_index for a, b in zip(path, path[1:])):
            return False
        return contexts(self, path) is not None

    def callers(self, fname: str) -> set[str]:
        return {f for f, callees in self.call_graph.items() if fname in callees}

    def callees_closure(self, fname: str) -> set[str]:
        seen: set[str] = set()
        stack = list(self.call_graph.get(fname, ()))
        while stack:
            f = stack.pop()
            if f not in seen:
                seen.add(f)
                stack.extend(self.call_graph.get(f, ()))
        return seen

    def __eq__(self, other) -> bool:
        if not isinstance(other, ValueFlowGraph):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and self.edges == other.edges
            and {f: (fn.arity, fn.external, sorted(fn.vertices)) for f, fn in self.functions.items()}
            == {f: (fn.arity, fn.external, sorted(fn.vertices)) for f, fn in other.functions.items()}
        )

    __hash__ = None  # type: ignore[assignment]


# -- realizability -----------------------------------------------------------

Stack = tuple[str, ...]


def advance(stack: Stack, edge: Edge) -> Optional[Stack]:
    """Pending-call stack after taking ``edge``, or ``None`` if unrealizable."""
    if edge.kind == "call":
        return stack + (edge.site,)
    if edge.kind == "ret":
        if not stack:
            return stack
        if stack[-1] == edge.site:
            return stack[:-1]
        return None
    return stack


Context = tuple[tuple[str, ...], tuple[str, ...]]


def contexts(g: ValueFlowGraph, path: Path) -> Optional[list[Context]]:
    """Calling context of every path vertex relative to the head.

    A context is ``(ups, downs)``: call sites returned through without a
    matching call, and calls still pending.  ``None`` for unrealizable paths.
    """
    ups: tuple[str, ...] = ()
    downs: tuple[str, ...] = ()
    out: list[Context] = [(ups, downs)]
    for a, b in zip(path, path[1:]):
        e = g.edge_index.get((a, b))
        if e is None:
            return None
        if e.kind == "call":
            downs = downs + (e.site,)
        elif e.kind == "ret":
            if downs:
                if downs[-1] != e.site:
                    return None
                downs = downs[:-1]
            else:
                ups = ups + (e.site,)
        out.append((ups, downs))
    return out


# -- path operations ---------------------------------------------------------


def concat(g: ValueFlowGraph, p1: Path, p2: Path) -> Path:
    if not p1 or not p2 or (p1[-1], p2[0]) not in g.edge_index:
        raise ConcatError(f"no edge {p1[-1] if p1 else '?'} -> {p2[0] if p2 else '?'}")
    return tuple(p1) + tuple(p2)


def enumerate_paths(g: ValueFlowGraph, sources: Iterable[str], targets: Iterable[str]) -> list[Path]:
    """All realizable paths from ``sources`` to ``targets``, sorted.

    Brute force by design: this is the reference the other modules are
    checked against.
    """
    targets = set(targets)
    out: list[Path] = []

    def dfs(path: list[str], stack: Stack) -> None:
        v = path[-1]
        if v in targets:
            out.append(tuple(path))
        for e in g.succ[v]:
            nxt = advance(stack, e)
            if nxt is None:
                continue
            path.append(e.dst)
            dfs(path, nxt)
            path.pop()

    for s in sorted(set(sources)):
        dfs([s], ())
    out.sort()
    return out


def is_ip(g: ValueFlowGraph, path: Path) -> bool:
    ctx = contexts(g, path)
    if ctx is None:
        return False
    f = g.vertices[path[0]].function
    return all(g.vertices[v].function == f and c == ((), ()) for v, c in zip(path, ctx))


def is_sl(g: ValueFlowGraph, path: Path) -> bool:
    ctx = contexts(g, path)
    if ctx is None:
        return False
    return g.vertices[path[0]].function == g.vertices[path[-1]].function and ctx[-1] == ((), ())


def is_in(g: ValueFlowGraph, path: Path) -> bool:
    """Head is a formal parameter and the tail is in its function or a callee."""
    ctx = contexts(g, path)
    if ctx is None or not g.vertices[path[0]].is_formal_param:
        return False
    return ctx[-1][0] == ()


def is_out(g: ValueFlowGraph, path: Path) -> bool:
    """Tail is a formal return in the head's function or one of its callers."""
    ctx = contexts(g, path)
    if ctx is None or not g.vertices[path[-1]].is_formal_ret:
        return False
    return ctx[-1][1] == ()


def classify_path(g: ValueFlowGraph, path: Path) -> str:
    """One of IN, OUT, IP, SL, GENERAL.

    Boundary classes win over IP/SL so that a formal-parameter path reads as
    an input path and a path ending at a formal return as an output path.
    """
    if is_in(g, path):
        return "IN"
    if is_out(g, path):
        return "OUT"
    if is_ip(g, path):
        return "IP"
    if is_sl(g, path):
        return "SL"
    return "GENERAL"


# -- parsing -----------------------------------------------------------------

_IDENT = r"[A-Za-z_][A-Za-z0-9_.#]*"
_FUNC_RE = re.compile(rf"^func\s+({_IDENT})\s*\(\s*(\d+)\s*\)\s*\{{\s*(\}})?\s*$")
_EXTERN_RE = re.compile(rf"^extern\s+({_IDENT})\s*\(\s*(\d+)\s*\)\s*$")
_EDGE_RE = re.compile(rf"^e\s+({_IDENT})\s*->\s*({_IDENT})(?:\s+guard\s+(.+))?$")
_COMMENT_RE = re.compile(r"(^|\s)#.*$")


def _strip_comment(line: str) -> str:
    return _COMMENT_RE.sub("", line).strip()


@dataclass
class _RawVertex:
    id: str
    var: str
    stmt: Stmt
    cond: Condition
    site: Optional[str]
    line: int
    loop: Optional[int]
    order: int
    passes: list = field(default_factory=list)


@dataclass
class _RawEdge:
    src: str
    dst: str
    guard: Condition
    line: int
    loop: Optional[int]


def _parse_kind(tokens: list[str], line: int, col: int) -> tuple[Stmt, list[str]]:
    if not tokens:
        raise VfgError("missing statement kind", line, col)
    head = tokens[0]

    def need(n: int) -> None:
        if len(tokens) < n:
            raise VfgError(f"incomplete '{head}' kind", line, col)

    def index(tok: str) -> int:
        if not tok.isdigit():
            raise VfgError(f"expected an index, got {tok!r}", line, col)
        return int(tok)

    if head == "param":
        need(2)
        return Stmt("param", index=index(tokens[1])), tokens[2:]
    if head == "call":
        need(3)
        callee = tokens[1]
        if tokens[2] == "ret":
            return Stmt("call", callee=callee, position="ret"), tokens[3:]
        if tokens[2] == "arg":
            need(4)
            return Stmt("call", callee=callee, position="arg", index=index(tokens[3])), tokens[4:]
        raise VfgError(f"expected 'ret' or 'arg K' after callee, got {tokens[2]!r}", line, col)
    if head == "other":
        need(2)
        return Stmt("other", tag=tokens[1]), tokens[2:]
    if head == "load":
        if tokens[1:2] and tokens[1] in ("result", "operand"):
            return Stmt("load", position=tokens[1]), tokens[2:]
        return Stmt("load", position="operand"), tokens[1:]
    if head == "store":
        if tokens[1:2] and tokens[1] in ("address", "stored"):
            return Stmt("store", position=tokens[1]), tokens[2:]
        return Stmt("store", position="address"), tokens[1:]
    if head in ("ret", "assign", "global"):
        return Stmt(head), tokens[1:]
    raise VfgError(f"unknown statement kind {head!r}", line, col)


def parse_program(text: str) -> ValueFlowGraph:
    """Parse ``.vfg`` text into a validated, loop-unrolled graph."""
    functions: dict[str, Function] = {}
    raw_vertices: dict[str, list[_RawVertex]] = {}
    raw_edges: dict[str, list[_RawEdge]] = {}
    actuals: dict[str, list[tuple[str, str, int, Optional[str], int]]] = {}
    decl_line: dict[str, int] = {}
    current: Optional[str] = None
    loop_id: Optional[int] = None
    n_loops = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        col = len(raw) - len(raw.lstrip()) + 1
        if current is None:
            m = _FUNC_RE.match(line)
            if m:
                name, arity = m.group(1), int(m.group(2))
                if name in functions:
                    raise VfgError(f"duplicate function {name!r}", lineno, col)
                functions[name] = Function(name, arity)
                raw_vertices[name], raw_edges[name], actuals[name] = [], [], []
                if not m.group(3):
                    current = name
                continue
            m = _EXTERN_RE.match(line)
            if m:
                name = m.group(1)
                if name in functions:
                    raise VfgError(f"duplicate function {name!r}", lineno, col)
                functions[name] = Function(name, int(m.group(2)), external=True)
                continue
            raise VfgError(f"expected 'func' or 'extern', got {line.split()[0]!r}", lineno, col)

        if line == "}":
            if loop_id is not None:
                loop_id = None
            else:
                current = None
            continue
        if re.fullmatch(r"loop\s*\{", line):
            if loop_id is not None:
                raise VfgError("nested loop blocks are not supported", lineno, col)
            n_loops += 1
            loop_id = n_loops
            continue
        tokens = line.split()
        if tokens[0] == "v":
            body, _, cond_text = line.partition(" cond ")
            toks = body.split()
            if len(toks) < 4:
                raise VfgError("vertex line needs: v ID VAR KIND", lineno, col)
            vid, var = toks[1], toks[2]
            for ident in (vid, var):
                if not re.fullmatch(_IDENT, ident):
                    raise VfgError(f"bad identifier {ident!r}", lineno, col)
            stmt, rest = _parse_kind(toks[3:], lineno, col)
            site = None
            if rest[:1] == ["site"] and len(rest) == 2 and stmt.kind == "call":
                site, rest = rest[1], []
            if rest:
                raise VfgError(f"unexpected tokens {' '.join(rest)!r}", lineno, col)
            try:
                cond = parse_atom_list(cond_text) if cond_text else TRUE
            except ConditionSyntaxError as exc:
                raise VfgError(str(exc), lineno, col) from None
            if vid in decl_line:
                raise VfgError(f"duplicate vertex id {vid!r} (first declared on line {decl_line[vid]})", lineno, col)
            decl_line[vid] = lineno
            raw_vertices[current].append(
                _RawVertex(vid, var, stmt, cond, site, lineno, loop_id, len(raw_vertices[current]))
            )
        elif tokens[0] == "e":
            m = _EDGE_RE.match(line)
            if not m:
                raise VfgError("edge line needs: e SRC -> DST [guard ATOMLIST]", lineno, col)
            try:
                guard = parse_atom_list(m.group(3)) if m.group(3) else TRUE
            except ConditionSyntaxError as exc:
                raise VfgError(str(exc), lineno, col) from None
            raw_edges[current].append(_RawEdge(m.group(1), m.group(2), guard, lineno, loop_id))
        elif tokens[0] == "actual":
            if len(tokens) not in (4, 6) or not tokens[3].isdigit() or (len(tokens) == 6 and tokens[4] != "site"):
                raise VfgError("actual line needs: actual ID CALLEE K [site S]", lineno, col)
            site = tokens[5] if len(tokens) == 6 else None
            actuals[current].append((tokens[1], tokens[2], int(tokens[3]), site, lineno))
        else:
            raise VfgError(f"unknown directive {tokens[0]!r}", lineno, col)

    if current is not None:
        raise VfgError(f"unterminated function {current!r}")
    return _build(functions, raw_vertices, raw_edges, actuals)


def _build(functions, raw_vertices, raw_edges, actuals) -> ValueFlowGraph:
    vertices: dict[str, Vertex] = {}
    edges: list[Edge] = []
    copies: dict[str, list[str]] = {}

    for fname, fn in functions.items():
        if fn.external:
            continue
        rv_by_id = {rv.id: rv for rv in raw_vertices[fname]}
        passes: dict[str, list] = defaultdict(list)
        for vid, callee, k, site, line in actuals[fname]:
            if vid not in rv_by_id:
                raise VfgError(f"unknown vertex {vid!r} in actual", line)
            passes[vid].append((callee, k, site or callee, line))
        for rv in raw_vertices[fname]:
            st = rv.stmt
            if st.kind == "param" and st.index >= fn.arity:
                raise VfgError(f"param {st.index} out of range for {fname}({fn.arity})", rv.line)
            callees = []
            if st.kind == "call":
                callees.append((st.callee, st.index, rv.line))
            callees.extend((c, k, line) for c, k, _, line in passes[rv.id])
            for callee, k, line in callees:
                if callee not in functions:
                    raise VfgError(f"unknown callee {callee!r}", line)
                if k is not None and k >= functions[callee].arity:
                    raise VfgError(f"arity mismatch: {callee} takes {functions[callee].arity} argument(s), got arg {k}", line)
            ids = [rv.id] if rv.loop is None else [f"{rv.id}#1", f"{rv.id}#2"]
            copies[rv.id] = ids
            site = rv.site or (st.callee if st.kind == "call" else None)
            for vid in ids:
                vertices[vid] = Vertex(
                    vid, rv.var, st, fname, rv.cond, site,
                    tuple((c, k, s) for c, k, s, _ in passes[rv.id]),
                )
                fn.vertices.append(vid)
        for re_ in raw_edges[fname]:
            for end in (re_.src, re_.dst):
                if end not in rv_by_id:
                    if end in copies or any(end in {r.id for r in raw_vertices[f]} for f in raw_vertices):
                        raise VfgError(f"edge {re_.src} -> {re_.dst} crosses functions; declare calls instead", re_.line)
                    raise VfgError(f"unknown vertex {end!r}", re_.line)
            a, b = rv_by_id[re_.src], rv_by_id[re_.dst]
            for s, d in _expand_edge(a, b):
                edges.append(Edge(s, d, re_.guard, "intra"))

    # synthesized bind edges
    by_func_kind: dict[tuple[str, str], list[Vertex]] = defaultdict(list)
    for v in vertices.values():
        by_func_kind[(v.function, v.stmt.kind)].append(v)
    for v in sorted(vertices.values(), key=lambda v: v.id):
        roles = []
        if v.stmt.kind == "call" and v.stmt.position == "arg":
            roles.append((v.stmt.callee, v.stmt.index, v.site))
        roles.extend(v.passes)
        for callee, k, site in roles:
            if functions[callee].external:
                continue
            for fp in by_func_kind[(callee, "param")]:
                if fp.stmt.index == k:
                    edges.append(Edge(v.id, fp.id, TRUE, "call", f"{v.function}:{site}"))
        if v.stmt.kind == "call" and v.stmt.position == "ret" and not functions[v.stmt.callee].external:
            for fr in by_func_kind[(v.stmt.callee, "ret")]:
                edges.append(Edge(fr.id, v.id, TRUE, "ret", f"{v.function}:{v.site}"))

    seen: set[tuple[str, str]] = set()
    for e in edges:
        if (e.src, e.dst) in seen:
            raise VfgError(f"duplicate edge {e.src} -> {e.dst}")
        seen.add((e.src, e.dst))
    return ValueFlowGraph(functions, vertices, edges)


def _expand_edge(a: _RawVertex, b: _RawVertex) -> list[tuple[str, str]]:
    if a.loop is None and b.loop is None:
        return [(a.id, b.id)]
    if a.loop is not None and a.loop == b.loop:
        if a.order < b.order:
            return [(f"{a.id}#1", f"{b.id}#1"), (f"{a.id}#2", f"{b.id}#2")]
        return [(f"{a.id}#1", f"{b.id}#2")]
    srcs = [a.id] if a.loop is None else [f"{a.id}#1", f"{a.id}#2"]
    dsts = [b.id] if b.loop is None else [f"{b.id}#1", f"{b.id}#2"]
    return [(s, d) for s in srcs for d in dsts]


# -- printing ----------------------------------------------------------------


def print_program(g: ValueFlowGraph) -> str:
    """Render ``g`` (already unrolled) so that parsing gives back an equal graph."""
    lines: list[str] = []
    for name, fn in g.functions.items():
        if fn.external:
            lines.append(f"extern {name}({fn.arity})")
    for name, fn in g.functions.items():
        if fn.external:
            continue
        lines.append(f"func {name}({fn.arity}) {{")
        for vid in fn.vertices:
            v = g.vertices[vid]
            text = f"  v {v.id} {v.variable} {v.stmt}"
            if v.stmt.kind == "call" and v.site != v.stmt.callee:
                text += f" site {v.site}"
            if v.cond != TRUE:
                text += f" cond {format_atom_list(v.cond)}"
            lines.append(text)
        for vid in fn.vertices:
            for callee, k, site in g.vertices[vid].passes:
                suffix = f" site {site}" if site != callee else ""
                lines.append(f"  actual {vid} {callee} {k}{suffix}")
        for e in g.edges:
            if e.kind == "intra" and g.vertices[e.src].function == name:
                text = f"  e {e.src} -> {e.dst}"
                if e.guard != TRUE:
                    text += f" guard {format_atom_list(e.guard)}"
                lines.append(text)
        lines.append("}")
    return "\n".join(lines) + "\n"


def load_program(path) -> ValueFlowGraph:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())
