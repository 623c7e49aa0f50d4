"""Property specifications: ``(src; sink; psc; agg)`` quadruples."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from .conditions import TRUE, Condition, ConditionSyntaxError, parse_atom_list
from .ir import ValueFlowGraph, Vertex

AGGREGATES = ("never", "never-sim", "must")
FLOW_SYMBOL = "v"


class SpecError(ValueError):
    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass(frozen=True)
class Pattern:
    """One alternative of a pattern expression.

    ``kind`` is call/load/store/assign/global.  For calls ``position`` is
    "ret" or "arg" and ``index`` ``None`` stands for ``arg _`` (any argument).
    """

    kind: str
    callee: Optional[str] = None
    position: Optional[str] = None
    index: Optional[int] = None

    def matches(self, v: Vertex) -> bool:
        st = v.stmt
        if st.kind != self.kind:
            return False
        if self.kind == "call":
            if st.callee != self.callee or st.position != self.position:
                return False
            return self.position == "ret" or self.index is None or self.index == st.index
        if self.kind in ("load", "store"):
            return st.position == self.position
        return True

    def __str__(self) -> str:
        if self.kind == "call":
            if self.position == "ret":
                return f"call {self.callee} ret"
            return f"call {self.callee} arg {'_' if self.index is None else self.index}"
        if self.kind in ("load", "store"):
            return f"{self.kind} {self.position}"
        return self.kind


PatternExpr = tuple[Pattern, ...]


@dataclass(frozen=True)
class PropertySpec:
    name: str
    src: PatternExpr
    sink: PatternExpr
    psc: Condition
    agg: str
    bit: int

    @property
    def mask(self) -> int:
        return 1 << self.bit

    def __str__(self) -> str:
        return (
            f"prop {self.name} {{ src: {', '.join(map(str, self.src))}; "
            f"sink: {', '.join(map(str, self.sink))}; psc: {self.psc}; agg: {self.agg} }}"
        )


class PropertySet:
    """Bit vector over a loaded spec batch."""

    __slots__ = ("bits", "width")

    def __init__(self, bits: int, width: int):
        if bits >> width:
            raise ValueError("bits outside the property width")
        self.bits = bits
        self.width = width

    @classmethod
    def full(cls, width: int) -> "PropertySet":
        return cls((1 << width) - 1, width)

    @classmethod
    def of(cls, specs: Iterable[PropertySpec], width: int) -> "PropertySet":
        bits = 0
        for s in specs:
            bits |= s.mask
        return cls(bits, width)

    def __and__(self, other: "PropertySet") -> "PropertySet":
        return PropertySet(self.bits & other.bits, self.width)

    def __or__(self, other: "PropertySet") -> "PropertySet":
        return PropertySet(self.bits | other.bits, self.width)

    def __contains__(self, bit: int) -> bool:
        return bool(self.bits >> bit & 1)

    def __iter__(self) -> Iterator[int]:
        return (i for i in range(self.width) if self.bits >> i & 1)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def __bool__(self) -> bool:
        return self.bits != 0

    def __eq__(self, other) -> bool:
        return isinstance(other, PropertySet) and (self.bits, self.width) == (other.bits, other.width)

    def __hash__(self) -> int:
        return hash((self.bits, self.width))

    def __repr__(self) -> str:
        return f"0b{self.bits:0{self.width}b}"


_PROP_RE = re.compile(r"prop\s+([A-Za-z_][A-Za-z0-9_\-]*)\s*\{(.*?)\}", re.S)


def _parse_pattern(text: str, line: int) -> Pattern:
    toks = text.split()
    if not toks:
        raise SpecError("empty pattern", line)
    kind = toks[0]
    if kind == "call":
        if len(toks) == 3 and toks[2] == "ret":
            return Pattern("call", toks[1], "ret")
        if len(toks) == 4 and toks[2] == "arg" and (toks[3] == "_" or toks[3].isdigit()):
            return Pattern("call", toks[1], "arg", None if toks[3] == "_" else int(toks[3]))
        raise SpecError(f"bad call pattern {text!r}", line)
    if kind == "load" and len(toks) == 2 and toks[1] in ("result", "operand"):
        return Pattern("load", position=toks[1])
    if kind == "store" and len(toks) == 2 and toks[1] in ("stored", "address"):
        return Pattern("store", position=toks[1])
    if kind in ("assign", "global") and len(toks) == 1:
        return Pattern(kind)
    raise SpecError(f"bad pattern {text!r}", line)


def _parse_expr(text: str, line: int) -> PatternExpr:
    alts: list[Pattern] = []
    for part in text.split(","):
        p = _parse_pattern(part.strip(), line)
        if p not in alts:
            alts.append(p)
    return tuple(alts)


def parse_specs(text: str) -> list[PropertySpec]:
    """Parse ``.prop`` text; bits are assigned in file order."""
    clean = "\n".join(re.sub(r"(^|\s)#.*$", "", ln) for ln in text.splitlines())
    specs: list[PropertySpec] = []
    pos = 0
    for m in _PROP_RE.finditer(clean):
        gap = clean[pos:m.start()]
        if gap.strip():
            bad = pos + len(gap) - len(gap.lstrip())
            raise SpecError(f"unexpected text {gap.strip().split()[0]!r}", clean.count("\n", 0, bad) + 1)
        pos = m.end()
        line = clean.count("\n", 0, m.start()) + 1
        name, body = m.group(1), m.group(2)
        if any(s.name == name for s in specs):
            raise SpecError(f"duplicate property name {name!r}", line)
        parts: dict[str, str] = {}
        for field_text in body.split(";"):
            if not field_text.strip():
                continue
            key, sep, value = field_text.partition(":")
            key = key.strip()
            if not sep or key not in ("src", "sink", "psc", "agg"):
                raise SpecError(f"bad field {field_text.strip()!r} in {name}", line)
            if key in parts:
                raise SpecError(f"field {key!r} given twice in {name}", line)
            parts[key] = value.strip()
        missing = [k for k in ("src", "sink", "psc", "agg") if k not in parts]
        if missing:
            raise SpecError(f"{name} lacks {', '.join(missing)}", line)
        if parts["agg"] not in AGGREGATES:
            raise SpecError(f"unknown agg keyword {parts['agg']!r}", line)
        try:
            psc = parse_atom_list(parts["psc"])
        except ConditionSyntaxError as exc:
            raise SpecError(str(exc), line) from None
        if not psc.variables() <= {FLOW_SYMBOL}:
            raise SpecError(f"psc of {name} may only mention {FLOW_SYMBOL!r}", line)
        specs.append(
            PropertySpec(name, _parse_expr(parts["src"], line), _parse_expr(parts["sink"], line),
                         psc, parts["agg"], len(specs))
        )
    tail = clean[pos:]
    if tail.strip():
        bad = pos + len(tail) - len(tail.lstrip())
        raise SpecError(f"unexpected text {tail.strip().split()[0]!r}", clean.count("\n", 0, bad) + 1)
    return specs


def print_specs(specs: Iterable[PropertySpec]) -> str:
    return "".join(str(s) + "\n" for s in specs)


def load_specs(path) -> list[PropertySpec]:
    with open(path, encoding="utf-8") as fh:
        return parse_specs(fh.read())


def match_vertices(expr: PatternExpr, g: ValueFlowGraph) -> list[str]:
    return sorted(vid for vid, v in g.vertices.items() if any(p.matches(v) for p in expr))


def instantiate_psc(spec: PropertySpec, source: Vertex) -> Condition:
    """Bind the flow symbol of ``spec.psc`` to the source's variable."""
    if spec.psc == TRUE:
        return TRUE
    return spec.psc.rename({FLOW_SYMBOL: source.variable})


def rebind(specs: Iterable[PropertySpec]) -> list[PropertySpec]:
    """Renumber bits 0..n-1 in the given order (for subsets and reorderings)."""
    return [PropertySpec(s.name, s.src, s.sink, s.psc, s.agg, i) for i, s in enumerate(specs)]
