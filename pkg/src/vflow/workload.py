"""Seeded random workloads: multi-function value-flow graphs plus property batches.

Generation is a pure function of ``(seed, GenParams)``.  The program is
emitted as ``.vfg`` text and parsed back, so every workload passes the same
validation as hand-written input.

Acyclicity: ``f{i}`` only calls ``f{j}`` with ``j > i``, intra edges point
forward in declaration order, and each caller has at most one call site per
callee.  Return edges are linked to every caller, so a free layout can still
close a cycle through another function; such drafts are redrawn, and the last
attempt uses a strict layout where every argument vertex precedes every
return vertex, which cannot cycle.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from typing import Optional

from .ir import ValueFlowGraph, VfgError, parse_program
from .propspec import PropertySpec, parse_specs

EXTERNS = {"malloc": 1, "free": 1, "fopen": 1, "fclose": 1, "use": 2}
SRC_POOL = ["call malloc ret", "call fopen ret", "global", "load result"]
SINK_POOL = ["call free arg 0", "call fclose arg 0", "load operand", "store address", "call use arg _"]
PSC_POOL = ["v == 0", "v != 0", "v > 0", "v < 0", "v >= 2", "v <= 0", "true", "v >= -1"]
AGG_POOL = ["never", "never-sim", "must"]
SCRATCH = ["x0", "x1", "x2", "x3"]

_SRC_KIND = {p: p for p in SRC_POOL}
_SINK_KIND = {
    "call free arg 0": "call free arg 0",
    "call fclose arg 0": "call fclose arg 0",
    "load operand": "load operand",
    "store address": "store address",
    "call use arg _": "call use arg 1",
}


@dataclass(frozen=True)
class GenParams:
    functions: int = 3
    vertices_min: int = 4
    vertices_max: int = 10
    edge_density: float = 0.25
    guard_probability: float = 0.5
    properties: int = 4
    sink_density: float = 0.3

    def validate(self) -> "GenParams":
        if not 1 <= self.functions <= 8:
            raise ValueError("functions must be in 1..8")
        if not 2 <= self.vertices_min <= self.vertices_max <= 30:
            raise ValueError("need 2 <= vertices_min <= vertices_max <= 30")
        for name in ("edge_density", "guard_probability", "sink_density"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a fraction")
        if not 1 <= self.properties <= 64:
            raise ValueError("properties must be in 1..64")
        return self

    @classmethod
    def from_json(cls, text: str) -> "GenParams":
        data = json.loads(text)
        unknown = set(data) - set(asdict(cls()))
        if unknown:
            raise ValueError(f"unknown generator parameters: {', '.join(sorted(unknown))}")
        return cls(**data).validate()


def _guard(rng: random.Random, a: str, b: str) -> str:
    pool = [a, b] + SCRATCH
    op = rng.choice(["==", "!=", "<", "<=", ">", ">="])
    shape = rng.random()
    if shape < 0.6:
        return f"{rng.choice(pool)} {op} {rng.randint(-3, 3)}"
    x, y = rng.sample(pool, 2)
    if shape < 0.8:
        return f"{x} {op} {y}"
    return f"{x} + {y} {op} {rng.randint(-3, 3)}"


ATTEMPTS = 4


def gen_workload_text(seed: int, params: Optional[GenParams] = None) -> tuple[str, str]:
    """``(.vfg text, .prop text)`` for one instance."""
    params = (params or GenParams()).validate()
    for attempt in range(ATTEMPTS):
        vfg, prop = _draft(seed, params, attempt, strict=attempt == ATTEMPTS - 1)
        try:
            parse_program(vfg)
        except VfgError:
            continue
        return vfg, prop
    raise AssertionError("strict layout produced a cyclic graph")


def _draft(seed: int, params: GenParams, attempt: int, strict: bool) -> tuple[str, str]:
    rng = random.Random(f"{seed}/{attempt}")
    n = params.functions

    props = []
    for i in range(params.properties):
        src = rng.sample(SRC_POOL, rng.choice([1, 1, 2]))
        sink = rng.sample(SINK_POOL, rng.choice([1, 1, 2]))
        if i == 1 and params.properties >= 3:
            src = props[0][0]
        if i == 2:
            sink = props[0][1]
        props.append((src, sink, rng.choice(PSC_POOL), rng.choice(AGG_POOL)))
    src_kinds = sorted({_SRC_KIND[p] for pr in props for p in pr[0]})
    sink_kinds = sorted({_SINK_KIND[p] for pr in props for p in pr[1]})

    arity = [0] + [rng.randint(0, 2) for _ in range(1, n)]
    has_ret = [False] + [rng.random() < 0.85 for _ in range(1, n)]
    lines = [f"# workload seed={seed}"]
    lines += [f"extern {name}({k})" for name, k in EXTERNS.items()]

    # callees first so arity and return info are known when sites are drawn
    bodies: dict[int, list[str]] = {}
    for i in reversed(range(n)):
        f = f"f{i}"
        size = rng.randint(params.vertices_min, params.vertices_max)
        decls: list[tuple[str, str]] = []  # (id, kind text)
        actual_lines: list[str] = []
        for k in range(arity[i]):
            decls.append((f"{f}_p{k}", f"param {k}"))
        callees = [j for j in range(i + 1, n) if rng.random() < 0.6]
        budget = size - len(decls) - (1 if has_ret[i] else 0)
        pending = list(callees)
        returned: list[tuple[str, int]] = []  # actual-return vertices and their callee
        deferred: list[tuple[str, str]] = []
        count = 0
        while count < budget or deferred:
            if strict and deferred and (not pending or count >= budget):
                for _, kind in deferred:
                    decls.append((f"{f}_v{len(decls)}", kind))
                deferred = []
                continue
            vid = f"{f}_v{len(decls)}"
            roll = rng.random()
            if pending and roll < 0.3 and count + 2 <= budget:
                j = pending.pop(0)
                if arity[j]:
                    k = rng.randrange(arity[j])
                    reuse = [r for r, c in returned if c != j]
                    if reuse and not strict and rng.random() < 0.5:
                        actual_lines.append(f"  actual {rng.choice(reuse)} f{j} {k}")
                    else:
                        decls.append((vid, f"call f{j} arg {k}"))
                        vid = f"{f}_v{len(decls)}"
                        count += 1
                if has_ret[j] and strict:
                    deferred.append(("", f"call f{j} ret"))
                    count += 1
                elif has_ret[j]:
                    decls.append((vid, f"call f{j} ret"))
                    returned.append((vid, j))
                    count += 1
                if not arity[j] and not has_ret[j]:
                    decls.append((vid, "assign"))
                    count += 1
                continue
            if roll < 0.3 + params.sink_density * 0.7:
                kind = rng.choice(sink_kinds)
            elif roll < 0.55 + params.sink_density * 0.45:
                kind = rng.choice(src_kinds)
            else:
                kind = "assign"
            decls.append((vid, kind))
            count += 1
        if has_ret[i]:
            decls.append((f"{f}_r", "ret"))

        body = []
        for vid, kind in decls:
            cond = ""
            if kind in src_kinds and rng.random() < params.guard_probability:
                cond = f" cond {rng.choice(SCRATCH)} {rng.choice(['>', '<', '!='])} {rng.randint(-2, 2)}"
            body.append(f"  v {vid} {vid} {kind}{cond}")
        ids = [d[0] for d in decls]
        edges = set()
        for b in range(1, len(ids)):
            if decls[b][1].startswith("param"):
                continue
            if rng.random() < 0.8:
                edges.add((rng.randrange(b), b))
            for a in range(b):
                if rng.random() < params.edge_density:
                    edges.add((a, b))
        for a, b in sorted(edges):
            guard = ""
            if rng.random() < params.guard_probability:
                guard = " guard " + _guard(rng, ids[a], ids[b])
                if rng.random() < 0.2:
                    guard += "; " + _guard(rng, ids[a], ids[b])
            body.append(f"  e {ids[a]} -> {ids[b]}{guard}")
        bodies[i] = [f"func {f}({arity[i]}) {{"] + body + actual_lines + ["}"]
    for i in range(n):
        lines += bodies[i]

    prop_lines = [
        f"prop q{i} {{ src: {', '.join(src)}; sink: {', '.join(sink)}; psc: {psc}; agg: {agg} }}"
        for i, (src, sink, psc, agg) in enumerate(props)
    ]
    return "\n".join(lines) + "\n", "\n".join(prop_lines) + "\n"


def gen_workload(seed: int, params: Optional[GenParams] = None) -> tuple[ValueFlowGraph, list[PropertySpec]]:
    vfg, prop = gen_workload_text(seed, params)
    return parse_program(vfg), parse_specs(prop)


def corpus_params(seed: int, max_functions: int = 4, max_vertices: int = 14, max_properties: int = 8) -> GenParams:
    """Parameters for one instance of a varied benchmark corpus."""
    rng = random.Random(f"corpus/{seed}")
    lo = rng.randint(2, min(6, max_vertices))
    return GenParams(
        functions=rng.randint(1, max_functions),
        vertices_min=lo,
        vertices_max=rng.randint(lo, max_vertices),
        edge_density=rng.choice([0.15, 0.25, 0.35]),
        guard_probability=rng.choice([0.3, 0.5, 0.7]),
        properties=rng.randint(1, max_properties),
        sink_density=rng.choice([0.2, 0.3, 0.4]),
    )
