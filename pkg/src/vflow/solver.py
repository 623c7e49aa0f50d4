"""Exact bounded-integer decision procedure, unsat cores and interpolants.

Every variable ranges over one closed integer domain.  Queries are split into
variable-disjoint parts, each decided by bounds propagation with branching;
decisions are memoized across solver instances.
"""

from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass, fields
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

from .conditions import FALSE, TRUE, And, Atom, Condition, Const, Not, conj, neg

DEFAULT_LO = -64
DEFAULT_HI = 63
DEFAULT_BUDGET = 2_000_000


class SolverBudgetExceeded(RuntimeError):
    """Raised when a query needs more assignments than the budget allows."""

    def __init__(self, message: str, condition: Optional[Condition] = None, path=None):
        super().__init__(message)
        self.condition = condition
        self.path = path


class NotUnsatError(ValueError):
    """A core or interpolant was requested for a satisfiable conjunction."""


@dataclass
class SolverCounters:
    sat_queries: int = 0
    core_extractions: int = 0
    interpolations: int = 0

    def merge(self, other: "SolverCounters") -> None:
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def default_budget() -> int:
    env = os.environ.get("VFLOW_SOLVER_BUDGET")
    return int(env) if env else DEFAULT_BUDGET


# -- search core ---------------------------------------------------------------
#
# Conditions are put in negation normal form.  Atoms become ``sum <= k``,
# ``sum == k`` or ``sum != k`` over their non-zero terms.  Domains are integer
# intervals with holes; atoms tighten them to a fixpoint (bounds consistency),
# disjunctions are split lazily, and remaining freedom is bisected.  A leaf
# with every variable fixed has passed every atom, so the search is exact.

_LE, _EQ, _NE = 0, 1, 2


class _Fail(Exception):
    pass


def _compile(atom: Atom):
    terms = tuple((v, c) for v, c in atom.terms if c != 0)
    op, k = atom.op, atom.const
    if op == "<":
        return terms, _LE, k - 1
    if op == "<=":
        return terms, _LE, k
    if op == ">":
        return tuple((v, -c) for v, c in terms), _LE, -k - 1
    if op == ">=":
        return tuple((v, -c) for v, c in terms), _LE, -k
    return terms, (_EQ if op == "==" else _NE), k


def _nnf(cond: Condition, positive: bool, atoms: list, ors: list) -> None:
    """Flatten ``cond`` (or its negation) into atoms plus pending disjunctions."""
    if isinstance(cond, Const):
        if cond.value != positive:
            atoms.append(((), _LE, -1))  # 0 <= -1
    elif isinstance(cond, Atom):
        atoms.append(_compile(cond if positive else cond.negated()))
    elif isinstance(cond, Not):
        _nnf(cond.arg, not positive, atoms, ors)
    elif isinstance(cond, And) == positive:
        for arg in cond.args:
            _nnf(arg, positive, atoms, ors)
    else:
        ors.append(tuple((arg, positive) for arg in cond.args))


class _Dom:
    __slots__ = ("lo", "hi", "holes")

    def __init__(self, lo: int, hi: int, holes: frozenset = frozenset()):
        self.lo, self.hi, self.holes = lo, hi, holes

    def copy(self) -> "_Dom":
        return _Dom(self.lo, self.hi, self.holes)

    def fixed(self) -> bool:
        return self.lo == self.hi

    def size(self) -> int:
        return self.hi - self.lo + 1

    def set_hi(self, h: int) -> bool:
        if h >= self.hi:
            return False
        while h in self.holes:
            h -= 1
        self.hi = h
        if h < self.lo:
            raise _Fail
        return True

    def set_lo(self, lo: int) -> bool:
        if lo <= self.lo:
            return False
        while lo in self.holes:
            lo += 1
        self.lo = lo
        if lo > self.hi:
            raise _Fail
        return True

    def remove(self, x: int) -> bool:
        if x < self.lo or x > self.hi or x in self.holes:
            return False
        if x == self.lo:
            return self.set_lo(x + 1)
        if x == self.hi:
            return self.set_hi(x - 1)
        self.holes = self.holes | {x}
        return True


def _le(doms, terms, k) -> bool:
    mins = [c * doms[v].lo if c > 0 else c * doms[v].hi for v, c in terms]
    total = sum(mins)
    if total > k:
        raise _Fail
    changed = False
    for (v, c), m in zip(terms, mins):
        slack = k - (total - m)
        if c > 0:
            changed |= doms[v].set_hi(slack // c)
        else:
            changed |= doms[v].set_lo(-((-slack) // c))
    return changed


def _ne(doms, terms, k) -> bool:
    free = [(v, c) for v, c in terms if not doms[v].fixed()]
    rest = sum(c * doms[v].lo for v, c in terms if doms[v].fixed())
    if not free:
        if rest == k:
            raise _Fail
        return False
    if len(free) == 1:
        v, c = free[0]
        if (k - rest) % c == 0:
            return doms[v].remove((k - rest) // c)
    return False


def _propagate(doms, atoms) -> None:
    changed = True
    while changed:
        changed = False
        for terms, kind, k in atoms:
            if kind == _LE:
                changed |= _le(doms, terms, k)
            elif kind == _EQ:
                changed |= _le(doms, terms, k)
                changed |= _le(doms, tuple((v, -c) for v, c in terms), -k)
            else:
                changed |= _ne(doms, terms, k)


def _refuted(doms, atom) -> bool:
    terms, kind, k = atom
    lo = sum(c * doms[v].lo if c > 0 else c * doms[v].hi for v, c in terms)
    hi = sum(c * doms[v].hi if c > 0 else c * doms[v].lo for v, c in terms)
    if kind == _LE:
        return lo > k
    if kind == _EQ:
        return not lo <= k <= hi
    return lo == hi == k


def _search(cond: Condition, lo: int, hi: int, budget: int) -> bool:
    atoms: list = []
    ors: list = []
    _nnf(cond, True, atoms, ors)
    nodes = 0

    def doms_for(extra_atoms, doms):
        for terms, _, _ in extra_atoms:
            for v, _ in terms:
                if v not in doms:
                    doms[v] = _Dom(lo, hi)

    def solve(doms, atoms, ors) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > budget:
            raise SolverBudgetExceeded(f"more than {budget} search nodes needed for {cond}", condition=cond)
        try:
            _propagate(doms, atoms)
        except _Fail:
            return False
        if ors:
            first, rest = ors[0], ors[1:]
            for arg, positive in first:
                more_atoms: list = []
                more_ors: list = []
                _nnf(arg, positive, more_atoms, more_ors)
                if any(all(v in doms for v, _ in a[0]) and _refuted(doms, a) for a in more_atoms):
                    continue
                branch = {v: d.copy() for v, d in doms.items()}
                doms_for(more_atoms, branch)
                if solve(branch, atoms + more_atoms, more_ors + rest):
                    return True
            return False
        open_vars = [v for v, d in doms.items() if not d.fixed()]
        if not open_vars:
            return True
        var = min(open_vars, key=lambda v: (doms[v].size(), v))
        d = doms[var]
        split = (d.lo + d.hi) // 2
        for a, b in ((d.lo, split), (split + 1, d.hi)):
            branch = {v: x.copy() for v, x in doms.items()}
            try:
                branch[var].set_lo(a)
                branch[var].set_hi(b)
            except _Fail:
                continue
            if solve(branch, atoms, ors):
                return True
        return False

    doms: dict[str, _Dom] = {}
    doms_for(atoms, doms)
    return solve(doms, atoms, ors)


def _components(cond: Condition) -> list[Condition]:
    """Split a conjunction into parts that share no variables."""
    if not isinstance(cond, And):
        return [cond]
    parent: dict[str, str] = {}

    def find(v: str) -> str:
        while parent.setdefault(v, v) != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for arg in cond.args:
        vs = sorted(arg.variables())
        for v in vs[1:]:
            parent[find(v)] = find(vs[0])
    groups: dict[Optional[str], list[Condition]] = {}
    for arg in cond.args:
        vs = arg.variables()
        groups.setdefault(find(min(vs)) if vs else None, []).append(arg)
    return [conj(*args) for _, args in sorted(groups.items(), key=lambda kv: str(kv[0]))]


@lru_cache(maxsize=200_000)
def _decide(cond: Condition, lo: int, hi: int, budget: int) -> bool:
    if isinstance(cond, Const):
        return cond.value
    parts = _components(cond)
    if len(parts) > 1:
        # cheap parts first: an early unsat part settles the whole query
        parts.sort(key=lambda c: len(c.variables()))
        return all(_decide(c, lo, hi, budget) for c in parts)
    return _search(cond, lo, hi, budget)


class Solver:
    """Bounded-domain solver with per-instance query counters.

    The decision cache is shared between instances; counters are not, so one
    solver per worker keeps statistics independent.
    """

    def __init__(self, lo: int = DEFAULT_LO, hi: int = DEFAULT_HI, budget: Optional[int] = None):
        if lo > hi:
            raise ValueError("empty domain")
        self.lo = lo
        self.hi = hi
        self.budget = default_budget() if budget is None else budget
        self.counters = SolverCounters()
        self._lock = threading.Lock()

    def fork(self) -> "Solver":
        return Solver(self.lo, self.hi, self.budget)

    # -- raw decisions (not counted) --

    def check(self, cond: Condition) -> bool:
        return _decide(cond, self.lo, self.hi, self.budget)

    def implies(self, a: Condition, b: Condition) -> bool:
        return not self.check(conj(a, neg(b)))

    def equivalent(self, a: Condition, b: Condition) -> bool:
        return self.implies(a, b) and self.implies(b, a)

    # -- counted operations --

    def is_sat(self, cond: Condition) -> bool:
        with self._lock:
            self.counters.sat_queries += 1
        return self.check(cond)

    def unsat_core_indices(self, atoms: Sequence[Condition], psc: Condition = TRUE) -> list[int]:
        """Deletion-minimal core, scanning the list front to back."""
        if self.check(conj(*atoms, psc)):
            raise NotUnsatError("conjunction is satisfiable")
        with self._lock:
            self.counters.core_extractions += 1
        keep = list(range(len(atoms)))
        i = 0
        while i < len(keep):
            trial = keep[:i] + keep[i + 1:]
            if not self.check(conj(*(atoms[j] for j in trial), psc)):
                keep = trial
            else:
                i += 1
        return keep

    def unsat_core(self, atoms: Sequence[Condition], psc: Condition = TRUE) -> list[Condition]:
        return [atoms[i] for i in self.unsat_core_indices(atoms, psc)]

    def interpolant(self, core: Sequence[Atom], psc: Condition, var: Optional[str] = None) -> Optional[Condition]:
        """Project ``core`` onto the single variable of ``psc`` by Fourier-Motzkin.

        Returns ``None`` when the core contains ``!=`` atoms, when no constraint
        on the variable survives elimination, or when the projection does not
        refute ``psc`` on its own.
        """
        if self.check(conj(*core, psc)):
            raise NotUnsatError("core and psc are satisfiable together")
        with self._lock:
            self.counters.interpolations += 1
        if var is None:
            pvars = psc.variables()
            if len(pvars) != 1:
                return None
            (var,) = pvars
        projected = fourier_motzkin(core, var)
        if projected is None:
            return None
        if self.check(conj(projected, psc)):
            return None
        return projected

    def classify_psc_pair(self, psc1: Condition, psc2: Condition) -> str:
        """``implies`` / ``overlapping`` / ``disjoint``, decided on the bounded domain."""
        if self.implies(psc1, psc2):
            return "implies"
        if self.check(conj(psc1, psc2)):
            return "overlapping"
        return "disjoint"

    def exhaustive(self, psc1: Condition, psc2: Condition) -> bool:
        """True when every value satisfies ``psc1`` or ``psc2``."""
        return not self.check(conj(neg(psc1), neg(psc2)))


# -- Fourier-Motzkin ---------------------------------------------------------

# A row is (coefficients, strict, bound) meaning sum(coef*var) < bound or <= bound.
_Row = tuple[dict[str, Fraction], bool, Fraction]


def _rows(atom: Atom) -> Optional[list[_Row]]:
    coeffs = {v: Fraction(c) for v, c in atom.terms if c != 0}
    negc = {v: -c for v, c in coeffs.items()}
    k = Fraction(atom.const)
    op = atom.op
    if op == "<=":
        return [(coeffs, False, k)]
    if op == "<":
        return [(coeffs, True, k)]
    if op == ">=":
        return [(negc, False, -k)]
    if op == ">":
        return [(negc, True, -k)]
    if op == "==":
        return [(coeffs, False, k), (negc, False, -k)]
    return None


def fourier_motzkin(core: Sequence[Atom], var: str) -> Optional[Condition]:
    """Rational projection of a conjunction of atoms onto ``var``.

    Strictness is tracked, so the result is implied by ``core`` over the
    rationals and hence over the integers.  ``==`` counts as two inequalities.
    """
    rows: list[_Row] = []
    for atom in core:
        if not isinstance(atom, Atom):
            return None
        r = _rows(atom)
        if r is None:
            return None
        rows.extend(r)
    others = sorted({v for coeffs, _, _ in rows for v in coeffs if v != var})
    for x in others:
        pos = [r for r in rows if r[0].get(x, 0) > 0]
        negs = [r for r in rows if r[0].get(x, 0) < 0]
        rest = [r for r in rows if r[0].get(x, 0) == 0]
        for pc, ps, pb in pos:
            for nc, ns, nb in negs:
                a, b = pc[x], -nc[x]
                combined: dict[str, Fraction] = {}
                for v in set(pc) | set(nc):
                    c = pc.get(v, 0) / a + nc.get(v, 0) / b
                    if c != 0:
                        combined[v] = c
                rest.append((combined, ps or ns, pb / a + nb / b))
        rows = rest

    upper: Optional[tuple[int, Atom]] = None
    lower: Optional[tuple[int, Atom]] = None
    for coeffs, strict, bound in rows:
        coeffs = {v: c for v, c in coeffs.items() if c != 0}
        if not coeffs:
            if (0 >= bound) if strict else (0 > bound):
                return FALSE
            continue
        a = coeffs[var]
        r = bound / a
        if a > 0:
            if strict and r.denominator == 1:
                cand = (int(r) - 1, Atom.make([(var, 1)], "<", int(r)))
            else:
                cand = (math.floor(r), Atom.make([(var, 1)], "<=", math.floor(r)))
            if upper is None or cand[0] < upper[0]:
                upper = cand
        else:
            if strict and r.denominator == 1:
                cand = (int(r) + 1, Atom.make([(var, 1)], ">", int(r)))
            else:
                cand = (math.ceil(r), Atom.make([(var, 1)], ">=", math.ceil(r)))
            if lower is None or cand[0] > lower[0]:
                lower = cand
    parts = [b[1] for b in (lower, upper) if b is not None]
    if not parts:
        return None
    return conj(*parts)
