"""Boolean conditions over linear integer atoms.

Atoms are kept in a canonical linear form ``sum(coef * var) OP const`` so that
``x > y`` and ``y < x`` compare equal and hash identically.  Conditions are
immutable trees and may be used as dictionary keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

OPS = ("<", "<=", "==", "!=", ">=", ">")

_FLIP = {"<": ">", "<=": ">=", "==": "==", "!=": "!=", ">=": "<=", ">": "<"}
_NEGATE = {"<": ">=", "<=": ">", "==": "!=", "!=": "==", ">=": "<", ">": "<="}


class ConditionSyntaxError(ValueError):
    pass


def _compare(lhs, op: str, rhs) -> bool:
    if op == "<":
        return lhs < rhs
    if op == "<=":
        return lhs <= rhs
    if op == "==":
        return lhs == rhs
    if op == "!=":
        return lhs != rhs
    if op == ">=":
        return lhs >= rhs
    return lhs > rhs


class Condition:
    """Base class of the condition tree."""

    __slots__ = ()

    def variables(self) -> frozenset[str]:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, int]) -> bool:
        raise NotImplementedError

    def partial(self, env: Mapping[str, int]) -> Optional[bool]:
        """Three-valued evaluation: ``None`` when unassigned variables matter."""
        raise NotImplementedError

    def rename(self, mapping: Mapping[str, str]) -> "Condition":
        raise NotImplementedError

    def atoms(self) -> list["Atom"]:
        raise NotImplementedError

    def __and__(self, other: "Condition") -> "Condition":
        return conj(self, other)

    def __or__(self, other: "Condition") -> "Condition":
        return disj(self, other)

    def __invert__(self) -> "Condition":
        return neg(self)


@dataclass(frozen=True)
class Const(Condition):
    value: bool

    def variables(self):
        return frozenset()

    def evaluate(self, env):
        return self.value

    def partial(self, env):
        return self.value

    def rename(self, mapping):
        return self

    def atoms(self):
        return []

    def __str__(self):
        return "true" if self.value else "false"


TRUE = Const(True)
FALSE = Const(False)


@dataclass(frozen=True)
class Atom(Condition):
    """``sum(coef * var for var, coef in terms) OP const``.

    Terms are sorted by variable name and the leading coefficient is made
    non-negative, flipping the operator when needed.
    """

    terms: tuple[tuple[str, int], ...]
    op: str
    const: int

    @staticmethod
    def make(terms: Iterable[tuple[str, int]], op: str, const: int) -> "Atom":
        if op not in OPS:
            raise ConditionSyntaxError(f"unknown operator {op!r}")
        merged: dict[str, int] = {}
        for var, coef in terms:
            merged[var] = merged.get(var, 0) + coef
        items = sorted(merged.items())
        lead = next((c for _, c in items if c != 0), 0)
        if lead < 0:
            items = [(v, -c) for v, c in items]
            const = -const
            op = _FLIP[op]
        return Atom(tuple(items), op, const)

    def value(self, env: Mapping[str, int]) -> int:
        return sum(coef * env[var] for var, coef in self.terms)

    def variables(self):
        return frozenset(v for v, _ in self.terms)

    def evaluate(self, env):
        return _compare(self.value(env), self.op, self.const)

    def partial(self, env):
        total = 0
        for var, coef in self.terms:
            if coef == 0:
                continue
            if var not in env:
                return None
            total += coef * env[var]
        return _compare(total, self.op, self.const)

    def rename(self, mapping):
        if not any(v in mapping for v, _ in self.terms):
            return self
        return Atom.make(((mapping.get(v, v), c) for v, c in self.terms), self.op, self.const)

    def atoms(self):
        return [self]

    def negated(self) -> "Atom":
        return Atom(self.terms, _NEGATE[self.op], self.const)

    def __str__(self):
        t, op, k = self.terms, self.op, self.const
        if len(t) == 1:
            (x, c), = t
            if c == 1:
                return f"{x} {op} {k}"
            if c == 0 and k == 0:
                return f"{x} {op} {x}"
            if c == 2:
                return f"{x} + {x} {op} {k}"
        if len(t) == 2:
            (x, cx), (y, cy) = t
            if cx == 1 and cy == 1:
                return f"{x} + {y} {op} {k}"
            if cx == 1 and cy == -1 and k == 0:
                return f"{x} {op} {y}"
            if cx == 0 and cy == 0 and k == 0:
                return f"{x} {op} {x}"
        lhs = " + ".join(f"{c}*{v}" for v, c in t) or "0"
        return f"{lhs} {op} {k}"


@dataclass(frozen=True)
class Not(Condition):
    arg: Condition

    def variables(self):
        return self.arg.variables()

    def evaluate(self, env):
        return not self.arg.evaluate(env)

    def partial(self, env):
        r = self.arg.partial(env)
        return None if r is None else not r

    def rename(self, mapping):
        return neg(self.arg.rename(mapping))

    def atoms(self):
        return self.arg.atoms()

    def __str__(self):
        return f"!({self.arg})"


@dataclass(frozen=True)
class And(Condition):
    args: tuple[Condition, ...]

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))

    def evaluate(self, env):
        return all(a.evaluate(env) for a in self.args)

    def partial(self, env):
        unknown = False
        for a in self.args:
            r = a.partial(env)
            if r is False:
                return False
            if r is None:
                unknown = True
        return None if unknown else True

    def rename(self, mapping):
        return conj(*(a.rename(mapping) for a in self.args))

    def atoms(self):
        return [x for a in self.args for x in a.atoms()]

    def __str__(self):
        return "(" + " & ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class Or(Condition):
    args: tuple[Condition, ...]

    def variables(self):
        return frozenset().union(*(a.variables() for a in self.args))

    def evaluate(self, env):
        return any(a.evaluate(env) for a in self.args)

    def partial(self, env):
        unknown = False
        for a in self.args:
            r = a.partial(env)
            if r is True:
                return True
            if r is None:
                unknown = True
        return None if unknown else False

    def rename(self, mapping):
        return disj(*(a.rename(mapping) for a in self.args))

    def atoms(self):
        return [x for a in self.args for x in a.atoms()]

    def __str__(self):
        return "(" + " | ".join(map(str, self.args)) + ")"


def conj(*conds: Condition) -> Condition:
    """Flattening conjunction; drops ``true`` and duplicate conjuncts."""
    out: list[Condition] = []
    for c in conds:
        parts = c.args if isinstance(c, And) else (c,)
        for p in parts:
            if p == TRUE:
                continue
            if p == FALSE:
                return FALSE
            if p not in out:
                out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*conds: Condition) -> Condition:
    out: list[Condition] = []
    for c in conds:
        parts = c.args if isinstance(c, Or) else (c,)
        for p in parts:
            if p == FALSE:
                continue
            if p == TRUE:
                return TRUE
            if p not in out:
                out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def neg(c: Condition) -> Condition:
    if isinstance(c, Const):
        return FALSE if c.value else TRUE
    if isinstance(c, Not):
        return c.arg
    return Not(c)


# -- parsing -----------------------------------------------------------------

_IDENT = r"[A-Za-z_$@][A-Za-z0-9_.#$@]*"
_INT = r"-?\d+"
_OP = r"<=|>=|==|!=|<|>"
_ATOM_RE = re.compile(
    rf"^\s*(?P<a>{_IDENT})\s*(?:\+\s*(?P<b>{_IDENT})\s*)?(?P<op>{_OP})\s*(?P<rhs>{_IDENT}|{_INT})\s*$"
)


def parse_atom(text: str) -> Atom:
    """Parse ``VAR OP INT``, ``VAR OP VAR`` or ``VAR + VAR OP INT``."""
    m = _ATOM_RE.match(text)
    if not m:
        raise ConditionSyntaxError(f"malformed atom {text.strip()!r}")
    a, b, op, rhs = m.group("a"), m.group("b"), m.group("op"), m.group("rhs")
    if re.fullmatch(_INT, rhs):
        terms = [(a, 1)] + ([(b, 1)] if b else [])
        return Atom.make(terms, op, int(rhs))
    if b:
        raise ConditionSyntaxError(f"'VAR + VAR OP VAR' is not supported: {text.strip()!r}")
    return Atom.make([(a, 1), (rhs, -1)], op, 0)


def parse_atom_list(text: str) -> Condition:
    """Parse a ``;``-separated conjunction; ``true``/``false`` are accepted."""
    parts = [p.strip() for p in text.split(";") if p.strip()]
    conds: list[Condition] = []
    for p in parts:
        if p == "true":
            conds.append(TRUE)
        elif p == "false":
            conds.append(FALSE)
        else:
            conds.append(parse_atom(p))
    return conj(*conds)


def format_atom_list(c: Condition) -> str:
    """Inverse of :func:`parse_atom_list` for conjunctions of atoms."""
    if c == TRUE:
        return "true"
    if c == FALSE:
        return "false"
    if isinstance(c, Atom):
        return str(c)
    if isinstance(c, And) and all(isinstance(a, (Atom, Const)) for a in c.args):
        return "; ".join(str(a) for a in c.args)
    raise ValueError(f"not an atom list: {c}")


def conjuncts(c: Condition) -> list[Condition]:
    if c == TRUE:
        return []
    if isinstance(c, And):
        return list(c.args)
    return [c]


def to_fraction_bound(atom: Atom) -> Optional[tuple[str, str, Fraction]]:
    """Return ``(var, op, bound)`` for single-variable atoms, ``None`` otherwise."""
    live = [(v, c) for v, c in atom.terms if c != 0]
    if len(live) != 1:
        return None
    (var, coef), = live
    op = atom.op if coef > 0 else _FLIP[atom.op]
    return var, op, Fraction(atom.const, coef)


ConditionLike = Union[Condition, str]


def as_condition(c: ConditionLike) -> Condition:
    return parse_atom_list(c) if isinstance(c, str) else c
