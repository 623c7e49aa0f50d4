"""Decomposition checker for the path grammar.

Works on edge kinds only and never consults the calling-context machinery
used elsewhere, so it can cross-check summaries and stitched paths.

    SL  -> IP | IP(., ap) SL(fp, fr) SL(ar, .)        call and return share a site
    OUT -> SL(., fr) | OUT(., fr) SL(ar, fr)
    IN  -> SL(fp, .) | SL(fp, ap) IN(fp, .)
    T   -> SL | SL IN | OUT SL | OUT SL IN
"""

from __future__ import annotations

from functools import lru_cache

from .ir import Path, ValueFlowGraph


class Derivation:
    def __init__(self, g: ValueFlowGraph, path: Path):
        self.g = g
        self.path = tuple(path)
        self.kinds = [g.edge_index[(a, b)] if (a, b) in g.edge_index else None
                      for a, b in zip(path, path[1:])]
        if any(k is None for k in self.kinds):
            raise ValueError("not a path in the graph")
        self.ip = lru_cache(maxsize=None)(self._ip)
        self.sl = lru_cache(maxsize=None)(self._sl)
        self.out = lru_cache(maxsize=None)(self._out)
        self.inp = lru_cache(maxsize=None)(self._in)

    def _fn(self, i: int) -> str:
        return self.g.vertices[self.path[i]].function

    def _edge(self, i: int):
        """Edge from ``path[i]`` to ``path[i + 1]``."""
        return self.kinds[i]

    def _is_fr(self, i: int) -> bool:
        return self.g.vertices[self.path[i]].is_formal_ret

    # each predicate covers the closed index range [i, j]

    def _ip(self, i: int, j: int) -> bool:
        return all(self._edge(k).kind == "intra" for k in range(i, j))

    def _sl(self, i: int, j: int) -> bool:
        if self.ip(i, j):
            return True
        for a in range(i, j):
            call = self._edge(a)
            if call.kind != "call":
                continue
            if not self.ip(i, a):
                return False  # the IP prefix cannot extend past a call edge
            for b in range(a + 1, j):
                ret = self._edge(b)
                if ret.kind == "ret" and ret.site == call.site and self.sl(a + 1, b) and self.sl(b + 1, j):
                    return True
            return False
        return False

    def _out(self, i: int, j: int) -> bool:
        if not self._is_fr(j):
            return False
        if self.sl(i, j):
            return True
        return any(
            self._edge(b).kind == "ret" and self.out(i, b) and self.sl(b + 1, j)
            for b in range(i, j)
        )

    def _in(self, i: int, j: int) -> bool:
        if not self.g.vertices[self.path[i]].is_formal_param:
            return False
        if self.sl(i, j):
            return True
        return any(
            self._edge(a).kind == "call" and self.sl(i, a) and self.inp(a + 1, j)
            for a in range(i, j)
        )

    def target(self) -> bool:
        n = len(self.path) - 1
        if self.sl(0, n):
            return True
        for a in range(n):
            if self._edge(a).kind == "call" and self.sl(0, a) and self.inp(a + 1, n):
                return True
        for b in range(n):
            if self._edge(b).kind != "ret" or not self.out(0, b):
                continue
            if self.sl(b + 1, n):
                return True
            for a in range(b + 1, n):
                if self._edge(a).kind == "call" and self.sl(b + 1, a) and self.inp(a + 1, n):
                    return True
        return False


def derives(g: ValueFlowGraph, path: Path, symbol: str) -> bool:
    """Does ``path`` derive from ``symbol`` (one of IP, SL, OUT, IN, TARGET)?"""
    d = Derivation(g, path)
    n = len(d.path) - 1
    if symbol == "TARGET":
        return d.target()
    fn = {"IP": d.ip, "SL": d.sl, "OUT": d.out, "IN": d.inp}[symbol]
    return fn(0, n)
