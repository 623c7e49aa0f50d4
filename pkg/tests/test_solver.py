import itertools

import pytest
from hypothesis import given, settings, strategies as st

from vflow.conditions import TRUE, conj, parse_atom, parse_atom_list
from vflow.solver import NotUnsatError, Solver, SolverBudgetExceeded, fourier_motzkin

from test_conditions import atoms, conditions

A = parse_atom
SMALL = Solver(-8, 8)


def brute_sat(c, lo=-8, hi=8):
    vs = sorted(c.variables())
    return any(c.evaluate(dict(zip(vs, vals))) for vals in itertools.product(range(lo, hi + 1), repeat=len(vs)))


# -- examples ----------------------------------------------------------------


def test_is_sat_examples():
    s = Solver()
    assert not s.is_sat(conj(A("a + b > 3"), A("b < 0"), A("a == 0")))
    assert s.is_sat(TRUE)
    assert not s.is_sat(conj(A("x > 0"), A("x < 0")))
    assert s.counters.sat_queries == 3


def test_unsat_core_examples():
    s = Solver()
    core = s.unsat_core([A("x > 5"), A("a + b > 3"), A("b < 0")], A("a == 0"))
    assert core == [A("a + b > 3"), A("b < 0")]
    assert s.unsat_core([A("x > 0"), A("x < 0")]) == [A("x > 0"), A("x < 0")]
    assert s.unsat_core([A("x < x")]) == [A("x < x")]
    assert s.counters.core_extractions == 3
    assert s.counters.sat_queries == 0


def test_unsat_core_matches_subset_oracle():
    # deletion order picks the first minimal subset in list order
    s = Solver()
    xs = [A("x > 5"), A("a + b > 3"), A("b < 0")]
    psc = A("a == 0")
    minimal = [
        list(sub) for r in range(1, 4) for sub in itertools.combinations(xs, r)
        if not s.check(conj(*sub, psc))
    ]
    assert s.unsat_core(xs, psc) == minimal[0]


def test_unsat_core_rejects_sat_input():
    with pytest.raises(NotUnsatError):
        Solver().unsat_core([A("x > 0")], TRUE)


def test_interpolant_examples():
    s = Solver()
    gamma = s.interpolant([A("a + b > 3"), A("b < 0")], A("a == 0"))
    assert s.equivalent(gamma, A("a > 3"))
    assert s.equivalent(s.interpolant([A("a > 5")], A("a == 0")), A("a > 5"))
    assert s.interpolant([A("b != 0")], A("b == 0")) is None
    with pytest.raises(NotUnsatError):
        s.interpolant([A("a > 0")], A("a == 1"))


def test_fourier_motzkin_eliminates_all_but_target():
    assert fourier_motzkin([A("a + b > 3"), A("b < 0")], "a") == A("a > 3")
    assert fourier_motzkin([A("a + b > 3"), A("b == 2")], "a") == A("a > 1")
    assert fourier_motzkin([A("b != 2")], "a") is None


def test_classify_examples():
    s = Solver()
    assert s.classify_psc_pair(A("v == 0"), A("v <= 0")) == "implies"
    assert s.classify_psc_pair(A("v != 0"), A("v > 3")) == "overlapping"
    assert s.classify_psc_pair(A("v == 0"), A("v != 0")) == "disjoint"
    assert s.exhaustive(A("v == 0"), A("v != 0"))
    assert not s.exhaustive(A("v == 1"), A("v == 2"))


def test_budget_is_enforced():
    s = Solver(budget=3)
    hard = parse_atom_list("a != b; b != c; a != c; a + b == 0; b + c == 1")
    with pytest.raises(SolverBudgetExceeded):
        s.check(hard)


def test_env_budget(monkeypatch):
    monkeypatch.setenv("VFLOW_SOLVER_BUDGET", "17")
    assert Solver().budget == 17


def test_fork_has_own_counters():
    s = Solver()
    s.is_sat(TRUE)
    t = s.fork()
    assert t.counters.sat_queries == 0 and (t.lo, t.hi) == (s.lo, s.hi)


# -- properties --------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(conditions())
def test_sat_matches_enumeration(c):
    assert SMALL.check(c) == brute_sat(c)


@settings(max_examples=25, deadline=None)
@given(st.lists(atoms(), min_size=2, max_size=5), st.sampled_from(["a", "b", "c", "d"]))
def test_sat_matches_enumeration_four_vars(xs, w):
    c = conj(*xs, A(f"d + {w} != 1"))
    assert SMALL.check(c) == brute_sat(c)


@settings(max_examples=150, deadline=None)
@given(st.lists(atoms(), min_size=1, max_size=5), st.sampled_from(["v == 0", "v > 2", "v != 1", "true"]))
def test_core_is_deletion_minimal(xs, psc_text):
    psc = parse_atom_list(psc_text.replace("v", "a"))
    if SMALL.check(conj(*xs, psc)):
        return
    core = SMALL.unsat_core(xs, psc)
    assert not SMALL.check(conj(*core, psc))
    for i in range(len(core)):
        assert SMALL.check(conj(*(core[:i] + core[i + 1:]), psc))


@settings(max_examples=150, deadline=None)
@given(st.lists(atoms(), min_size=1, max_size=4), st.sampled_from(["a == 0", "a > 2", "a <= -1", "a == 3"]))
def test_interpolant_conditions(xs, psc_text):
    psc = A(psc_text)
    if SMALL.check(conj(*xs, psc)):
        return
    core = SMALL.unsat_core(xs, psc)
    gamma = SMALL.interpolant(core, psc)
    if gamma is None:
        return
    assert gamma.variables() <= {"a"}
    assert SMALL.implies(conj(*core), gamma)
    assert not SMALL.check(conj(gamma, psc))


@given(st.sampled_from(["v == 0", "v != 0", "v > 3", "v <= -2", "true"]))
def test_classify_reflexive(text):
    c = parse_atom_list(text)
    assert Solver().classify_psc_pair(c, c) == "implies"
