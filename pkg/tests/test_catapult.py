import random

import pytest
from hypothesis import given, settings, strategies as st

from vflow.catapult import (
    Catapult, InvariantViolation, SinkReachStore, check_catapult, finalize_reach, make_plans,
    rules_from_mask,
)
from vflow.conditions import conj
from vflow.engine import check_naive, path_sets
from vflow.ir import enumerate_paths, parse_program
from vflow.pathcond import guard_atoms
from vflow.propspec import match_vertices, parse_specs
from vflow.solver import Solver
from vflow.workload import GenParams, gen_workload

from helpers import small_params

MEM = "prop mem-leak { src: call malloc ret; sink: call free arg 0; psc: v != 0; agg: must }"


def test_forward_order_prunes_b_and_d(running, demo_specs):
    engine = Catapult(running, demo_specs)
    assert engine.plan.check_order == ["free-glob-ptr", "null-deref"]
    results = engine.run()
    assert path_sets(results) == path_sets(check_naive(running, demo_specs)[0])
    assert engine.stats.pruned_rule2 == 2
    nd = next(s for s in demo_specs if s.name == "null-deref")
    assert engine.reach.get("b", nd.bit) is False
    assert engine.reach.get("d", nd.bit) is False


def test_reversed_order_prunes_once(running, demo_specs):
    _, stats = check_catapult(running, demo_specs, forced_order=["null-deref", "free-glob-ptr"])
    assert stats.pruned_rule2 == 1


def test_forced_order_must_be_permutation(running, demo_specs):
    with pytest.raises(ValueError):
        make_plans(running, demo_specs, forced_order=["null-deref"])


def test_eager_conflict_on_a_to_c(running, demo_specs):
    engine = Catapult(running, demo_specs, eager_conflicts=True)
    results = engine.run()
    assert path_sets(results) == path_sets(check_naive(running, demo_specs)[0])
    ac = running.edge_index[("a", "c")].eid
    assert any(e.edges == frozenset({ac}) and str(e.fact) == "@v == 0" for e in engine.conflicts.entries)
    assert engine.stats.pruned_rule34 == 1


def test_mask_zero_matches_naive_exactly(running, demo_specs):
    naive_results, naive_stats = check_naive(running, demo_specs)
    results, stats = check_catapult(running, demo_specs, rules=rules_from_mask(0))
    assert path_sets(results) == path_sets(naive_results)
    assert stats.as_dict() == naive_stats.as_dict()


def test_rules_from_mask():
    assert rules_from_mask(0) == frozenset()
    assert rules_from_mask(0b10) == {2}
    assert rules_from_mask(0xFF) == set(range(1, 9))


def test_plan_groups_shared_sources(running, demo_specs):
    specs = parse_specs("\n".join([
        "prop null-deref { src: call malloc ret; sink: load operand, store address; psc: v == 0; agg: never }",
        MEM,
    ]))
    plan = make_plans(running, specs)
    assert [[s.name for s in grp.members] for grp in plan.groups] == [["null-deref", "mem-leak"]]
    desc = plan.describe()
    assert desc["psc_strategies"] == [{"first": "null-deref", "second": "mem-leak", "strategy": "disjoint-pair"}]


def test_single_property_plan_is_trivial(running, demo_specs):
    plan = make_plans(running, demo_specs[:1])
    desc = plan.describe()
    assert desc["groups"] == [["null-deref"]]
    assert desc["recording"] == [
        {"from": ["null-deref"], "reach_for": [], "cores_for": [], "interpolants_for": []}
    ]


def test_implies_pair_checks_stronger_first():
    g = parse_program("extern malloc(1)\nfunc m(0) {\n v p p call malloc ret\n}\n")
    specs = parse_specs(
        "prop weak { src: call malloc ret; sink: call malloc ret; psc: v >= 0; agg: never }\n"
        "prop strong { src: call malloc ret; sink: call malloc ret; psc: v > 3; agg: never }\n"
    )
    plan = make_plans(g, specs)
    assert plan.check_order == ["strong", "weak"]
    results, stats = check_catapult(g, specs)
    assert stats.psc_checks_saved == 1
    assert stats.solver.sat_queries == 1
    assert len(results["weak"]) == len(results["strong"]) == 1


def test_finalize_reach_examples(running, demo_specs):
    nd = next(s for s in demo_specs if s.name == "null-deref")
    sinks = {nd.bit: frozenset(match_vertices(nd.sink, running))}
    store = SinkReachStore()
    finalize_reach(store, running, "free_b", [nd.bit], sinks)  # leaf, not a sink
    assert store.get("free_b", nd.bit) is False
    finalize_reach(store, running, "deref_c", [nd.bit], sinks)  # a sink
    assert store.get("deref_c", nd.bit) is True
    finalize_reach(store, running, "b", [nd.bit], sinks)
    assert store.get("b", nd.bit) is False
    with pytest.raises(InvariantViolation):
        finalize_reach(store, running, "a", [nd.bit], sinks)  # c and d undecided


def _check_stores(g, specs, engine):
    solver = Solver()
    for (vertex, bit), reaches in engine.reach.entries.items():
        if reaches is False:
            spec = engine.by_bit[bit]
            assert enumerate_paths(g, [vertex], match_vertices(spec.sink, g)) == []
    by_eid = {e.eid: e for e in g.edges}
    for entry in engine.conflicts.entries:
        guards = conj(*(a for a, _ in guard_atoms(g, [by_eid[i] for i in sorted(entry.edges)], "@v")))
        if entry.rule == 3:
            assert not solver.check(conj(guards, entry.fact))
        else:
            assert solver.implies(guards, entry.fact)
        for spec in specs:
            if entry.bits & spec.mask:
                # every property the entry prunes really conflicts with these edges
                assert not solver.check(conj(guards, spec.psc.rename({"v": "@v"})))
                if entry.rule == 4:
                    assert not solver.check(conj(entry.fact, spec.psc.rename({"v": "@v"})))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000), st.booleans())
def test_equivalence_and_store_soundness(seed, eager):
    g, specs = gen_workload(seed, small_params(seed))
    naive, naive_stats = check_naive(g, specs)
    engine = Catapult(g, specs, eager_conflicts=eager)
    results = engine.run()
    assert path_sets(results) == path_sets(naive)
    if not eager:
        assert engine.stats.solver.sat_queries <= naive_stats.solver.sat_queries
    _check_stores(g, specs, engine)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 0xFF))
def test_every_rule_mask_is_equivalent(seed, mask):
    g, specs = gen_workload(seed, small_params(seed))
    naive = path_sets(check_naive(g, specs)[0])
    assert path_sets(check_catapult(g, specs, rules=rules_from_mask(mask))[0]) == naive


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.randoms(use_true_random=False))
def test_permuting_specs_keeps_path_sets(seed, rnd):
    g, specs = gen_workload(seed, small_params(seed))
    shuffled = list(specs)
    rnd.shuffle(shuffled)
    assert path_sets(check_catapult(g, shuffled)[0]) == path_sets(check_catapult(g, specs)[0])


def test_forced_orders_agree_on_running_example(running, demo_specs):
    a = path_sets(check_catapult(running, demo_specs, forced_order=["null-deref", "free-glob-ptr"])[0])
    b = path_sets(check_catapult(running, demo_specs)[0])
    assert a == b


def test_skeleton_budget_zero_stays_sound():
    for seed in range(30):
        g, specs = gen_workload(seed, GenParams(functions=2, properties=5))
        results, stats = check_catapult(g, specs, skeleton_budget=0)
        assert path_sets(results) == path_sets(check_naive(g, specs)[0])


@pytest.mark.parametrize("fixture,prop", [
    ("running_example.vfg", "demo.prop"),
    ("running_example.vfg", "running_example_agg.prop"),
    ("interproc.vfg", "interproc.prop"),
])
def test_fixture_efficiency(fixture, prop):
    from conftest import fixture_path
    from vflow.ir import load_program
    from vflow.propspec import load_specs
    g, specs = load_program(fixture_path(fixture)), load_specs(fixture_path(prop))
    naive, naive_stats = check_naive(g, specs)
    results, stats = check_catapult(g, specs)
    assert path_sets(results) == path_sets(naive)
    assert stats.solver.sat_queries < naive_stats.solver.sat_queries


def test_corpus_sample_never_worse():
    rng = random.Random(7)
    for _ in range(40):
        seed = rng.randrange(10**6)
        g, specs = gen_workload(seed, GenParams(functions=3, properties=6))
        naive, ns = check_naive(g, specs)
        res, cs = check_catapult(g, specs)
        assert path_sets(res) == path_sets(naive)
        assert cs.solver.sat_queries <= ns.solver.sat_queries
