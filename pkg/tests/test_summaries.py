import pytest
from hypothesis import given, settings, strategies as st

from vflow.grammar import derives
from vflow.ir import enumerate_paths, parse_program
from vflow.propspec import PropertySet, match_vertices, parse_specs
from vflow.summaries import (
    SchedulingError, SummaryDB, bottom_up_schedule, build_summaries, dump_summaries, iter_summaries,
    load_summaries, stitch, stitch_labeled, summarize,
)
from vflow.workload import GenParams, gen_workload

from conftest import fixture_path


def _sum_map(db):
    return {(s.function, s.kind, s.path): s.label.bits for s in iter_summaries(db)}


def test_interproc_labels(interproc):
    g, specs = interproc
    m = _sum_map(summarize(g, specs))
    assert m[("xfree", "transfer", ("u", "ret_u"))] == 0b111
    assert m[("xfree", "input", ("u", "free_u"))] == 0b110
    assert m[("xmalloc", "output", ("p", "ret_p"))] == 0b111


def test_interproc_stitch(interproc):
    g, specs = interproc
    labeled = stitch_labeled(g, summarize(g, specs), specs)
    assert labeled[("p", "ret_p", "a", "u", "free_u")].bits == 0b110
    paths = stitch(g, summarize(g, specs), specs)
    assert paths["null-deref"] == []
    assert paths["double-free"] == [("p", "ret_p", "a", "u", "free_u"), ("p", "ret_p", "a", "u", "ret_u", "b", "free_b")]


def test_schedule_examples(interproc):
    g, _ = interproc
    assert bottom_up_schedule(g) == [["xfree", "xmalloc"], ["main"]]
    single = parse_program("func m(0) {\n v x x global\n}\n")
    assert bottom_up_schedule(single) == [["m"]]
    chain = parse_program(
        "func a(0) {\n v ra r call b ret\n}\nfunc b(0) {\n v rb r call c ret\n v ob r ret\n e rb -> ob\n}\n"
        "func c(0) {\n v x x global\n v oc x ret\n e x -> oc\n}\n"
    )
    assert bottom_up_schedule(chain) == [["c"], ["b"], ["a"]]


def test_recursion_is_a_scheduling_error():
    g = parse_program("func a(0) {\n v r1 r call b ret\n}\nfunc b(0) {\n v r2 r call a ret\n}\n")
    with pytest.raises(SchedulingError):
        bottom_up_schedule(g)


def test_callee_missing_is_a_scheduling_error(interproc):
    g, specs = interproc
    with pytest.raises(SchedulingError):
        build_summaries(g, "main", SummaryDB(len(specs)), specs)


def test_empty_body(interproc):
    _, specs = interproc
    g = parse_program("func e(0) {\n}\nfunc m(0) {\n v x x global\n}\n")
    db = summarize(g, specs)
    assert db["e"].all() == []


def test_vfsum_round_trip(interproc):
    g, specs = interproc
    db = summarize(g, specs)
    text = dump_summaries(db)
    assert "xfree input 0b110 u free_u" in text
    again = load_summaries(text)
    assert _sum_map(again) == _sum_map(db)
    assert dump_summaries(again) == text
    with pytest.raises(ValueError):
        load_summaries("xfree input 0b1 u\n")


def test_unrealizable_path_rejected():
    g = parse_program(
        "func id(1) {\n v p p param 0\n v r p ret\n e p -> r\n}\n"
        "func a(0) {\n v x x global\n v ax x call id arg 0\n v ar y call id ret\n e x -> ax\n}\n"
        "func b(0) {\n v bx z assign\n v br w call id ret\n v s w call free arg 0\n e br -> s\n}\n"
        "extern free(1)\n"
    )
    (spec,) = parse_specs("prop z { src: global; sink: call free arg 0; psc: true; agg: never }")
    bad = ("x", "ax", "p", "r", "br", "s")
    assert all(pair in g.edge_index for pair in zip(bad, bad[1:]))
    assert not g.is_path(bad)
    assert not derives(g, bad, "TARGET")
    assert bad not in stitch(g, summarize(g, [spec]), [spec])["z"]
    assert enumerate_paths(g, ["x"], ["s"]) == []


def _params(seed):
    return GenParams(functions=1 + seed % 4, vertices_min=2, vertices_max=8, properties=1 + seed % 6)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 100_000))
def test_stitch_equals_enumeration(seed):
    g, specs = gen_workload(seed, _params(seed))
    got = stitch(g, summarize(g, specs), specs)
    for s in specs:
        assert got[s.name] == enumerate_paths(g, match_vertices(s.src, g), match_vertices(s.sink, g))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_summaries_follow_the_grammar(seed):
    g, specs = gen_workload(seed, _params(seed))
    db = summarize(g, specs)
    src = {s.bit: set(match_vertices(s.src, g)) for s in specs}
    sink = {s.bit: set(match_vertices(s.sink, g)) for s in specs}
    for summ in iter_summaries(db):
        head, tail = g.vertices[summ.path[0]], g.vertices[summ.path[-1]]
        if summ.kind == "transfer":
            assert derives(g, summ.path, "SL")
            assert head.is_formal_param and tail.is_formal_ret
            assert head.function == tail.function == summ.function
        elif summ.kind == "input":
            assert derives(g, summ.path, "IN") and head.function == summ.function
        else:
            assert derives(g, summ.path, "OUT") and tail.function == summ.function
        for s in specs:
            if s.bit in summ.label and summ.kind == "input":
                assert summ.path[-1] in sink[s.bit]
            if s.bit in summ.label and summ.kind == "output":
                assert summ.path[0] in src[s.bit]
    for path, label in stitch_labeled(g, db, specs).items():
        assert derives(g, path, "TARGET")
        for s in specs:
            if s.bit in label:
                assert path[0] in src[s.bit] and path[-1] in sink[s.bit]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_threads_give_the_same_database(seed):
    g, specs = gen_workload(seed, _params(seed))
    assert dump_summaries(summarize(g, specs, threads=4)) == dump_summaries(summarize(g, specs))


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_label_and_is_associative(a, b, c):
    x, y, z = (PropertySet(v, 8) for v in (a, b, c))
    assert ((x & y) & z) == (x & (y & z))
    assert (x & y) == (y & x)
    assert (x & PropertySet.full(8)) == x


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_realizable_paths_derive_target(seed):
    g, specs = gen_workload(seed, _params(seed))
    everything = sorted(g.vertices)
    for path in enumerate_paths(g, everything, everything):
        assert derives(g, path, "TARGET")


def test_appendix_fixture(appendix):
    path = ("p_s1", "p_s2", "q", "a_s10", "u_s4", "u_s5")
    assert derives(appendix, ("p_s1", "p_s2"), "OUT")
    assert derives(appendix, ("u_s4", "u_s5"), "IN")
    assert derives(appendix, path, "TARGET")
    assert not derives(appendix, ("p_s1", "p_s2"), "IN")
