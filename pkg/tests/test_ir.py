import pytest
from hypothesis import given, settings, strategies as st

from vflow.conditions import TRUE, parse_atom
from vflow.ir import (
    ConcatError, VfgError, classify_path, concat, enumerate_paths, is_in, is_ip, is_out, is_sl,
    parse_program, print_program,
)
from vflow.workload import corpus_params, gen_workload_text

from conftest import fixture_path


def test_running_example_shape(running):
    assert set(running.vertices) == {
        "empty_str", "p", "a", "b", "c", "d", "deref_c", "free_b", "free_d"
    }
    assert running.edge("p", "a").guard == parse_atom("x1 > 0")
    assert running.edge("a", "c").guard == parse_atom("a != 0")
    assert running.edge("b", "free_b").guard == TRUE
    assert running.vertices["p"].cond == parse_atom("x1 > 0")


def test_empty_function():
    g = parse_program("func main(0) {}\n")
    assert len(g.vertices) == 0 and len(g.edges) == 0


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("func main(0) {\n  v x x call nope ret\n}\n", "unknown callee"),
        ("extern free(1)\nfunc main(0) {\n  v x x call free arg 3\n}\n", "arity mismatch"),
        ("func main(0) {\n  v x x assign\n  v x y assign\n}\n", "duplicate vertex id"),
        ("func f(1) {\n  v u u param 2\n}\n", "out of range"),
        ("func main(0) {\n  v x x assign\n  v y y assign\n  e x -> y\n  e y -> x\n}\n", "cyclic"),
        ("func main(0) {\n  v x x frob\n}\n", "unknown statement kind"),
        ("func main(0) {\n  v x x assign\n", "unterminated"),
        ("func f(0) {\n  v x x assign\n}\nfunc g(0) {\n  v y y assign\n  e x -> y\n}\n", "crosses functions"),
        ("func main(0) {\n  v x x assign\n  e x -> x2 guard x >> 1\n}\n", "line 3"),
    ],
)
def test_parse_errors(text, fragment):
    with pytest.raises(VfgError, match=fragment):
        parse_program(text)


def test_error_reports_line_and_column():
    with pytest.raises(VfgError) as info:
        parse_program("func main(0) {\n\n    v x x frob\n}\n")
    assert info.value.line == 3 and info.value.column == 5


def test_bind_edges(interproc):
    g, _ = interproc
    assert g.edge("ret_p", "a").kind == "ret"
    assert g.edge("a", "u").kind == "call"
    assert g.edge("ret_u", "b").kind == "ret"
    assert g.edge("a", "u").site == "main:xfree" == g.edge("ret_u", "b").site
    assert g.call_graph["main"] == {"xmalloc", "xfree"}


def test_loop_unrolled_twice():
    g = parse_program(
        "func main(0) {\n  v x x assign\n  loop {\n    v y y assign\n    v z z assign\n"
        "    e y -> z\n    e z -> y guard z > 0\n  }\n  v w w assign\n  e x -> y\n  e z -> w\n}\n"
    )
    assert {"y#1", "y#2", "z#1", "z#2"} <= set(g.vertices)
    pairs = {(e.src, e.dst) for e in g.edges}
    assert {("y#1", "z#1"), ("y#2", "z#2"), ("z#1", "y#2"), ("x", "y#1"), ("x", "y#2")} <= pairs
    assert ("z#2", "y#1") not in pairs
    assert g.edge("z#1", "y#2").guard == parse_atom("z > 0")


@pytest.mark.parametrize("name", ["running_example.vfg", "interproc.vfg", "appendix_example.vfg"])
def test_round_trip_fixtures(name):
    with open(fixture_path(name)) as fh:
        g = parse_program(fh.read())
    again = parse_program(print_program(g))
    assert again == g
    assert print_program(again) == print_program(g)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_round_trip_generated(seed):
    text, _ = gen_workload_text(seed, corpus_params(seed))
    g = parse_program(text)
    assert parse_program(print_program(g)) == g


def test_concat(interproc):
    g, _ = interproc
    assert concat(g, ("p", "ret_p"), ("a",)) == ("p", "ret_p", "a")
    with pytest.raises(ConcatError):
        concat(g, ("a",), ("a",))
    chain = parse_program("func m(0) {\n v x x assign\n v y y assign\n v z z assign\n e x -> y\n e y -> z\n}\n")
    assert concat(chain, ("x", "y"), ("z",)) == ("x", "y", "z")


def test_enumerate_paths_examples(running):
    chain = parse_program("func m(0) {\n v x x assign\n v y y assign\n v z z assign\n e x -> y\n e y -> z\n}\n")
    assert enumerate_paths(chain, {"x"}, {"z"}) == [("x", "y", "z")]
    assert enumerate_paths(chain, {"x"}, {"x"}) == [("x",)]
    assert enumerate_paths(running, {"p"}, {"free_b", "free_d"}) == [
        ("p", "a", "b", "free_b"),
        ("p", "a", "d", "free_d"),
    ]


def test_enumerate_paths_is_realizable():
    g = parse_program(
        "func id(1) {\n v u u param 0\n v r u ret\n e u -> r\n}\n"
        "func main(0) {\n v x x assign\n v a1 x call id arg 0 site s1\n v r1 r1 call id ret site s1\n"
        " v a2 y call id arg 0 site s2\n v r2 r2 call id ret site s2\n e x -> a1\n}\n"
    )
    paths = enumerate_paths(g, {"x"}, {"r1", "r2"})
    assert paths == [("x", "a1", "u", "r", "r1")]


def test_classify_appendix_examples(appendix):
    assert classify_path(appendix, ("a_s10", "u_s4", "u_s6", "b_s10")) == "SL"
    assert classify_path(appendix, ("p_s1", "p_s2")) == "OUT"
    assert classify_path(appendix, ("u_s4", "u_s5")) == "IN"
    assert classify_path(appendix, ("q", "a_s10")) == "IP"
    assert classify_path(appendix, ("p_s1", "p_s2", "q", "a_s10", "u_s4", "u_s5")) == "GENERAL"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_classification_consistency(seed):
    g = parse_program(gen_workload_text(seed, corpus_params(seed))[0])
    for p in enumerate_paths(g, g.vertices, g.vertices)[:400]:
        if is_ip(g, p):
            assert is_sl(g, p)
        if is_in(g, p):
            assert g.vertices[p[0]].is_formal_param
        if is_out(g, p):
            assert g.vertices[p[-1]].is_formal_ret
        assert len(set(p)) == len(p)
        assert g.is_path(p)
