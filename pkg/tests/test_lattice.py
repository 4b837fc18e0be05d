"""Graph specs, patterns, and the exact torus enumeration oracle."""

from fractions import Fraction

import pytest

from dimerlab.lattice import (
    GraphSpecError,
    Pattern,
    PatternError,
    bundled_graph_names,
    bundled_graph_path,
    enumerate_torus,
    load_graph_spec,
    pattern_vertices,
    validate_pattern,
)

from conftest import edge_pattern


def test_bundled_graphs_present():
    names = bundled_graph_names()
    for expected in ("z2_uniform", "z2_abcd", "z2_3111", "honeycomb",
                     "square_octagon"):
        assert expected in names


def test_load_and_hash_stability(uniform_graph):
    again = load_graph_spec(bundled_graph_path("z2_uniform"))
    assert again.graph_hash == uniform_graph.graph_hash
    other = load_graph_spec(bundled_graph_path("z2_abcd"))
    assert other.graph_hash != uniform_graph.graph_hash


def test_edge_lookup(uniform_graph):
    assert uniform_graph.edge_by_id("a").id == "a"
    with pytest.raises(GraphSpecError):
        uniform_graph.edge_by_id("nope")


def test_pattern_validation_rejects_vertex_overlap(uniform_graph):
    # a and b at the same cell share the white vertex
    e = uniform_graph.edge_by_id("a")
    bad = Pattern((("a", (0, 0)), ("b", (0, 0))), e.white_ref((0, 0)))
    with pytest.raises(PatternError):
        validate_pattern(uniform_graph, bad)


def test_pattern_validation_rejects_duplicates(uniform_graph):
    e = uniform_graph.edge_by_id("a")
    bad = Pattern((("a", (0, 0)), ("a", (0, 0))), e.white_ref((0, 0)))
    with pytest.raises(PatternError):
        validate_pattern(uniform_graph, bad)


def test_pattern_validation_checks_marked_vertex(uniform_graph):
    e = uniform_graph.edge_by_id("a")
    bad = Pattern((("a", (0, 0)),), e.white_ref((5, 5)))
    with pytest.raises(PatternError):
        validate_pattern(uniform_graph, bad)


def test_pattern_translate_keeps_shape(uniform_graph):
    p = edge_pattern(uniform_graph, "a")
    q = p.translated((3, -2))
    assert q.edges[0][1] == (3, -2)
    assert q.marked.offset != p.marked.offset
    verts = pattern_vertices(uniform_graph, q)
    assert q.marked in verts


def test_enumerate_torus_uniform_counts(uniform_graph):
    te1 = enumerate_torus(uniform_graph, 1)
    assert te1.Z == 4 and te1.n_matchings == 4
    te2 = enumerate_torus(uniform_graph, 2)
    assert te2.n_matchings == 24
    # every edge class is equally likely by symmetry
    assert te2.marginals["a"] == Fraction(1, 4)
    assert sum(te2.marginals.values()) == 1


def test_enumerate_torus_honeycomb(honeycomb_graph):
    te = enumerate_torus(honeycomb_graph, 1)
    assert te.n_matchings == 3
    assert te.marginals["a"] == Fraction(1, 3)


def test_enumerate_torus_translation_invariance(uniform_graph):
    te = enumerate_torus(uniform_graph, 3)
    for eid in ("a", "b", "c", "d"):
        counts = {off: c for (e, off), c in te.instance_counts.items()
                  if e == eid}
        assert len(set(counts.values())) == 1
