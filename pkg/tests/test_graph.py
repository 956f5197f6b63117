import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hinmega.errors import DanglingEdgeError, GraphParseError, SchemaError
from hinmega.graph import (
    Edge,
    EdgeType,
    Node,
    Schema,
    TypedGraph,
    degree_stats,
    load_graph,
    load_schema,
    save_graph,
)
from hinmega.synth import dblp_schema

from helpers import random_dblp_graph


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


@pytest.fixture
def toy_files(tmp_path):
    schema = write(tmp_path, "schema.json", json.dumps(dblp_schema().to_dict()))
    nodes = write(tmp_path, "nodes.tsv", "# toy\na1\tA\tdb\na2\tA\np1\tP\nv1\tV\n")
    edges = write(tmp_path, "edges.tsv", "a1\tp1\twrites\na2\tp1\twrites\np1\tv1\tpublished_in\n")
    return schema, nodes, edges


def test_toy_graph_counts(toy_files):
    schema, nodes, edges = toy_files
    g = load_graph(nodes, edges, schema)
    assert g.num_nodes == 4
    assert g.num_edges == 3
    assert g.node("a1").label == "db"
    assert g.node("a2").label is None


def test_toy_adjacency_writes(toy_files):
    g = load_graph(*toy_files[1:], toy_files[0])
    adj = g.adjacency("writes")
    assert (adj.rows, adj.cols) == (2, 1)
    assert adj.entries() == [(0, 0, 1), (1, 0, 1)]
    assert adj.row_ids == ("a1", "a2")


def test_toy_degree_stats(toy_files):
    g = load_graph(*toy_files[1:], toy_files[0])
    assert degree_stats(g).avg_degree == pytest.approx(1.5)


def test_single_isolated_node_degree_zero():
    g = TypedGraph(dblp_schema(), [Node("a", "A")], [])
    assert degree_stats(g).avg_degree == 0.0


def test_empty_edges_gives_zero_adjacency(tmp_path):
    schema = write(tmp_path, "s.json", json.dumps(dblp_schema().to_dict()))
    nodes = write(tmp_path, "n.tsv", "a1\tA\np1\tP\nv1\tV\nt1\tT\n")
    edges = write(tmp_path, "e.tsv", "")
    g = load_graph(nodes, edges, schema)
    for et in g.schema.edge_types:
        assert g.adjacency(et.label).matrix.nnz == 0


def test_parallel_edges_are_multiplicities():
    g = TypedGraph(dblp_schema(), [Node("a", "A"), Node("p", "P")], [Edge("a", "p", "writes")] * 2)
    assert g.adjacency("writes").entries() == [(0, 0, 2)]
    g1 = TypedGraph(dblp_schema(), [Node("a", "A"), Node("p", "P")], [Edge("a", "p", "writes")])
    assert g1.adjacency("writes").entries() == [(0, 0, 1)]


def test_multiplicity_off_collapses_duplicates(tmp_path):
    schema = write(tmp_path, "s.json", json.dumps(dblp_schema().to_dict()))
    nodes = write(tmp_path, "n.tsv", "a\tA\np\tP\n")
    edges = write(tmp_path, "e.tsv", "a\tp\twrites\na\tp\twrites\n")
    assert load_graph(nodes, edges, schema).adjacency("writes").entries() == [(0, 0, 2)]
    assert load_graph(nodes, edges, schema, multiplicity=False).adjacency("writes").entries() == [(0, 0, 1)]


def test_reverse_orientation_of_undirected_edge_is_accepted():
    g = TypedGraph(dblp_schema(), [Node("a", "A"), Node("p", "P")], [Edge("p", "a", "writes")])
    assert g.adjacency("writes").entries() == [(0, 0, 1)]
    assert g.relation("writes", "P", "A").toarray().tolist() == [[1]]


def test_undirected_same_type_expansion_is_symmetric():
    schema = Schema(["A"], [EdgeType("knows", "A", "A")])
    nodes = [Node(x, "A") for x in "abc"]
    g = TypedGraph(schema, nodes, [Edge("a", "b", "knows"), Edge("c", "c", "knows"), Edge("b", "a", "knows")])
    W = g.adjacency("knows").toarray()
    assert np.array_equal(W, W.T)
    # a-b twice (one per orientation), the self loop once
    assert W.tolist() == [[0, 2, 0], [2, 0, 0], [0, 0, 1]]


def test_directed_edge_type_not_symmetrised():
    schema = Schema(["A"], [EdgeType("cites", "A", "A", directed=True)])
    g = TypedGraph(schema, [Node("a", "A"), Node("b", "A")], [Edge("a", "b", "cites")])
    assert g.adjacency("cites").toarray().tolist() == [[0, 1], [0, 0]]


def test_canonical_order_is_sorted_ids():
    g = TypedGraph(dblp_schema(), [Node("a9", "A"), Node("a10", "A"), Node("a1", "A")], [])
    assert g.node_ids("A") == ("a1", "a10", "a9")


@pytest.mark.parametrize(
    "nodes, edges, exc, fragment",
    [
        ("a\tA\nbad-line\n", "", GraphParseError, ":2:"),
        ("a\tX\n", "", SchemaError, "X"),
        ("a\tA\n", "a\tp\twrites\n", DanglingEdgeError, "p"),
        ("a\tA\na\tA\n", "", GraphParseError, "duplicate"),
        ("a\tA\np\tP\n", "a\tp\n", GraphParseError, ":1:"),
        ("a\tA\nv\tV\n", "a\tv\twrites\n", SchemaError, "writes"),
        ("a\tA\np\tP\n", "a\tp\tnope\n", SchemaError, "nope"),
    ],
)
def test_load_errors(tmp_path, nodes, edges, exc, fragment):
    schema = write(tmp_path, "s.json", json.dumps(dblp_schema().to_dict()))
    n = write(tmp_path, "n.tsv", nodes)
    e = write(tmp_path, "e.tsv", edges)
    with pytest.raises(exc) as info:
        load_graph(n, e, schema)
    assert fragment in str(info.value)


@pytest.mark.parametrize(
    "doc",
    [
        {"node_types": ["A", "A"], "edge_types": []},
        {"node_types": ["A", ""], "edge_types": []},
        {"node_types": ["A"], "edge_types": [{"label": "x", "src": "A", "dst": "B", "directed": False}]},
    ],
)
def test_schema_invariants(doc):
    with pytest.raises(SchemaError):
        Schema.from_dict(doc)


def test_schema_file_round_trip(tmp_path):
    p = write(tmp_path, "s.json", json.dumps(dblp_schema().to_dict()))
    assert load_schema(p).to_dict() == dblp_schema().to_dict()


def test_unknown_edge_type_adjacency():
    g = TypedGraph(dblp_schema(), [Node("a", "A")], [])
    with pytest.raises(SchemaError):
        g.adjacency("cites")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_save_load_round_trip(tmp_path_factory, seed):
    g = random_dblp_graph(np.random.default_rng(seed), max_nodes=20)
    d = tmp_path_factory.mktemp("rt")
    paths = save_graph(g, d)
    h = load_graph(paths["nodes"], paths["edges"], paths["schema"])
    for t in g.schema.node_types:
        assert g.node_ids(t) == h.node_ids(t)
    for et in g.schema.edge_types:
        assert g.adjacency(et.label).entries() == h.adjacency(et.label).entries()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_adjacency_total_equals_edge_records(seed):
    g = random_dblp_graph(np.random.default_rng(seed))
    for et in g.schema.edge_types:
        records = sum(1 for e in g.edges if e.edge_type == et.label)
        assert int(g.adjacency(et.label).matrix.sum()) == records
