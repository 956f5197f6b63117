"""Typed heterogeneous graphs: schema, file ingestion and adjacency extraction.

Nodes of each type are indexed in lexicographic ``node_id`` order; every
matrix produced downstream uses that ordering.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np
import scipy.sparse as sp

from .errors import DanglingEdgeError, GraphParseError, SchemaError

__all__ = [
    "EdgeType",
    "Schema",
    "Node",
    "Edge",
    "TypedGraph",
    "SparseAdjacency",
    "load_schema",
    "load_graph",
    "save_graph",
    "adjacency",
    "degree_stats",
]


@dataclass(frozen=True)
class EdgeType:
    label: str
    src: str
    dst: str
    directed: bool = False

    def connects(self, a: str, b: str) -> bool:
        return (self.src, self.dst) == (a, b) or (self.src, self.dst) == (b, a)


@dataclass(frozen=True)
class Schema:
    """Declared node types and edge types of a HIN.

    Parameters
    ----------
    node_types : iterable of str
        Object type labels, e.g. ``{"A", "P", "V", "T"}``.
    edge_types : iterable of EdgeType
        Relation types; each must reference declared node types and carry a
        unique label.
    """

    node_types: frozenset
    edge_types: tuple

    def __init__(self, node_types: Iterable[str], edge_types: Iterable[EdgeType]):
        node_types = list(node_types)
        edge_types = tuple(edge_types)
        for t in node_types:
            if not isinstance(t, str) or not t:
                raise SchemaError(f"node type labels must be non-empty strings, got {t!r}")
        if len(set(node_types)) != len(node_types):
            dup = [t for t, c in Counter(node_types).items() if c > 1]
            raise SchemaError(f"duplicate node type label(s): {dup}")
        labels = [et.label for et in edge_types]
        for lab in labels:
            if not isinstance(lab, str) or not lab:
                raise SchemaError(f"edge type labels must be non-empty strings, got {lab!r}")
        if len(set(labels)) != len(labels):
            dup = [t for t, c in Counter(labels).items() if c > 1]
            raise SchemaError(f"duplicate edge type label(s): {dup}")
        known = set(node_types)
        for et in edge_types:
            for end in (et.src, et.dst):
                if end not in known:
                    raise SchemaError(
                        f"edge type {et.label!r} references undeclared node type {end!r}"
                    )
        object.__setattr__(self, "node_types", frozenset(node_types))
        object.__setattr__(self, "edge_types", edge_types)

    def edge_type(self, label: str) -> EdgeType:
        for et in self.edge_types:
            if et.label == label:
                return et
        raise SchemaError(f"unknown edge type {label!r}")

    def has_edge_type(self, label: str) -> bool:
        return any(et.label == label for et in self.edge_types)

    def edge_types_between(self, a: str, b: str) -> list[EdgeType]:
        """Edge types usable for a step between node types ``a`` and ``b``."""
        return [et for et in self.edge_types if et.connects(a, b)]

    def to_dict(self) -> dict:
        return {
            "node_types": sorted(self.node_types),
            "edge_types": [
                {"label": et.label, "src": et.src, "dst": et.dst, "directed": et.directed}
                for et in self.edge_types
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Schema":
        try:
            node_types = doc["node_types"]
            raw_edges = doc["edge_types"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"schema document missing field: {exc}") from None
        edge_types = []
        for item in raw_edges:
            if isinstance(item, dict):
                try:
                    edge_types.append(
                        EdgeType(
                            item["label"], item["src"], item["dst"], bool(item.get("directed", False))
                        )
                    )
                except KeyError as exc:
                    raise SchemaError(f"edge type entry missing field {exc}: {item!r}") from None
            else:
                # list form: [label, src, dst, directed?]
                if len(item) not in (3, 4):
                    raise SchemaError(f"malformed edge type entry {item!r}")
                edge_types.append(EdgeType(item[0], item[1], item[2], bool(item[3]) if len(item) == 4 else False))
        return cls(node_types, edge_types)


def load_schema(path) -> Schema:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return Schema.from_dict(doc)


@dataclass(frozen=True)
class Node:
    node_id: str
    type: str
    label: Optional[str] = None


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    edge_type: str


@dataclass(frozen=True)
class SparseAdjacency:
    """Integer adjacency between two node types.

    ``matrix`` is a CSR matrix of edge multiplicities; row and column
    ids follow the canonical per-type ordering.
    """

    edge_type: str
    matrix: sp.csr_matrix
    row_ids: tuple
    col_ids: tuple

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def entries(self) -> list[tuple[int, int, int]]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[i]), int(coo.col[i]), int(coo.data[i])) for i in order]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


class TypedGraph:
    """Immutable multi-typed node/edge store.

    Parameters
    ----------
    schema : Schema
    nodes : iterable of Node
    edges : iterable of Edge
        Parallel edges are kept; their multiplicity becomes the adjacency
        count. Undirected edges listed against the declared orientation
        are normalised to ``(src_type, dst_type)``.
    """

    def __init__(self, schema: Schema, nodes: Iterable[Node], edges: Iterable[Edge]):
        self.schema = schema
        self._nodes: tuple = tuple(nodes)
        by_id: dict[str, Node] = {}
        for node in self._nodes:
            if node.type not in schema.node_types:
                raise SchemaError(f"node {node.node_id!r} has undeclared type {node.type!r}")
            if node.node_id in by_id:
                raise SchemaError(f"duplicate node id {node.node_id!r}")
            by_id[node.node_id] = node
        self._by_id = by_id

        per_type: dict[str, list[str]] = {t: [] for t in schema.node_types}
        for node in self._nodes:
            per_type[node.type].append(node.node_id)
        self._ids = {t: tuple(sorted(ids)) for t, ids in per_type.items()}
        self._index = {t: {nid: i for i, nid in enumerate(ids)} for t, ids in self._ids.items()}

        self._edges = tuple(self._check_edge(e) for e in edges)
        self._adj_cache: dict[str, SparseAdjacency] = {}

    def _check_edge(self, edge: Edge) -> Edge:
        et = self.schema.edge_type(edge.edge_type)
        for end in (edge.src, edge.dst):
            if end not in self._by_id:
                raise DanglingEdgeError(
                    f"edge ({edge.src}, {edge.dst}, {edge.edge_type}) references unknown node {end!r}"
                )
        ts, td = self._by_id[edge.src].type, self._by_id[edge.dst].type
        if (ts, td) == (et.src, et.dst):
            return edge
        if not et.directed and (ts, td) == (et.dst, et.src):
            return Edge(edge.dst, edge.src, edge.edge_type)
        raise SchemaError(
            f"edge ({edge.src}, {edge.dst}) of type {et.label!r} joins {ts}->{td}, "
            f"declared {et.src}->{et.dst}"
        )

    # -- accessors -------------------------------------------------------

    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def edges(self) -> tuple:
        return self._edges

    @property
    def num_nodes(self) -> int:
        return len(self._nodes)

    @property
    def num_edges(self) -> int:
        return len(self._edges)

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def node_ids(self, node_type: str) -> tuple:
        """Canonical (sorted) ids of all nodes of ``node_type``."""
        if node_type not in self._ids:
            raise SchemaError(f"unknown node type {node_type!r}")
        return self._ids[node_type]

    def index_of(self, node_type: str) -> dict:
        return self._index[node_type]

    def count(self, node_type: str) -> int:
        return len(self.node_ids(node_type))

    def labels(self, node_type: str) -> dict:
        """Class labels of the labeled nodes of ``node_type``."""
        return {
            nid: self._by_id[nid].label
            for nid in self.node_ids(node_type)
            if self._by_id[nid].label is not None
        }

    def __iter__(self) -> Iterator[Node]:
        return iter(self._nodes)

    def __repr__(self) -> str:
        return f"TypedGraph(|V|={self.num_nodes}, |E|={self.num_edges})"

    # -- matrices --------------------------------------------------------

    def adjacency(self, edge_type: str) -> SparseAdjacency:
        cached = self._adj_cache.get(edge_type)
        if cached is not None:
            return cached
        et = self.schema.edge_type(edge_type)
        ri, ci = self._index[et.src], self._index[et.dst]
        rows, cols = [], []
        for e in self._edges:
            if e.edge_type == edge_type:
                rows.append(ri[e.src])
                cols.append(ci[e.dst])
        shape = (len(ri), len(ci))
        data = np.ones(len(rows), dtype=np.int64)
        mat = sp.csr_matrix(
            (data, (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=shape,
            dtype=np.int64,
        )
        mat.sum_duplicates()
        if not et.directed and et.src == et.dst:
            # self-loops appear once in W and once in W.T
            mat = (mat + mat.T - sp.diags(mat.diagonal(), format="csr")).tocsr()
            mat.eliminate_zeros()
        mat.sort_indices()
        adj = SparseAdjacency(edge_type, mat, self._ids[et.src], self._ids[et.dst])
        self._adj_cache[edge_type] = adj
        return adj

    def relation(self, edge_type: str, from_type: str, to_type: str) -> sp.csr_matrix:
        """Adjacency of ``edge_type`` oriented from ``from_type`` to ``to_type``."""
        et = self.schema.edge_type(edge_type)
        mat = self.adjacency(edge_type).matrix
        if (from_type, to_type) == (et.src, et.dst):
            return mat
        if (from_type, to_type) == (et.dst, et.src):
            return mat.T.tocsr()
        raise SchemaError(
            f"edge type {edge_type!r} ({et.src}-{et.dst}) cannot join {from_type} and {to_type}"
        )


def adjacency(graph: TypedGraph, edge_type: str) -> SparseAdjacency:
    return graph.adjacency(edge_type)


def _read_lines(path: Path) -> Iterator[tuple[int, list[str]]]:
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line.split("\t")


def load_graph(nodes_path, edges_path, schema, multiplicity: bool = True) -> TypedGraph:
    """Read a graph from tab-separated nodes and edges files.

    Parameters
    ----------
    nodes_path, edges_path : path-like
        ``node_id<TAB>type[<TAB>label]`` and ``src<TAB>dst<TAB>edge_type``
        records; ``#`` lines are comments.
    schema : Schema or path-like
        A schema object or the path to a JSON schema document.
    multiplicity : bool
        Keep parallel edges as counts (default). When False, duplicate
        records of the same edge collapse to one.
    """
    if not isinstance(schema, Schema):
        schema = load_schema(schema)
    nodes_path, edges_path = Path(nodes_path), Path(edges_path)

    nodes = []
    seen: dict[str, int] = {}
    for lineno, parts in _read_lines(nodes_path):
        if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
            raise GraphParseError(nodes_path, lineno, "expected node_id<TAB>type[<TAB>label]")
        nid, ntype = parts[0], parts[1]
        label = parts[2] if len(parts) == 3 and parts[2] != "" else None
        if ntype not in schema.node_types:
            raise SchemaError(f"{nodes_path}:{lineno}: unknown node type {ntype!r}")
        if nid in seen:
            raise GraphParseError(nodes_path, lineno, f"duplicate node id {nid!r} (first on line {seen[nid]})")
        seen[nid] = lineno
        nodes.append(Node(nid, ntype, label))

    edges = []
    dedupe = set()
    for lineno, parts in _read_lines(edges_path):
        if len(parts) != 3 or not all(parts):
            raise GraphParseError(edges_path, lineno, "expected src<TAB>dst<TAB>edge_type")
        src, dst, etype = parts
        if not schema.has_edge_type(etype):
            raise SchemaError(f"{edges_path}:{lineno}: unknown edge type {etype!r}")
        for end in (src, dst):
            if end not in seen:
                raise DanglingEdgeError(f"{edges_path}:{lineno}: unknown node {end!r}")
        edge = Edge(src, dst, etype)
        if not multiplicity:
            et = schema.edge_type(etype)
            key = (etype, src, dst) if et.directed else (etype, *sorted((src, dst)))
            if key in dedupe:
                continue
            dedupe.add(key)
        edges.append(edge)
    try:
        return TypedGraph(schema, nodes, edges)
    except SchemaError as exc:
        raise SchemaError(f"{edges_path}: {exc}") from None


def save_graph(graph: TypedGraph, directory) -> dict:
    """Write ``schema.json``, ``nodes.tsv`` and ``edges.tsv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "schema": directory / "schema.json",
        "nodes": directory / "nodes.tsv",
        "edges": directory / "edges.tsv",
    }
    with paths["schema"].open("w", encoding="utf-8") as fh:
        json.dump(graph.schema.to_dict(), fh, indent=2)
        fh.write("\n")
    with paths["nodes"].open("w", encoding="utf-8", newline="\n") as fh:
        for n in graph.nodes:
            fh.write(f"{n.node_id}\t{n.type}" + (f"\t{n.label}" if n.label is not None else "") + "\n")
    with paths["edges"].open("w", encoding="utf-8", newline="\n") as fh:
        for e in graph.edges:
            fh.write(f"{e.src}\t{e.dst}\t{e.edge_type}\n")
    return paths


@dataclass
class DegreeStats:
    num_nodes: int
    num_edges: int
    avg_degree: float
    per_type: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "num_edges": self.num_edges,
            "avg_degree": self.avg_degree,
            "per_type": self.per_type,
        }


def degree_stats(graph: TypedGraph) -> DegreeStats:
    """Node/edge counts and average degrees, undirected interpretation."""
    deg = Counter()
    for e in graph.edges:
        deg[e.src] += 1
        deg[e.dst] += 1
    per_type = {}
    for t in sorted(graph.schema.node_types):
        ids = graph.node_ids(t)
        total = sum(deg[n] for n in ids)
        per_type[t] = {
            "count": len(ids),
            "avg_degree": total / len(ids) if ids else 0.0,
        }
    n = graph.num_nodes
    avg = 2.0 * graph.num_edges / n if n else 0.0
    return DegreeStats(n, graph.num_edges, avg, per_type)
