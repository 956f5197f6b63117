"""Meta-paths and meta-graphs over a HIN schema.

A meta-graph is a DAG of typed meta-nodes with a unique source and a unique
target; a meta-path is the chain special case. Meta-edges are traversal
steps: an edge ``(u, v, label)`` matches graph node pairs related by the
``label`` relation regardless of how that relation was declared.
"""

from __future__ import annotations

import heapq
import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import MetaGraphError, SchemaError
from .graph import Schema

__all__ = [
    "MetaPath",
    "MetaGraph",
    "parse_meta_path",
    "parse_meta_graph",
    "load_meta_graph",
    "embedded_meta_paths",
    "is_symmetric",
]


@dataclass(frozen=True)
class MetaPath:
    """A typed walk ``t0 -e1- t1 -e2- ... -eL- tL``.

    ``meta_nodes`` records which meta-graph nodes the path was extracted
    from; it is provenance only and does not take part in equality.
    """

    node_types: tuple
    edge_types: tuple
    meta_nodes: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "node_types", tuple(self.node_types))
        object.__setattr__(self, "edge_types", tuple(self.edge_types))
        if len(self.node_types) < 2:
            raise MetaGraphError("a meta-path needs at least one step")
        if len(self.edge_types) != len(self.node_types) - 1:
            raise MetaGraphError(
                f"{len(self.node_types)} node types need {len(self.node_types) - 1} edge labels, "
                f"got {len(self.edge_types)}"
            )

    @property
    def length(self) -> int:
        return len(self.edge_types)

    @property
    def symmetric(self) -> bool:
        return (
            self.node_types == self.node_types[::-1]
            and self.edge_types == self.edge_types[::-1]
        )

    @property
    def name(self) -> str:
        """Compact name such as ``APVPA`` (types joined with ``-`` if multi-character)."""
        if all(len(t) == 1 for t in self.node_types):
            return "".join(self.node_types)
        return "-".join(self.node_types)

    def to_text(self) -> str:
        parts = [self.node_types[0]]
        for lab, t in zip(self.edge_types, self.node_types[1:]):
            parts.append(f"[{lab}]")
            parts.append(t)
        return "-".join(parts)

    def validate(self, schema: Schema) -> None:
        for t in self.node_types:
            if t not in schema.node_types:
                raise SchemaError(f"meta-path uses unknown node type {t!r}")
        for a, lab, b in zip(self.node_types, self.edge_types, self.node_types[1:]):
            et = schema.edge_type(lab)
            if not et.connects(a, b):
                raise SchemaError(f"edge type {lab!r} ({et.src}-{et.dst}) cannot join {a} and {b}")

    def to_meta_graph(self) -> "MetaGraph":
        ids = [f"n{i}" for i in range(len(self.node_types))]
        return MetaGraph(
            nodes=tuple(zip(ids, self.node_types)),
            edges=tuple((ids[i], ids[i + 1], lab) for i, lab in enumerate(self.edge_types)),
            source=ids[0],
            target=ids[-1],
        )

    def __str__(self) -> str:
        return self.name


def parse_meta_path(text: str, schema: Schema) -> MetaPath:
    """Parse ``A-P-V-P-A`` or the annotated ``A-[writes]-P-...`` form.

    Unannotated steps take the single edge type joining the two node
    types; a step with zero or several candidates is an error.
    """
    tokens = [tok.strip() for tok in text.strip().split("-")]
    if any(not tok for tok in tokens):
        raise MetaGraphError(f"malformed meta-path {text!r}")
    types: list[str] = []
    labels: list[Optional[str]] = []
    pending: Optional[str] = None
    for tok in tokens:
        m = re.fullmatch(r"\[(.+)\]", tok)
        if m:
            if not types or pending is not None:
                raise MetaGraphError(f"misplaced edge annotation {tok!r} in {text!r}")
            pending = m.group(1)
            continue
        if types:
            labels.append(pending)
        pending = None
        types.append(tok)
    if pending is not None:
        raise MetaGraphError(f"meta-path {text!r} ends with an edge annotation")
    for t in types:
        if t not in schema.node_types:
            raise SchemaError(f"unknown node type {t!r} in meta-path {text!r}")
    resolved = []
    for a, lab, b in zip(types, labels, types[1:]):
        if lab is None:
            cands = schema.edge_types_between(a, b)
            if not cands:
                raise SchemaError(f"no edge type joins {a} and {b} (meta-path {text!r})")
            if len(cands) > 1:
                raise SchemaError(
                    f"ambiguous step {a}-{b}: candidates {[c.label for c in cands]}; "
                    f"annotate as {a}-[label]-{b}"
                )
            lab = cands[0].label
        resolved.append(lab)
    path = MetaPath(tuple(types), tuple(resolved))
    path.validate(schema)
    return path


@dataclass(frozen=True)
class MetaGraph:
    """Single-source/single-target DAG over node types.

    Parameters
    ----------
    nodes : sequence of (id, type)
    edges : sequence of (src_id, dst_id, edge_label)
    source, target : str
        Meta-node ids of the unique in-degree-0 and out-degree-0 nodes.
    schema : Schema, optional
        If given, edge labels are checked against it.
    """

    nodes: tuple
    edges: tuple
    source: str
    target: str

    def __init__(self, nodes, edges, source, target, schema: Optional[Schema] = None):
        object.__setattr__(self, "nodes", tuple((str(i), str(t)) for i, t in nodes))
        object.__setattr__(self, "edges", tuple((str(u), str(v), str(l)) for u, v, l in edges))
        object.__setattr__(self, "source", str(source))
        object.__setattr__(self, "target", str(target))
        self._validate()
        if schema is not None:
            self.validate_schema(schema)

    # -- structure -------------------------------------------------------

    @property
    def types(self) -> dict:
        return dict(self.nodes)

    def type_of(self, node_id: str) -> str:
        return self.types[node_id]

    def successors(self, u: str) -> list:
        return sorted((v, l) for a, v, l in self.edges if a == u)

    def predecessors(self, v: str) -> list:
        return sorted((u, l) for u, b, l in self.edges if b == v)

    def topological_order(self) -> list:
        indeg = Counter({i: 0 for i, _ in self.nodes})
        for _, v, _ in self.edges:
            indeg[v] += 1
        heap = [i for i, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for v, _ in self.successors(u):
                indeg[v] -= 1
                if indeg[v] == 0:
                    heapq.heappush(heap, v)
        return order

    def _validate(self) -> None:
        ids = [i for i, _ in self.nodes]
        if len(set(ids)) != len(ids):
            raise MetaGraphError(f"duplicate meta-node ids: {[i for i, c in Counter(ids).items() if c > 1]}")
        if len(ids) < 2:
            raise MetaGraphError("a meta-graph needs at least two meta-nodes")
        for i, t in self.nodes:
            if not i or not t:
                raise MetaGraphError("meta-node ids and types must be non-empty")
        known = set(ids)
        for u, v, l in self.edges:
            if u not in known or v not in known:
                raise MetaGraphError(f"meta-edge ({u}, {v}, {l}) references an unknown meta-node")
            if u == v:
                raise MetaGraphError(f"self-loop on meta-node {u!r}")
        dup = [e for e, c in Counter(self.edges).items() if c > 1]
        if dup:
            raise MetaGraphError(f"duplicate meta-edges: {dup}")
        if self.source not in known or self.target not in known:
            raise MetaGraphError("source/target must be declared meta-nodes")
        if self.source == self.target:
            raise MetaGraphError("source and target must differ")

        if len(self.topological_order()) != len(ids):
            raise MetaGraphError("meta-graph contains a cycle")

        indeg = Counter(v for _, v, _ in self.edges)
        outdeg = Counter(u for u, _, _ in self.edges)
        sources = sorted(i for i in ids if indeg[i] == 0)
        sinks = sorted(i for i in ids if outdeg[i] == 0)
        if sources != [self.source]:
            raise MetaGraphError(
                f"meta-graph must have exactly one in-degree-0 node ({self.source!r}); found {sources}"
            )
        if sinks != [self.target]:
            raise MetaGraphError(
                f"meta-graph must have exactly one out-degree-0 node ({self.target!r}); found {sinks}"
            )

        fwd, bwd = defaultdict(set), defaultdict(set)
        for u, v, _ in self.edges:
            fwd[u].add(v)
            bwd[v].add(u)

        def reach(start, nbrs):
            seen, stack = {start}, [start]
            while stack:
                for w in nbrs[stack.pop()]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            return seen

        on_path = reach(self.source, fwd) & reach(self.target, bwd)
        missing = sorted(known - on_path)
        if missing:
            raise MetaGraphError(f"meta-nodes not on any source-target path: {missing}")

    def validate_schema(self, schema: Schema) -> None:
        types = self.types
        for i, t in self.nodes:
            if t not in schema.node_types:
                raise SchemaError(f"meta-node {i!r} has unknown type {t!r}")
        for u, v, l in self.edges:
            et = schema.edge_type(l)
            if not et.connects(types[u], types[v]):
                raise SchemaError(
                    f"meta-edge ({u}, {v}) labelled {l!r} ({et.src}-{et.dst}) cannot join "
                    f"{types[u]} and {types[v]}"
                )

    @property
    def source_type(self) -> str:
        return self.type_of(self.source)

    @property
    def target_type(self) -> str:
        return self.type_of(self.target)

    @property
    def is_chain(self) -> bool:
        return len(self.edges) == len(self.nodes) - 1 and all(
            len(self.successors(u)) <= 1 for u, _ in self.nodes
        )

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": i, "type": t} for i, t in self.nodes],
            "edges": [[u, v, l] for u, v, l in self.edges],
            "source": self.source,
            "target": self.target,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_meta_path(cls, path: MetaPath) -> "MetaGraph":
        return path.to_meta_graph()


def parse_meta_graph(doc, schema: Optional[Schema] = None) -> MetaGraph:
    """Build a :class:`MetaGraph` from a JSON string or an already-decoded dict.

    The document looks like::

        {"nodes": [{"id": "a1", "type": "A"}, ...],
         "edges": [["a1", "p1", "writes"], ...],
         "source": "a1", "target": "a2"}
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise MetaGraphError(f"invalid meta-graph JSON: {exc}") from None
    try:
        nodes = [(n["id"], n["type"]) for n in doc["nodes"]]
        edges = [tuple(e) for e in doc["edges"]]
        source, target = doc["source"], doc["target"]
    except (KeyError, TypeError) as exc:
        raise MetaGraphError(f"meta-graph document missing or malformed field: {exc}") from None
    for e in edges:
        if len(e) != 3:
            raise MetaGraphError(f"meta-edge must be [src, dst, label], got {list(e)}")
    return MetaGraph(nodes, edges, source, target, schema=schema)


def load_meta_graph(path, schema: Optional[Schema] = None) -> MetaGraph:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_meta_graph(text, schema)
    except MetaGraphError as exc:
        raise MetaGraphError(f"{path}: {exc}") from None


def embedded_meta_paths(mg: MetaGraph, dedupe: bool = False) -> list[MetaPath]:
    """All source-to-target paths of ``mg``, in lexicographic meta-node order.

    Paths that coincide as type/label sequences but run through different
    meta-nodes are kept separately unless ``dedupe`` is set.
    """
    types = mg.types
    found = []

    def walk(u, nodes, labels):
        if u == mg.target:
            found.append((tuple(nodes), tuple(labels)))
            return
        for v, lab in mg.successors(u):
            nodes.append(v)
            labels.append(lab)
            walk(v, nodes, labels)
            nodes.pop()
            labels.pop()

    walk(mg.source, [mg.source], [])
    found.sort()
    paths = [MetaPath(tuple(types[n] for n in nodes), labels, meta_nodes=nodes) for nodes, labels in found]
    if dedupe:
        unique, seen = [], set()
        for p in paths:
            key = (p.node_types, p.edge_types)
            if key not in seen:
                seen.add(key)
                unique.append(p)
        paths = unique
    return paths


def is_symmetric(mg) -> bool:
    """True iff ``mg`` is isomorphic to its own reversal with source and target swapped.

    Accepts a :class:`MetaPath` as well. Backtracking search; meta-graphs are
    small enough that the worst case never matters in practice.
    """
    if isinstance(mg, MetaPath):
        return mg.symmetric
    types = mg.types
    if types[mg.source] != types[mg.target]:
        return False
    edges = Counter(mg.edges)
    ids = mg.topological_order()
    by_type = defaultdict(list)
    for i, t in mg.nodes:
        by_type[t].append(i)

    adj = defaultdict(list)
    for u, v, l in mg.edges:
        adj[u].append((v, l, True))
        adj[v].append((u, l, False))

    phi: dict[str, str] = {mg.source: mg.target, mg.target: mg.source}
    used = {mg.target, mg.source}

    def consistent(u):
        # edge (u, v, l) must map to (phi(v), phi(u), l)
        pu = phi[u]
        for w, l, outgoing in adj[u]:
            if w not in phi:
                continue
            pw = phi[w]
            if outgoing and (pw, pu, l) not in edges:
                return False
            if not outgoing and (pu, pw, l) not in edges:
                return False
        return True

    if not (consistent(mg.source) and consistent(mg.target)):
        return False
    rest = [i for i in ids if i not in phi]

    def search(k):
        if k == len(rest):
            return True
        u = rest[k]
        for cand in by_type[types[u]]:
            if cand in used:
                continue
            phi[u] = cand
            used.add(cand)
            if consistent(u) and search(k + 1):
                return True
            del phi[u]
            used.discard(cand)
        return False

    if not search(0):
        return False
    # bijection preserving edges one way; equal edge counts make it an isomorphism
    return True
