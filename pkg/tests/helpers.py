"""Random inputs and brute-force oracles shared by the test modules.

The oracles here deliberately avoid the package's own counting code: they
read edge records directly and enumerate every assignment.
"""

from __future__ import annotations

import itertools
from collections import Counter

import numpy as np

from hinmega.graph import Edge, Node, TypedGraph
from hinmega.metagraph import MetaGraph
from hinmega.synth import dblp_schema

LABEL_BETWEEN = {
    frozenset(("A", "P")): "writes",
    frozenset(("P", "V")): "published_in",
    frozenset(("P", "T")): "has_topic",
}
ORIENT = {"writes": ("A", "P"), "published_in": ("P", "V"), "has_topic": ("P", "T")}


def random_dblp_graph(rng: np.random.Generator, max_nodes: int = 30, parallel: bool = True) -> TypedGraph:
    """A random graph on the bibliographic schema with at least one node per type."""
    n = int(rng.integers(4, max_nodes + 1))
    counts = {t: 1 for t in "APVT"}
    for _ in range(n - 4):
        counts["APVT"[int(rng.choice(4, p=[0.3, 0.4, 0.15, 0.15]))]] += 1
    nodes = [Node(f"{t.lower()}{i}", t) for t in "APVT" for i in range(counts[t])]
    edges = []
    density = float(rng.uniform(0.15, 0.6))
    for label, (a, b) in ORIENT.items():
        for i in range(counts[a]):
            for j in range(counts[b]):
                if rng.random() < density:
                    mult = int(rng.integers(1, 3)) if parallel and rng.random() < 0.15 else 1
                    edges.extend([Edge(f"{a.lower()}{i}", f"{b.lower()}{j}", label)] * mult)
    order = rng.permutation(len(edges))
    return TypedGraph(dblp_schema(), nodes, [edges[i] for i in order])


def random_symmetric_meta_graph(rng: np.random.Generator, max_nodes: int = 7) -> MetaGraph:
    """Mirror a random layered half-DAG about a middle layer.

    Layers alternate between paper and non-paper types, which is the only
    adjacency this schema allows.
    """
    while True:
        src_type = str(rng.choice(["A", "V", "T"]))
        depth = int(rng.integers(1, 4))
        layers = [[src_type]]
        for d in range(depth):
            size = int(rng.integers(1, 3))
            if layers[-1][0] == "P":
                layers.append([str(rng.choice(["A", "V", "T"])) for _ in range(size)])
            else:
                layers.append(["P"] * size)
        total = 2 * sum(len(l) for l in layers[:-1]) + len(layers[-1])
        if total > max_nodes:
            continue
        # edges between consecutive left layers: every node gets a predecessor and a successor
        ids = [[f"L{d}_{i}" for i in range(len(l))] for d, l in enumerate(layers)]
        links = []
        for d in range(depth):
            up, down = ids[d], ids[d + 1]
            pairs = set()
            for j in range(len(down)):
                pairs.add((int(rng.integers(len(up))), j))
            for i in range(len(up)):
                if not any(p[0] == i for p in pairs):
                    pairs.add((i, int(rng.integers(len(down)))))
            for i in range(len(up)):
                for j in range(len(down)):
                    if rng.random() < 0.3:
                        pairs.add((i, j))
            links.append(sorted(pairs))
        nodes = []
        types = {}
        for d, l in enumerate(layers):
            for i, t in enumerate(l):
                types[ids[d][i]] = t
                if d < depth:
                    types[f"R{d}_{i}"] = t
        edges = []
        for d in range(depth):
            for i, j in links[d]:
                u, v = ids[d][i], ids[d + 1][j]
                lab = LABEL_BETWEEN[frozenset((types[u], types[v]))]
                edges.append((u, v, lab))
                # mirrored half runs from the middle layer to the target
                ru = ids[d + 1][j] if d + 1 == depth else f"R{d + 1}_{j}"
                rv = f"R{d}_{i}"
                edges.append((ru, rv, lab))
        nodes = [(k, t) for k, t in types.items()]
        try:
            return MetaGraph(nodes=nodes, edges=sorted(set(edges)), source="L0_0", target="R0_0")
        except Exception:
            continue


def brute_force_counts(graph: TypedGraph, mg: MetaGraph, injective: bool = False) -> np.ndarray:
    """Instance counts by trying every type-respecting assignment.

    Only for tiny graphs: the cost is the product of the candidate set sizes.
    """
    mult = Counter()
    for e in graph.edges:
        et = graph.schema.edge_type(e.edge_type)
        mult[(e.src, e.dst, e.edge_type)] += 1
        if not et.directed and (e.dst, e.src, e.edge_type) != (e.src, e.dst, e.edge_type):
            mult[(e.dst, e.src, e.edge_type)] += 1
    metas = [m for m, _ in mg.nodes]
    tmap = dict(mg.nodes)
    rows = graph.node_ids(tmap[mg.source])
    cols = graph.node_ids(tmap[mg.target])
    ri = {n: i for i, n in enumerate(rows)}
    ci = {n: i for i, n in enumerate(cols)}
    out = np.zeros((len(rows), len(cols)), dtype=np.int64)
    pools = [graph.node_ids(tmap[m]) for m in metas]
    for combo in itertools.product(*pools):
        if injective and len(set(combo)) != len(combo):
            continue
        a = dict(zip(metas, combo))
        w = 1
        for u, v, lab in mg.edges:
            w *= mult[(a[u], a[v], lab)]
            if not w:
                break
        if w:
            out[ri[a[mg.source]], ci[a[mg.target]]] += w
    return out


def all_dag_paths(succ: dict, src, tgt) -> list:
    """Every src-to-tgt path of a DAG given as an adjacency dict."""
    if src == tgt:
        return [[tgt]]
    return [[src] + rest for v in sorted(succ.get(src, ())) for rest in all_dag_paths(succ, v, tgt)]


def author_example_graph() -> TypedGraph:
    """Authors a1, a2, a3 where a1's four papers are all with a2 and a3 has
    five papers with a2 and five without."""
    nodes = [Node(a, "A") for a in ("a1", "a2", "a3")]
    edges = []
    pid = 0
    for _ in range(4):
        p = f"p{pid:02d}"
        pid += 1
        nodes.append(Node(p, "P"))
        edges += [Edge("a1", p, "writes"), Edge("a2", p, "writes")]
    for k in range(10):
        p = f"p{pid:02d}"
        pid += 1
        nodes.append(Node(p, "P"))
        edges.append(Edge("a3", p, "writes"))
        if k < 5:
            edges.append(Edge("a2", p, "writes"))
    return TypedGraph(dblp_schema(), nodes, edges)
