"""Meta-path and meta-graph relevance: instance counting, PathSim, GraphSim.

Instance counts are exact 64-bit integers. ``struct_count`` contracts the
meta-graph pattern against the graph's relation matrices by eliminating
meta-nodes one at a time: a meta-node on a simple chain segment becomes a
sparse matrix product, edges running between the same pair of meta-nodes
combine by an element-wise product, and anything else falls back to a
dense ``einsum``. For the DBLP meta-graph ``A-P-{V,T}-P-A`` this gives
``W_AP @ ((W_PV @ W_VP) * (W_PT @ W_TP)) @ W_PA``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp

from .errors import CountOverflowError, MetaGraphError, SizeGuardError
from .graph import TypedGraph
from .metagraph import MetaGraph, MetaPath, is_symmetric
from .tensor import load_block, save_block

__all__ = [
    "CountMatrix",
    "SimilarityMatrix",
    "commuting_count",
    "struct_count",
    "enumerate_instances",
    "enumerate_all_instances",
    "normalize_counts",
    "pathsim",
    "graphsim",
    "structcount_similarity",
    "load_similarity",
    "DEFAULT_MAX_NODES",
    "ORACLE_MAX_NODES",
]

DEFAULT_MAX_NODES = 20_000
ORACLE_MAX_NODES = 200
_LIMIT = 2**62
_DENSE_LIMIT = 50_000_000


@dataclass(frozen=True)
class CountMatrix:
    """Exact instance counts between source-type and target-type nodes."""

    counts: np.ndarray
    row_ids: tuple
    col_ids: tuple
    provenance: str = ""

    @property
    def shape(self) -> tuple:
        return self.counts.shape

    def __getitem__(self, item):
        return self.counts[item]

    def entry(self, s: str, t: str) -> int:
        return int(self.counts[self.row_ids.index(s), self.col_ids.index(t)])


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense symmetric relevance scores for one node type."""

    values: np.ndarray
    node_ids: tuple
    measure: str
    provenance: str = ""

    @property
    def size(self) -> int:
        return len(self.node_ids)

    def to_tsv(self, path, include_zeros: bool = False) -> Path:
        """Write ``row_id<TAB>col_id<TAB>value`` lines (non-zero entries by default)."""
        path = Path(path)
        ids = self.node_ids
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# measure={self.measure} provenance={self.provenance}\n")
            rows, cols = (
                np.indices(self.values.shape).reshape(2, -1)
                if include_zeros
                else np.nonzero(self.values)
            )
            for i, j in zip(rows, cols):
                fh.write(f"{ids[i]}\t{ids[j]}\t{self.values[i, j]:.17g}\n")
        return path

    def save(self, path) -> Path:
        return save_block(
            path,
            self.values,
            kind="similarity",
            measure=self.measure,
            provenance=self.provenance,
            ordering=list(self.node_ids),
        )


def load_similarity(path) -> SimilarityMatrix:
    values, header = load_block(path)
    return SimilarityMatrix(values, tuple(header["ordering"]), header.get("measure", ""), header.get("provenance", ""))


# -- checked integer arithmetic ----------------------------------------


def _max(m) -> int:
    if sp.issparse(m):
        return int(m.data.max()) if m.nnz else 0
    return int(m.max()) if m.size else 0


def _row_sum_max(m) -> int:
    if m.shape[0] == 0 or m.shape[1] == 0:
        return 0
    return int(np.asarray(m.sum(axis=1, dtype=np.float64)).max())


def _overflow(what: str):
    return CountOverflowError(f"instance counts exceed the 64-bit range during {what}")


def _matmul(a, b):
    if _row_sum_max(a) * _max(b) >= _LIMIT:
        fa = a.astype(np.float64)
        fb = b.astype(np.float64)
        if _max(fa @ fb) >= _LIMIT:
            raise _overflow("matrix product")
    out = a @ b
    return out.tocsr() if sp.issparse(out) else np.asarray(out)


def _hadamard(a, b):
    if _max(a) * _max(b) >= _LIMIT:
        raise _overflow("element-wise product")
    if sp.issparse(a):
        return sp.csr_matrix(a.multiply(b))
    if sp.issparse(b):
        return sp.csr_matrix(b.multiply(a))
    return a * b


def _scale(m, vec, axis: int):
    """Multiply rows (axis 0) or columns (axis 1) of ``m`` by ``vec``."""
    if _max(m) * (int(vec.max()) if vec.size else 0) >= _LIMIT:
        raise _overflow("scaling")
    d = sp.diags(vec)
    if axis == 0:
        out = d @ m
    else:
        out = m @ d
    return out.tocsr() if sp.issparse(out) else np.asarray(out)


def _sum_axis(m, axis: int) -> np.ndarray:
    if m.shape[axis] and float(np.asarray(m.sum(axis=axis, dtype=np.float64)).max(initial=0)) >= _LIMIT:
        raise _overflow("marginalisation")
    return np.asarray(m.sum(axis=axis), dtype=np.int64).ravel()


def _mul_int(a: int, b: int) -> int:
    r = a * b
    if r >= _LIMIT:
        raise _overflow("scalar product")
    return r


# -- pattern contraction -----------------------------------------------


class _Factor:
    __slots__ = ("vars", "data")

    def __init__(self, vars_, data):
        self.vars = tuple(vars_)
        self.data = data

    def oriented(self, a, b):
        """Binary factor data with rows indexed by ``a`` and columns by ``b``."""
        if self.vars == (a, b):
            return self.data
        m = self.data.T
        return m.tocsr() if sp.issparse(m) else m


def _dense(f: _Factor) -> np.ndarray:
    return f.data.toarray() if sp.issparse(f.data) else np.asarray(f.data)


def _contract(graph: TypedGraph, mg: MetaGraph):
    types = mg.types
    sizes = {i: graph.count(t) for i, t in mg.nodes}
    factors = [
        _Factor((u, v), graph.relation(lab, types[u], types[v]).astype(np.int64))
        for u, v, lab in mg.edges
    ]
    scalar = 1
    open_vars = (mg.source, mg.target)
    order = {u: k for k, u in enumerate(mg.topological_order())}
    remaining = sorted((u for u in types if u not in open_vars), key=order.get)

    def tidy():
        nonlocal factors
        # parallel binary factors
        merged: dict[frozenset, _Factor] = {}
        rest = []
        for f in factors:
            if len(f.vars) == 2:
                key = frozenset(f.vars)
                if key in merged:
                    g = merged[key]
                    g.data = _hadamard(g.data, f.oriented(*g.vars))
                else:
                    merged[key] = f
            else:
                rest.append(f)
        factors = list(merged.values())
        # fold unary factors into a binary factor carrying the same variable
        unary = defaultdict(list)
        others = []
        for f in rest:
            (unary[f.vars[0]] if len(f.vars) == 1 else others).append(f)
        for var, fs in unary.items():
            vec = fs[0].data
            for g in fs[1:]:
                if int(vec.max(initial=0)) * int(g.data.max(initial=0)) >= _LIMIT:
                    raise _overflow("scaling")
                vec = vec * g.data
            host = next((b for b in factors if var in b.vars), None)
            if host is None:
                others.append(_Factor((var,), vec))
            else:
                host.data = _scale(host.data, vec, host.vars.index(var))
        factors = factors + others

    while True:
        tidy()
        if not remaining:
            break
        best = None
        for x in remaining:
            inv = [f for f in factors if x in f.vars]
            binary = [f for f in inv if len(f.vars) == 2]
            if len(inv) <= 1 and len(binary) == len(inv):
                cost = (0, 0)
            elif len(inv) == 2 and len(binary) == 2:
                (u,) = [w for w in binary[0].vars if w != x]
                (v,) = [w for w in binary[1].vars if w != x]
                cost = (1, sizes[u] * sizes[v])
            else:
                out_vars = {w for f in inv for w in f.vars} - {x}
                cost = (2, math.prod(sizes[w] for w in out_vars))
            if best is None or cost < best[0]:
                best = (cost, x, inv)
        _, x, inv = best
        remaining.remove(x)
        factors = [f for f in factors if x not in f.vars]
        if not inv:
            scalar = _mul_int(scalar, sizes[x])
        elif len(inv) == 1 and len(inv[0].vars) == 1:
            scalar = _mul_int(scalar, int(_sum_axis(inv[0].data[None, :], 1)[0]))
        elif len(inv) == 1:
            f = inv[0]
            keep = 0 if f.vars[1] == x else 1
            factors.append(_Factor((f.vars[keep],), _sum_axis(f.data, 1 - keep)))
        elif len(inv) == 2 and all(len(f.vars) == 2 for f in inv):
            (u,) = [w for w in inv[0].vars if w != x]
            (v,) = [w for w in inv[1].vars if w != x]
            factors.append(_Factor((u, v), _matmul(inv[0].oriented(u, x), inv[1].oriented(x, v))))
        else:
            factors.append(_einsum_eliminate(inv, x, sizes))

    s, t = open_vars
    result = None
    vec_s = vec_t = None
    for f in factors:
        if len(f.vars) == 2:
            m = f.oriented(s, t)
            result = m if result is None else _hadamard(result, m)
        elif f.vars == (s,):
            vec_s = f.data
        elif f.vars == (t,):
            vec_t = f.data
        else:  # pragma: no cover
            raise AssertionError(f"unexpected residual factor over {f.vars}")
    if result is None:
        a = vec_s if vec_s is not None else np.ones(sizes[s], dtype=np.int64)
        b = vec_t if vec_t is not None else np.ones(sizes[t], dtype=np.int64)
        result = _matmul(a[:, None], b[None, :])
    else:
        if vec_s is not None:
            result = _scale(result, vec_s, 0)
        if vec_t is not None:
            result = _scale(result, vec_t, 1)
    if scalar != 1:
        if _max(result) * scalar >= _LIMIT:
            raise _overflow("scalar product")
        result = result * scalar
    return result


def _einsum_eliminate(inv, x, sizes) -> _Factor:
    vars_ = sorted({w for f in inv for w in f.vars})
    out = [w for w in vars_ if w != x]
    size = math.prod(sizes[w] for w in out)
    if size > _DENSE_LIMIT:
        raise SizeGuardError(
            f"eliminating meta-node {x!r} needs a dense factor of {size} entries; "
            "the meta-graph is too entangled for this graph size"
        )
    letters = {w: chr(ord("a") + i) for i, w in enumerate(vars_)}
    spec = ",".join("".join(letters[w] for w in f.vars) for f in inv)
    spec += "->" + "".join(letters[w] for w in out)
    arrays = [_dense(f) for f in inv]
    approx = np.einsum(spec, *[a.astype(np.float64) for a in arrays])
    if approx.size and approx.max() >= _LIMIT:
        raise _overflow("dense contraction")
    return _Factor(tuple(out), np.einsum(spec, *arrays).astype(np.int64))


def _as_meta_graph(pattern) -> MetaGraph:
    return pattern.to_meta_graph() if isinstance(pattern, MetaPath) else pattern


def _check_size(graph: TypedGraph, mg: MetaGraph, max_nodes: int):
    for t in (mg.source_type, mg.target_type):
        if graph.count(t) > max_nodes:
            raise SizeGuardError(
                f"{graph.count(t)} nodes of type {t!r} exceed the dense-matrix limit of {max_nodes}"
            )


def _provenance(pattern) -> str:
    if isinstance(pattern, MetaPath):
        return pattern.to_text()
    return pattern.to_json()


def struct_count(
    graph: TypedGraph,
    mg: Union[MetaGraph, MetaPath],
    injective: bool = False,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> CountMatrix:
    """Number of meta-graph instances between every source/target node pair.

    With ``injective=True`` distinct meta-nodes must map to distinct graph
    nodes; that variant runs the backtracking enumerator and is limited to
    small graphs.
    """
    pattern = mg
    mg = _as_meta_graph(mg)
    mg.validate_schema(graph.schema)
    _check_size(graph, mg, max_nodes)
    rows, cols = graph.node_ids(mg.source_type), graph.node_ids(mg.target_type)
    if injective:
        counts = enumerate_all_instances(graph, mg, injective=True)
    else:
        m = _contract(graph, mg)
        counts = m.toarray() if sp.issparse(m) else np.asarray(m)
        counts = counts.astype(np.int64, copy=False)
    return CountMatrix(counts, rows, cols, _provenance(pattern))


def commuting_count(graph: TypedGraph, path: MetaPath, max_nodes: int = DEFAULT_MAX_NODES) -> CountMatrix:
    """Product of the relation matrices along ``path``."""
    path.validate(graph.schema)
    mg = path.to_meta_graph()
    _check_size(graph, mg, max_nodes)
    acc = None
    for a, lab, b in zip(path.node_types, path.edge_types, path.node_types[1:]):
        w = graph.relation(lab, a, b).astype(np.int64)
        acc = w if acc is None else _matmul(acc, w)
    counts = acc.toarray() if sp.issparse(acc) else np.asarray(acc)
    return CountMatrix(
        counts.astype(np.int64, copy=False),
        graph.node_ids(path.node_types[0]),
        graph.node_ids(path.node_types[-1]),
        path.to_text(),
    )


# -- brute-force oracle -------------------------------------------------


class _RelationIndex:
    """Edge multiplicities read straight from the edge records."""

    def __init__(self, graph: TypedGraph):
        self.schema = graph.schema
        self.fwd = defaultdict(lambda: defaultdict(lambda: defaultdict(int)))
        for e in graph.edges:
            self.fwd[e.edge_type][e.src][e.dst] += 1

    def count(self, label: str, from_type: str, x: str, y: str) -> int:
        et = self.schema.edge_type(label)
        table = self.fwd[label]
        if et.src != et.dst:
            return table[x][y] if from_type == et.src else table[y][x]
        if et.directed:
            return table[x][y]
        if x == y:
            return table[x][x]
        return table[x][y] + table[y][x]

    def neighbours(self, label: str, from_type: str, x: str) -> set:
        et = self.schema.edge_type(label)
        table = self.fwd[label]
        out = set()
        if et.src != et.dst:
            if from_type == et.src:
                out.update(y for y, c in table[x].items() if c)
            else:
                out.update(y for y in table if table[y].get(x))
        else:
            out.update(y for y, c in table[x].items() if c)
            if not et.directed:
                out.update(y for y in table if table[y].get(x))
        return out


def _guard(graph: TypedGraph, max_nodes: int):
    if graph.num_nodes > max_nodes:
        raise SizeGuardError(
            f"instance enumeration is limited to {max_nodes} nodes; graph has {graph.num_nodes}"
        )


def _enumerate(graph, mg, s, t, injective, index):
    types = mg.types
    order = [mg.source, mg.target] + [u for u in mg.topological_order() if u not in (mg.source, mg.target)]
    incident = defaultdict(list)  # meta-node -> (other, label, u_is_tail)
    for u, v, lab in mg.edges:
        incident[u].append((v, lab, True))
        incident[v].append((u, lab, False))
    assign = {}

    def weight(u, x):
        w = 1
        for other, lab, tail in incident[u]:
            if other not in assign:
                continue
            y = assign[other]
            if tail:
                c = index.count(lab, types[u], x, y)
            else:
                c = index.count(lab, types[other], y, x)
            if not c:
                return 0
            w *= c
        return w

    def candidates(u):
        for other, lab, tail in incident[u]:
            if other in assign:
                return sorted(index.neighbours(lab, types[other], assign[other]))
        return graph.node_ids(types[u])

    def rec(k):
        if k == len(order):
            return 1
        u = order[k]
        total = 0
        for x in candidates(u):
            if graph.node(x).type != types[u]:
                continue
            if injective and x in assign.values():
                continue
            w = weight(u, x)
            if not w:
                continue
            assign[u] = x
            total += w * rec(k + 1)
            del assign[u]
        return total

    if graph.node(s).type != types[mg.source] or graph.node(t).type != types[mg.target]:
        return 0
    if injective and s == t:
        return 0
    assign[mg.source] = s
    w = weight(mg.target, t)
    if not w:
        return 0
    assign[mg.target] = t
    return w * rec(2)


def enumerate_instances(
    graph: TypedGraph,
    mg: Union[MetaGraph, MetaPath],
    s: str,
    t: str,
    injective: bool = False,
    max_nodes: int = ORACLE_MAX_NODES,
) -> int:
    """Count instances from ``s`` to ``t`` by explicit backtracking.

    Each instance is an assignment of graph nodes to meta-nodes with one
    parallel edge chosen per meta-edge, so edge multiplicities multiply.
    """
    _guard(graph, max_nodes)
    mg = _as_meta_graph(mg)
    return _enumerate(graph, mg, s, t, injective, _RelationIndex(graph))


def enumerate_all_instances(
    graph: TypedGraph,
    mg: Union[MetaGraph, MetaPath],
    injective: bool = False,
    max_nodes: int = ORACLE_MAX_NODES,
) -> np.ndarray:
    _guard(graph, max_nodes)
    mg = _as_meta_graph(mg)
    index = _RelationIndex(graph)
    rows, cols = graph.node_ids(mg.source_type), graph.node_ids(mg.target_type)
    out = np.zeros((len(rows), len(cols)), dtype=np.int64)
    for i, s in enumerate(rows):
        for j, t in enumerate(cols):
            c = _enumerate(graph, mg, s, t, injective, index)
            if c >= _LIMIT:
                raise _overflow("enumeration")
            out[i, j] = c
    return out


# -- normalised measures ------------------------------------------------


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """``2 c(s,t) / (c(s,s) + c(t,t))`` with ``0/0 = 0``."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
        raise ValueError(f"normalisation needs a square count matrix, got {counts.shape}")
    if not np.array_equal(counts, counts.T):
        raise MetaGraphError(
            "instance counts are not symmetric; the pattern traverses a directed relation asymmetrically"
        )
    d = np.diag(counts).astype(np.float64)
    denom = d[:, None] + d[None, :]
    num = 2.0 * counts.astype(np.float64)
    out = np.zeros_like(num)
    np.divide(num, denom, out=out, where=denom > 0)
    if np.any(num[denom == 0] != 0):
        raise MetaGraphError("cross counts without self counts; similarity is undefined for this pattern")
    if out.size and out.max() > 1.0 + 1e-12:
        raise MetaGraphError(
            f"normalised similarity exceeds 1 (max {out.max():.6g}); the pattern is not a valid "
            "symmetric relevance structure"
        )
    return np.minimum(out, 1.0)


def pathsim(graph: TypedGraph, path: MetaPath, max_nodes: int = DEFAULT_MAX_NODES) -> SimilarityMatrix:
    if not path.symmetric:
        raise MetaGraphError(f"PathSim needs a symmetric meta-path, got {path.to_text()}")
    c = commuting_count(graph, path, max_nodes=max_nodes)
    return SimilarityMatrix(normalize_counts(c.counts), c.row_ids, "pathsim", c.provenance)


def graphsim(
    graph: TypedGraph, mg: Union[MetaGraph, MetaPath], max_nodes: int = DEFAULT_MAX_NODES
) -> SimilarityMatrix:
    if not is_symmetric(mg):
        raise MetaGraphError("GraphSim is only defined for symmetric meta-graphs")
    c = struct_count(graph, mg, max_nodes=max_nodes)
    return SimilarityMatrix(normalize_counts(c.counts), c.row_ids, "graphsim", c.provenance)


def structcount_similarity(
    graph: TypedGraph, mg: Union[MetaGraph, MetaPath], max_nodes: int = DEFAULT_MAX_NODES
) -> SimilarityMatrix:
    """Raw StructCount scores wrapped as a (non-normalised) similarity matrix."""
    c = struct_count(graph, mg, max_nodes=max_nodes)
    if c.row_ids != c.col_ids:
        raise MetaGraphError("StructCount similarity export needs matching source and target types")
    return SimilarityMatrix(c.counts.astype(np.float64), c.row_ids, "structcount", c.provenance)
