"""Synthetic planted-community bibliographic networks.

Generates an author/paper/venue/topic graph in which each of ``k``
communities owns a block of authors, venues and topics. Every paper is
written by one lead author; its co-authors, venue and topics are drawn with
weight ``p_in`` from the lead author's community and ``p_out`` from any
other, so ``p_out = 0`` yields disconnected blocks and ``p_in = p_out`` a
graph with no community signal.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._rng import substream
from .errors import HinError
from .graph import Edge, EdgeType, Node, Schema, TypedGraph, save_graph
from .metagraph import MetaGraph

__all__ = ["SynthConfig", "dblp_schema", "dblp_meta_graph", "venue_meta_graph", "generate", "write_dataset"]


def dblp_schema() -> Schema:
    return Schema(
        ["A", "P", "V", "T"],
        [
            EdgeType("writes", "A", "P", directed=False),
            EdgeType("published_in", "P", "V", directed=False),
            EdgeType("has_topic", "P", "T", directed=False),
        ],
    )


def dblp_meta_graph() -> MetaGraph:
    """Author meta-graph ``A-P-{V,T}-P-A``: co-venue and co-topic through the same papers."""
    return MetaGraph(
        nodes=[("a1", "A"), ("p1", "P"), ("v", "V"), ("t", "T"), ("p2", "P"), ("a2", "A")],
        edges=[
            ("a1", "p1", "writes"),
            ("p1", "v", "published_in"),
            ("p1", "t", "has_topic"),
            ("v", "p2", "published_in"),
            ("t", "p2", "has_topic"),
            ("p2", "a2", "writes"),
        ],
        source="a1",
        target="a2",
    )


def venue_meta_graph() -> MetaGraph:
    """Venue meta-graph ``V-P-{A,T}-P-V``."""
    return MetaGraph(
        nodes=[("v1", "V"), ("p1", "P"), ("a", "A"), ("t", "T"), ("p2", "P"), ("v2", "V")],
        edges=[
            ("v1", "p1", "published_in"),
            ("p1", "a", "writes"),
            ("p1", "t", "has_topic"),
            ("a", "p2", "writes"),
            ("t", "p2", "has_topic"),
            ("p2", "v2", "published_in"),
        ],
        source="v1",
        target="v2",
    )


@dataclass(frozen=True)
class SynthConfig:
    k: int = 4
    authors_per_community: int = 50
    papers_per_author: float = 3.0
    venues_per_community: int = 5
    topics_per_community: int = 20
    topics_per_paper: int = 3
    coauthors_per_paper: float = 1.0
    p_in: float = 0.9
    p_out: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.k < 2:
            raise HinError("need at least two communities")
        # p_in == p_out is allowed: it is the no-signal null model
        if not (0 <= self.p_out <= self.p_in <= 1 and self.p_in > 0):
            raise HinError(f"need 0 <= p_out <= p_in <= 1, got p_in={self.p_in}, p_out={self.p_out}")
        for name in ("authors_per_community", "venues_per_community", "topics_per_community", "topics_per_paper"):
            if getattr(self, name) < 1:
                raise HinError(f"{name} must be >= 1")
        if self.topics_per_paper > self.k * self.topics_per_community:
            raise HinError("topics_per_paper exceeds the number of topics")
        if self.papers_per_author <= 0 or self.coauthors_per_paper < 0:
            raise HinError("papers_per_author must be > 0 and coauthors_per_paper >= 0")

    def with_(self, **changes) -> "SynthConfig":
        d = asdict(self)
        d.update(changes)
        return SynthConfig(**d)


def _ids(prefix: str, n: int) -> list[str]:
    width = max(4, len(str(n)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def _weights(communities: np.ndarray, own: int, cfg: SynthConfig, exclude=None) -> np.ndarray:
    w = np.where(communities == own, cfg.p_in, cfg.p_out).astype(float)
    if exclude is not None:
        w[exclude] = 0.0
    return w


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[TypedGraph, dict]:
    """Build the graph and the ground-truth community of every node.

    Returns
    -------
    graph : TypedGraph
        Authors and venues carry their community as class label.
    labels : dict
        ``node_id -> community`` for all authors, papers, venues and topics.
    """
    rng = substream(cfg.seed, "synth")
    k = cfg.k
    authors = _ids("a", k * cfg.authors_per_community)
    venues = _ids("v", k * cfg.venues_per_community)
    topics = _ids("t", k * cfg.topics_per_community)
    a_comm = np.repeat(np.arange(k), cfg.authors_per_community)
    v_comm = np.repeat(np.arange(k), cfg.venues_per_community)
    t_comm = np.repeat(np.arange(k), cfg.topics_per_community)

    n_papers = np.maximum(rng.poisson(cfg.papers_per_author, size=len(authors)), 1)
    papers = _ids("p", int(n_papers.sum()))
    p_comm = np.repeat(a_comm, n_papers)
    leads = np.repeat(np.arange(len(authors)), n_papers)

    edges: list[Edge] = []
    for j, pid in enumerate(papers):
        c = int(p_comm[j])
        lead = int(leads[j])
        edges.append(Edge(authors[lead], pid, "writes"))
        extra = int(rng.poisson(cfg.coauthors_per_paper)) if cfg.coauthors_per_paper else 0
        if extra:
            w = _weights(a_comm, c, cfg, exclude=[lead])
            extra = min(extra, int(np.count_nonzero(w)))
            if extra:
                for i in rng.choice(len(authors), size=extra, replace=False, p=w / w.sum()):
                    edges.append(Edge(authors[int(i)], pid, "writes"))
        w = _weights(v_comm, c, cfg)
        edges.append(Edge(pid, venues[int(rng.choice(len(venues), p=w / w.sum()))], "published_in"))
        w = _weights(t_comm, c, cfg)
        n_t = min(cfg.topics_per_paper, int(np.count_nonzero(w)))
        for i in sorted(rng.choice(len(topics), size=n_t, replace=False, p=w / w.sum())):
            edges.append(Edge(pid, topics[int(i)], "has_topic"))

    labels = {}
    nodes = []
    for nid, c in zip(authors, a_comm):
        labels[nid] = str(c)
        nodes.append(Node(nid, "A", str(c)))
    for nid, c in zip(papers, p_comm):
        labels[nid] = str(c)
        nodes.append(Node(nid, "P"))
    for nid, c in zip(venues, v_comm):
        labels[nid] = str(c)
        nodes.append(Node(nid, "V", str(c)))
    for nid, c in zip(topics, t_comm):
        labels[nid] = str(c)
        nodes.append(Node(nid, "T"))
    return TypedGraph(dblp_schema(), nodes, edges), labels


def write_dataset(cfg: SynthConfig, directory) -> dict:
    """Write nodes/edges/schema files, ``labels.tsv``, both meta-graphs and the config."""
    directory = Path(directory)
    graph, labels = generate(cfg)
    paths = save_graph(graph, directory)
    paths["labels"] = directory / "labels.tsv"
    with paths["labels"].open("w", encoding="utf-8", newline="\n") as fh:
        for node in graph.nodes:
            fh.write(f"{node.node_id}\t{labels[node.node_id]}\n")
    for name, mg in (("metagraph", dblp_meta_graph()), ("metagraph_venue", venue_meta_graph())):
        paths[name] = directory / f"{name}.json"
        paths[name].write_text(json.dumps(mg.to_dict(), indent=2) + "\n", encoding="utf-8")
    paths["config"] = directory / "synth_config.json"
    paths["config"].write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths
