import numpy as np
import pytest

from hinmega.ctmd import meta_graph_slices
from hinmega.errors import HinError
from hinmega.evaluation import kmeans, nmi
from hinmega.graph import load_graph
from hinmega.metagraph import load_meta_graph
from hinmega.relevance import graphsim
from hinmega.synth import SynthConfig, dblp_meta_graph, generate, write_dataset


def test_default_shape():
    g, labels = generate(SynthConfig())
    assert g.count("A") == 200 and g.count("V") == 20 and g.count("T") == 80
    assert set(labels[a] for a in g.node_ids("A")) == {"0", "1", "2", "3"}
    assert all(g.node(v).label is not None for v in g.node_ids("V"))
    assert all(g.node(p).label is None for p in g.node_ids("P"))


def test_p_out_zero_disconnects_communities():
    g, labels = generate(SynthConfig(p_out=0.0, authors_per_community=10, seed=2))
    for e in g.edges:
        assert labels[e.src] == labels[e.dst]
    s = graphsim(g, dblp_meta_graph())
    L = np.array([labels[a] for a in s.node_ids])
    assert not s.values[L[:, None] != L[None, :]].any()


def test_no_signal_gives_near_zero_nmi():
    scores = []
    for seed in range(3):
        g, labels = generate(SynthConfig(p_in=0.3, p_out=0.3, seed=seed))
        y, _ = meta_graph_slices(g, dblp_meta_graph())
        scores.append(nmi([labels[a] for a in y.node_ids], kmeans(y.values, 4, restarts=10, seed=seed).labels))
    assert np.mean(scores) < 0.05


def test_same_seed_byte_identical(tmp_path):
    cfg = SynthConfig(authors_per_community=8, seed=5)
    a = write_dataset(cfg, tmp_path / "a")
    b = write_dataset(cfg, tmp_path / "b")
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = write_dataset(cfg.with_(seed=6), tmp_path / "c")
    assert c["edges"].read_bytes() != a["edges"].read_bytes()


def test_written_files_validate(tmp_path):
    paths = write_dataset(SynthConfig(authors_per_community=8, seed=1), tmp_path)
    g = load_graph(paths["nodes"], paths["edges"], paths["schema"])
    ref, labels = generate(SynthConfig(authors_per_community=8, seed=1))
    assert g.num_nodes == ref.num_nodes and g.num_edges == ref.num_edges
    mg = load_meta_graph(paths["metagraph"], g.schema)
    assert mg.to_dict() == dblp_meta_graph().to_dict()
    lines = paths["labels"].read_text().splitlines()
    assert len(lines) == g.num_nodes
    assert all(labels[i] == lab for i, lab in (l.split("\t") for l in lines))


@pytest.mark.parametrize(
    "bad",
    [
        {"k": 1},
        {"p_in": 0.1, "p_out": 0.2},
        {"p_in": 1.5},
        {"authors_per_community": 0},
        {"topics_per_paper": 1000},
        {"papers_per_author": 0},
    ],
)
def test_invalid_configs(bad):
    with pytest.raises(HinError):
        SynthConfig(**bad)
