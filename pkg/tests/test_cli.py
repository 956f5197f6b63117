import json

import numpy as np
import pytest

from hinmega import cli
from hinmega.ctmd import CtmdConfig, EmbeddingResult
from hinmega.errors import SolverDivergence
from hinmega.graph import load_graph
from hinmega.metagraph import load_meta_graph
from hinmega.relevance import enumerate_instances, load_similarity


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    argv = ["synth", str(d), "--authors", "5", "--venues", "2", "--topics", "3", "--seed", "1"]
    assert cli.main(argv) == 0
    return d


@pytest.fixture(scope="module")
def default_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("default")
    assert cli.main(["synth", str(d)]) == 0
    return d


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_sim_graphsim_spot_check(data, tmp_path, capsys):
    code, out, _ = run(capsys, "sim", "--graph-dir", data, "--measure", "graphsim",
                       "--metagraph", data / "metagraph.json", "--out", tmp_path, "--no-plots")
    assert code == 0
    assert out.splitlines()[0].split("\t")[0] == "measure"
    s = load_similarity(tmp_path / "sim" / "graphsim.bin")
    assert np.array_equal(s.values, s.values.T)
    g = load_graph(data / "nodes.tsv", data / "edges.tsv", data / "schema.json")
    mg = load_meta_graph(data / "metagraph.json", g.schema)
    ids = s.node_ids
    for i, j in [(0, 1), (0, 7), (3, 3), (2, 15), (11, 19)]:
        c = enumerate_instances(g, mg, ids[i], ids[j])
        den = enumerate_instances(g, mg, ids[i], ids[i]) + enumerate_instances(g, mg, ids[j], ids[j])
        assert s.values[i, j] == pytest.approx(0.0 if den == 0 else 2 * c / den, abs=1e-15)
    manifest = json.loads((tmp_path / "sim" / "manifest.json").read_text())
    assert {f["file"] for f in manifest["files"]} == {"config.json", "graphsim.tsv", "graphsim.bin"}


def test_sim_pathsim_tsv(data, tmp_path, capsys):
    code, _, _ = run(capsys, "sim", "--graph-dir", data, "--measure", "pathsim", "--path", "A-P-A",
                     "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "sim" / "pathsim.tsv").read_text().splitlines()
    assert lines[0].startswith("#")
    row = lines[1].split("\t")
    assert len(row) == 3 and 0.0 <= float(row[2]) <= 1.0
    assert (tmp_path / "sim" / "pathsim.png").stat().st_size > 0


def test_structcount_via_explicit_paths(data, tmp_path, capsys):
    code, _, _ = run(capsys, "sim", "--schema", data / "schema.json", "--nodes", data / "nodes.tsv",
                     "--edges", data / "edges.tsv", "--measure", "structcount",
                     "--metagraph", data / "metagraph.json", "--out", tmp_path, "--no-plots")
    assert code == 0
    assert load_similarity(tmp_path / "sim" / "structcount.bin").values.max() >= 1


def test_missing_meta_graph_exit_2(data, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "s.json"
    code, _, err = run(capsys, "sim", "--graph-dir", data, "--measure", "graphsim", "--metagraph", missing,
                       "--out", tmp_path)
    assert code == 2
    assert str(missing) in err


def test_bad_input_exit_2(tmp_path, capsys):
    (tmp_path / "schema.json").write_text("{not json")
    (tmp_path / "nodes.tsv").write_text("")
    (tmp_path / "edges.tsv").write_text("")
    code, _, err = run(capsys, "sim", "--graph-dir", tmp_path, "--measure", "pathsim", "--path", "A-P-A")
    assert code == 2 and "invalid JSON" in err
    code, _, _ = run(capsys, "sim", "--measure", "pathsim", "--path", "A-P-A")
    assert code == 2


def test_usage_error_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["embed", "--method", "nope"])
    assert info.value.code == 2


def test_embed_twice_identical(data, tmp_path, capsys):
    base = ["embed", "--graph-dir", data, "--metagraph", data / "metagraph.json", "--max-iter", "60", "--no-plots"]
    assert run(capsys, *base, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *base, "--out", tmp_path / "b")[0] == 0
    for name in ("embedding.tsv", "embedding.bin", "trace.csv"):
        assert (tmp_path / "a" / "embed" / name).read_bytes() == (tmp_path / "b" / "embed" / name).read_bytes()
    cfg = json.loads((tmp_path / "a" / "embed" / "config.json").read_text())
    assert cfg["rank"] == 5 and cfg["method"] == "mega++" and cfg["seed"] == 0


def test_replay_reproduces(data, tmp_path, capsys):
    argv = ["embed", "--graph-dir", data, "--metagraph", data / "metagraph.json", "--max-iter", "30",
            "--no-plots", "--out", tmp_path, "--method", "mega", "--rank", "3"]
    assert run(capsys, *argv)[0] == 0
    first = (tmp_path / "embed" / "embedding.tsv").read_bytes()
    (tmp_path / "embed" / "embedding.tsv").unlink()
    assert run(capsys, "replay", tmp_path / "embed" / "config.json")[0] == 0
    assert (tmp_path / "embed" / "embedding.tsv").read_bytes() == first


def test_embed_with_published_parameters(default_data, tmp_path, capsys):
    code, out, _ = run(capsys, "embed", "--graph-dir", default_data, "--metagraph", default_data / "metagraph.json",
                       "--method", "mega++", "--rank", "5", "--alpha", "1.6", "--lambda", "0.6711", "--out", tmp_path)
    assert code == 0
    header, row = out.splitlines()
    rec = dict(zip(header.split("\t"), row.split("\t")))
    assert rec["rank"] == "5"
    lines = (tmp_path / "embed" / "trace.csv").read_text().splitlines()
    assert len(lines) == int(rec["iterations"]) + 1
    assert (tmp_path / "embed" / "trace.png").exists()
    width = {len(l.split("\t")) for l in (tmp_path / "embed" / "embedding.tsv").read_text().splitlines()}
    assert width == {6}


@pytest.mark.xfail(strict=True, reason="with lambda0 = 0.6711 the penalty saturates early and the objective "
                                       "creeps for about 1400 iterations, past the 500-iteration default cap")
def test_embed_with_published_parameters_converges(default_data, tmp_path, capsys):
    code, out, _ = run(capsys, "embed", "--graph-dir", default_data, "--metagraph", default_data / "metagraph.json",
                       "--alpha", "1.6", "--lambda", "0.6711", "--out", tmp_path, "--no-plots")
    header, row = out.splitlines()
    assert dict(zip(header.split("\t"), row.split("\t")))["converged"] == "True"


def test_divergence_exit_3_writes_trace(data, tmp_path, capsys, monkeypatch):
    partial = EmbeddingResult(np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((2, 1)), np.zeros((2, 1)),
                              objective=[1.0, float("inf")], residual=[0.1, 0.2], lam=[1e-6, 1.15e-6])

    def boom(*a, **k):
        raise SolverDivergence("objective became non-finite at iteration 2", partial)

    monkeypatch.setattr(cli, "mega_pp", boom)
    code, _, err = run(capsys, "embed", "--graph-dir", data, "--metagraph", data / "metagraph.json", "--out", tmp_path)
    assert code == 3 and "numerical" in err
    assert len((tmp_path / "embed" / "trace.csv").read_text().splitlines()) == 3


def write_embedding(path, ids, P):
    with open(path, "w") as fh:
        for i, row in zip(ids, P):
            fh.write(i + "\t" + "\t".join(map(str, row)) + "\n")


def test_eval_perfect_separation(tmp_path, capsys):
    ids = [f"n{i:02d}" for i in range(40)]
    P = np.repeat(np.eye(4) * 10, 10, axis=0)
    write_embedding(tmp_path / "e.tsv", ids, P)
    (tmp_path / "l.tsv").write_text("".join(f"{i}\t{k // 10}\n" for k, i in enumerate(ids)))
    code, out, err = run(capsys, "eval", "--embedding", tmp_path / "e.tsv", "--labels", tmp_path / "l.tsv",
                         "--out", tmp_path)
    assert code == 0
    rows = [l.split("\t") for l in out.splitlines()[1:]]
    got = {(r[0], r[1]): (float(r[2]), float(r[3]), int(r[4])) for r in rows}
    assert got[("clustering", "nmi")] == (1.0, 0.0, 1)
    assert got[("classification", "micro_f1")][2] == 10
    assert "+/-" in err
    cfg = json.loads((tmp_path / "eval" / "config.json").read_text())
    assert cfg["restarts"] == 100 and cfg["neighbours"] == 5 and cfg["repeats"] == 10 and cfg["train_frac"] == 0.8
    csv_lines = (tmp_path / "eval" / "classification.csv").read_text().splitlines()
    assert len(csv_lines) == 1 + 10 + 2
    assert (tmp_path / "eval" / "clustering.png").exists()


def test_eval_matrix_rows_and_graph_labels(data, tmp_path, capsys):
    assert run(capsys, "sim", "--graph-dir", data, "--measure", "graphsim", "--metagraph",
               data / "metagraph.json", "--out", tmp_path, "--no-plots")[0] == 0
    code, out, _ = run(capsys, "eval", "--matrix", tmp_path / "sim" / "graphsim.bin", "--graph-dir", data,
                       "--task", "clustering", "--restarts", "5", "--out", tmp_path, "--no-plots")
    assert code == 0 and "clustering\tnmi" in out


def test_eval_missing_labels(tmp_path, capsys):
    write_embedding(tmp_path / "e.tsv", ["a", "b"], np.eye(2))
    code, _, err = run(capsys, "eval", "--embedding", tmp_path / "e.tsv", "--out", tmp_path)
    assert code == 2 and "labels" in err


def test_bench_rows(data, tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--graph-dir", data, "--metagraph", data / "metagraph.json",
                       "--ranks", 1, 5, 10, 15, "--iterations", 5, "--repeats", 1, "--out", tmp_path)
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "rank\titerations\tseconds"
    assert [r.split("\t")[:2] for r in rows[1:]] == [["1", "5"], ["5", "5"], ["10", "5"], ["15", "5"]]
    assert (tmp_path / "bench" / "bench.png").exists()
    code, out, _ = run(capsys, "bench", "--graph-dir", data, "--metagraph", data / "metagraph.json",
                       "--ranks", 2, "--iterations", 3, "--repeats", 1, "--out", tmp_path, "--no-plots")
    assert len(out.splitlines()) == 2


def test_thread_env(data, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HINMEGA_THREADS", "1")
    assert run(capsys, "sim", "--graph-dir", data, "--measure", "pathsim", "--path", "A-P-A",
               "--out", tmp_path, "--no-plots")[0] == 0
    monkeypatch.setenv("HINMEGA_THREADS", "many")
    assert run(capsys, "sim", "--graph-dir", data, "--measure", "pathsim", "--path", "A-P-A",
               "--out", tmp_path, "--no-plots")[0] == 2


def test_plots_are_deterministic(tmp_path):
    from hinmega.plotting import plot_bench, plot_metrics, plot_similarity, plot_trace

    for k in ("a", "b"):
        plot_trace([3.0, 2.0, 1.0], [1.0, 0.1, 0.01], tmp_path / k / "t.png")
        plot_bench([1, 2, 4], [0.1, 0.2, 0.4], tmp_path / k / "b.png")
        plot_similarity(np.eye(3), tmp_path / k / "s.png", order=[2, 1, 0], title="s")
        plot_metrics({"nmi": 0.5}, {"nmi": 0.1}, tmp_path / k / "m.png")
    for name in ("t.png", "b.png", "s.png", "m.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
