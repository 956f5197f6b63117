"""Command-line front end: ``hinmega {synth,sim,embed,eval,bench,replay}``.

Every command writes into ``<out>/<command>/`` a ``config.json`` echo of
its arguments (replayable with ``hinmega replay``), its data files, any
figures, and a ``manifest.json`` listing the files with their sha256.
Delimited results are also printed to stdout.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ctmd import CtmdConfig, read_embedding_tsv, mega, mega_pp, meta_graph_slices, ctmd, stack_similarity_tensor
from .errors import CountOverflowError, GraphParseError, HinError, SolverDivergence
from .evaluation import cluster_evaluate, knn_classify, labeled_embedding, load_labels
from .graph import TypedGraph, load_graph
from .metagraph import load_meta_graph, parse_meta_path
from .relevance import graphsim, load_similarity, pathsim, structcount_similarity
from .synth import SynthConfig, write_dataset

log = logging.getLogger("hinmega")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(HinError):
    pass


# -- helpers ------------------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _outdir(args, command: str) -> Path:
    d = Path(args.out) / command
    d.mkdir(parents=True, exist_ok=True)
    return d


def _echo_config(args, command: str, directory: Path) -> Path:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "argv")}
    cfg["command"] = command
    cfg["argv"] = list(args.argv)
    cfg["version"] = __version__
    path = directory / "config.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _manifest(directory: Path, command: str, files) -> Path:
    entries = []
    for f in files:
        f = Path(f)
        entries.append({"file": f.name, "bytes": f.stat().st_size, "sha256": _sha256(f)})
    path = directory / "manifest.json"
    path.write_text(json.dumps({"command": command, "files": entries}, indent=2) + "\n", encoding="utf-8")
    return path


def _graph(args) -> TypedGraph:
    if args.graph_dir:
        d = Path(args.graph_dir)
        schema, nodes, edges = d / "schema.json", d / "nodes.tsv", d / "edges.tsv"
    else:
        schema, nodes, edges = args.schema, args.nodes, args.edges
    if not (schema and nodes and edges):
        raise UsageError("give --graph-dir or all of --schema, --nodes, --edges")
    return load_graph(nodes, edges, schema)


def _meta_graph(args, graph: TypedGraph):
    if not args.metagraph:
        raise UsageError("--metagraph is required")
    return load_meta_graph(args.metagraph, graph.schema)


def _solver_config(args) -> CtmdConfig:
    return CtmdConfig(
        rank=args.rank,
        alpha=args.alpha,
        lam0=args.lam,
        rho=args.rho,
        lam_max=args.lam_max,
        max_iter=args.max_iter,
        tol=args.tol,
        tol_residual=args.tol_residual,
        seed=args.seed,
        init=args.init,
        n_init=args.n_init,
    )


def _plot(args, fn, *a, **kw):
    if args.no_plots:
        return None
    from . import plotting

    return getattr(plotting, fn)(*a, **kw)


# -- commands -------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = SynthConfig(
        k=args.k,
        authors_per_community=args.authors,
        papers_per_author=args.papers_per_author,
        venues_per_community=args.venues,
        topics_per_community=args.topics,
        topics_per_paper=args.topics_per_paper,
        coauthors_per_paper=args.coauthors,
        p_in=args.p_in,
        p_out=args.p_out,
        seed=args.seed,
    )
    paths = write_dataset(cfg, args.dir)
    for name, p in paths.items():
        print(f"{name}\t{p}")
    return EXIT_OK


def cmd_sim(args) -> int:
    graph = _graph(args)
    if args.measure == "pathsim":
        if not args.path:
            raise UsageError("--measure pathsim needs --path")
        sim = pathsim(graph, parse_meta_path(args.path, graph.schema))
    else:
        if args.path:
            pattern = parse_meta_path(args.path, graph.schema)
        else:
            pattern = _meta_graph(args, graph)
        fn = graphsim if args.measure == "graphsim" else structcount_similarity
        sim = fn(graph, pattern)
    out = _outdir(args, "sim")
    files = [_echo_config(args, "sim", out)]
    files.append(sim.to_tsv(out / f"{args.measure}.tsv", include_zeros=args.include_zeros))
    files.append(sim.save(out / f"{args.measure}.bin"))
    png = _plot(args, "plot_similarity", sim.values, out / f"{args.measure}.png", title=args.measure)
    if png:
        files.append(png)
    _manifest(out, "sim", files)
    nnz = int(np.count_nonzero(sim.values))
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["measure", "pattern", "nodes", "nonzero", "file"])
    w.writerow([sim.measure, args.path or args.metagraph, sim.size, nnz, files[1]])
    return EXIT_OK


def _embed(args, graph, mg):
    cfg = _solver_config(args)
    if args.method == "mega":
        return mega(graph, mg, rank=args.rank, cfg=cfg, dedupe=args.dedupe_paths)
    return mega_pp(graph, mg, rank=args.rank, alpha=args.alpha, cfg=cfg, dedupe=args.dedupe_paths)


def cmd_embed(args) -> int:
    graph = _graph(args)
    mg = _meta_graph(args, graph)
    out = _outdir(args, "embed")
    files = [_echo_config(args, "embed", out)]
    try:
        res = _embed(args, graph, mg)
    except SolverDivergence as exc:
        if exc.result is not None:
            files.append(exc.result.write_trace(out / "trace.csv"))
        _manifest(out, "embed", files)
        raise
    files.append(res.write_tsv(out / "embedding.tsv"))
    files.append(res.write_block(out / "embedding.bin"))
    files.append(res.write_trace(out / "trace.csv"))
    png = _plot(args, "plot_trace", res.objective, res.residual, out / "trace.png")
    if png:
        files.append(png)
    _manifest(out, "embed", files)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["method", "rank", "iterations", "converged", "objective", "residual", "file"])
    w.writerow([args.method, args.rank, res.iterations, res.converged,
                f"{res.objective[-1]:.10g}", f"{res.residual[-1]:.3e}", files[1]])
    return EXIT_OK


def _features(args):
    if bool(args.embedding) == bool(args.matrix):
        raise UsageError("give exactly one of --embedding or --matrix")
    if args.embedding:
        return read_embedding_tsv(args.embedding)
    sim = load_similarity(args.matrix)
    return sim.node_ids, sim.values


def cmd_eval(args) -> int:
    ids, X = _features(args)
    if args.labels:
        labels = load_labels(args.labels)
    elif args.graph_dir or args.nodes:
        graph = _graph(args)
        labels = {n.node_id: n.label for n in graph.nodes if n.label is not None}
    else:
        raise UsageError("evaluation needs --labels (or a graph whose nodes carry labels)")
    emb = labeled_embedding(ids, X, labels)
    out = _outdir(args, "eval")
    files = [_echo_config(args, "eval", out)]
    reports = []
    if args.task in ("clustering", "both"):
        reports.append(cluster_evaluate(emb, restarts=args.restarts, seed=args.seed,
                                        init=args.kmeans_init, nmi_average=args.nmi_average))
    if args.task in ("classification", "both"):
        reports.append(knn_classify(emb, k=args.neighbours, train_frac=args.train_frac,
                                    repeats=args.repeats, seed=args.seed, normalize=args.normalize))
    for rep in reports:
        files.append(rep.write_csv(out / f"{rep.task}.csv"))
        png = _plot(args, "plot_metrics", rep.mean, rep.std, out / f"{rep.task}.png", title=rep.task)
        if png:
            files.append(png)
        print(rep.table(), file=sys.stderr)
    report = out / "report.json"
    report.write_text(json.dumps([r.to_dict() for r in reports], indent=2) + "\n", encoding="utf-8")
    files.append(report)
    _manifest(out, "eval", files)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["task", "metric", "mean", "std", "trials"])
    for rep in reports:
        for m in rep.metrics:
            w.writerow([rep.task, m, f"{rep.mean[m]:.6f}", f"{rep.std[m]:.6f}", len(rep.trials)])
    return EXIT_OK


def cmd_bench(args) -> int:
    graph = _graph(args)
    mg = _meta_graph(args, graph)
    y, paths = meta_graph_slices(graph, mg, dedupe=args.dedupe_paths)
    X = stack_similarity_tensor(list(paths))
    base = _solver_config(args).replace(max_iter=args.iterations, check_convergence=False, n_init=1)
    rows = []
    for r in args.ranks:
        cfg = base.replace(rank=r)
        best = float("inf")
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            res = ctmd(X, y, cfg)
            best = min(best, time.perf_counter() - t0)
        rows.append((r, res.iterations, best))
    out = _outdir(args, "bench")
    files = [_echo_config(args, "bench", out)]
    table = out / "bench.csv"
    with table.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "iterations", "seconds"])
        for r, it, s in rows:
            w.writerow([r, it, f"{s:.6f}"])
    files.append(table)
    png = _plot(args, "plot_bench", [r[0] for r in rows], [r[2] for r in rows], out / "bench.png")
    if png:
        files.append(png)
    _manifest(out, "bench", files)
    w = csv.writer(sys.stdout, delimiter="\t", lineterminator="\n")
    w.writerow(["rank", "iterations", "seconds"])
    for r, it, s in rows:
        w.writerow([r, it, f"{s:.4f}"])
    return EXIT_OK


def cmd_replay(args) -> int:
    path = Path(args.config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if "argv" not in doc:
        raise UsageError(f"{path}: no recorded argv")
    return main(doc["argv"])


# -- parser ---------------------------------------------------------------


def _add_graph(p):
    g = p.add_argument_group("graph input")
    g.add_argument("--graph-dir", help="directory holding schema.json, nodes.tsv, edges.tsv")
    g.add_argument("--schema")
    g.add_argument("--nodes")
    g.add_argument("--edges")


def _add_common(p):
    p.add_argument("--out", default="out", help="output root (default: out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _add_solver(p):
    s = p.add_argument_group("solver")
    s.add_argument("--rank", type=int, default=5)
    s.add_argument("--alpha", type=float, default=1.6, help="coupling weight (mega++ only)")
    s.add_argument("--lambda", dest="lam", type=float, default=1e-6, help="initial penalty")
    s.add_argument("--rho", type=float, default=1.15)
    s.add_argument("--lambda-max", dest="lam_max", type=float, default=1e6)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--tol-residual", type=float, default=1e-4)
    s.add_argument("--init", choices=["normal", "scaled"], default="normal")
    s.add_argument("--n-init", type=int, default=1, help="independent starts; lowest objective wins")
    s.add_argument("--dedupe-paths", action="store_true", help="drop repeated embedded meta-paths")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hinmega", description="Meta-graph node embedding for typed graphs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-community dataset")
    p.add_argument("dir")
    d = SynthConfig()
    p.add_argument("--k", type=int, default=d.k)
    p.add_argument("--authors", type=int, default=d.authors_per_community, help="authors per community")
    p.add_argument("--papers-per-author", type=float, default=d.papers_per_author)
    p.add_argument("--venues", type=int, default=d.venues_per_community, help="venues per community")
    p.add_argument("--topics", type=int, default=d.topics_per_community, help="topics per community")
    p.add_argument("--topics-per-paper", type=int, default=d.topics_per_paper)
    p.add_argument("--coauthors", type=float, default=d.coauthors_per_paper, help="mean extra authors per paper")
    p.add_argument("--p-in", type=float, default=d.p_in)
    p.add_argument("--p-out", type=float, default=d.p_out)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sim", help="similarity matrix for a meta-path or meta-graph")
    _add_graph(p)
    _add_common(p)
    p.add_argument("--measure", choices=["pathsim", "structcount", "graphsim"], required=True)
    p.add_argument("--path", help="meta-path, e.g. A-P-V-P-A")
    p.add_argument("--metagraph", help="meta-graph JSON document")
    p.add_argument("--include-zeros", action="store_true", help="write every pair to the TSV")
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("embed", help="MEGA / MEGA++ node embedding")
    _add_graph(p)
    _add_common(p)
    p.add_argument("--metagraph", required=True)
    p.add_argument("--method", choices=["mega", "mega++"], default="mega++")
    _add_solver(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="clustering and classification of an embedding")
    _add_graph(p)
    _add_common(p)
    p.add_argument("--embedding", help="embedding TSV")
    p.add_argument("--matrix", help="similarity block file; its rows are used as features")
    p.add_argument("--labels", help="node_id<TAB>label file")
    p.add_argument("--task", choices=["clustering", "classification", "both"], default="both")
    p.add_argument("--restarts", type=int, default=100)
    p.add_argument("--kmeans-init", choices=["random", "k-means++"], default="random")
    p.add_argument("--nmi-average", choices=["arithmetic", "geometric", "max", "min"], default="arithmetic")
    p.add_argument("--neighbours", type=int, default=5)
    p.add_argument("--train-frac", type=float, default=0.8)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--normalize", choices=["l2"], default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="wall time of the coupled solver per rank")
    _add_graph(p)
    _add_common(p)
    p.add_argument("--metagraph", required=True)
    p.add_argument("--ranks", type=int, nargs="+", default=[1, 5, 10, 15])
    p.add_argument("--iterations", type=int, default=50, help="fixed iteration count per run")
    p.add_argument("--repeats", type=int, default=3, help="best-of timing repeats")
    _add_solver(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", help="rerun a command from its config.json")
    p.add_argument("config")
    p.set_defaults(func=cmd_replay)
    return ap


def _thread_limit():
    raw = os.environ.get("HINMEGA_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"HINMEGA_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("HINMEGA_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limiter = _thread_limit()
        try:
            return args.func(args)
        finally:
            if limiter is not None:
                limiter.unregister()
    except (SolverDivergence, CountOverflowError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"hinmega: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"hinmega: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except (HinError, GraphParseError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"hinmega: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
