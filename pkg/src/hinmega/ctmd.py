"""Coupled tensor-matrix decomposition (CTMD) by ADMM, and the MEGA pipelines.

Given a partial symmetric similarity tensor ``X`` (``M x M x N``) and a
symmetric matrix ``Y`` (``M x M``), CTMD minimises::

    ||X - [[P, P, T]]||_F^2 + alpha * ||Y - P P^T||_F^2

by splitting the second ``P`` into an auxiliary ``Q`` with the constraint
``P = Q``, multiplier ``U`` and penalty ``lam``. Each sweep solves the P,
Q and T subproblems in closed form, takes a multiplier step and grows the
penalty geometrically up to ``lam_max``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._rng import substream
from .errors import MetaGraphError, SolverDivergence
from .graph import TypedGraph
from .metagraph import MetaGraph, embedded_meta_paths, is_symmetric
from .relevance import SimilarityMatrix, graphsim, pathsim
from .tensor import save_block, spd_solve

__all__ = [
    "SimilarityTensor",
    "CtmdConfig",
    "EmbeddingResult",
    "stack_similarity_tensor",
    "mttkrp",
    "update_P",
    "update_Q",
    "update_T",
    "update_U",
    "objective",
    "lagrangian",
    "ctmd",
    "mega",
    "mega_pp",
    "meta_graph_slices",
]

log = logging.getLogger(__name__)

_DIRECT_OBJECTIVE_LIMIT = 5_000_000


@dataclass(frozen=True)
class SimilarityTensor:
    """``M x M x N`` stack of symmetric similarity slices."""

    data: np.ndarray
    node_ids: tuple
    slice_names: tuple

    @property
    def shape(self) -> tuple:
        return self.data.shape


def stack_similarity_tensor(slices: Sequence[SimilarityMatrix], atol: float = 0.0) -> SimilarityTensor:
    """Concatenate similarity matrices along a third mode, in input order."""
    if not slices:
        raise ValueError("need at least one similarity slice")
    ids = slices[0].node_ids
    for k, s in enumerate(slices):
        if s.node_ids != ids:
            raise ValueError(f"slice {k} ({s.provenance}) uses a different node ordering")
        if not np.allclose(s.values, s.values.T, rtol=0.0, atol=atol):
            raise ValueError(f"slice {k} ({s.provenance}) is not symmetric")
    data = np.stack([np.asarray(s.values, dtype=float) for s in slices], axis=2)
    names = tuple(f"{s.measure}:{s.provenance}" for s in slices)
    return SimilarityTensor(data, ids, names)


@dataclass
class CtmdConfig:
    """Solver settings. Defaults follow the published schedule
    (``lam0=1e-6``, ``rho=1.15``, ``lam_max=1e6``)."""

    rank: int = 5
    alpha: float = 0.0
    lam0: float = 1e-6
    rho: float = 1.15
    lam_max: float = 1e6
    max_iter: int = 500
    tol: float = 1e-6
    tol_residual: float = 1e-4
    seed: int = 0
    init: str = "normal"
    n_init: int = 1
    check_convergence: bool = True

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not self.rho > 1:
            raise ValueError("rho must be > 1")
        if self.lam0 > self.lam_max:
            raise ValueError("lam0 must not exceed lam_max")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.init not in ("normal", "scaled"):
            raise ValueError(f"unknown init {self.init!r}")

    def replace(self, **changes) -> "CtmdConfig":
        d = asdict(self)
        d.update(changes)
        return CtmdConfig(**d)


@dataclass
class EmbeddingResult:
    P: np.ndarray
    T: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    objective: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    node_ids: tuple = ()
    slice_names: tuple = ()
    config: Optional[CtmdConfig] = None
    start: int = 0
    start_objectives: list = field(default_factory=list)

    @property
    def trace(self) -> list:
        return [
            {"iter": i + 1, "objective": o, "residual": r, "lambda": l}
            for i, (o, r, l) in enumerate(zip(self.objective, self.residual, self.lam))
        ]

    def write_tsv(self, path) -> Path:
        """``node_id<TAB>v1<TAB>...<TAB>vR`` rows."""
        path = Path(path)
        ids = self.node_ids or tuple(str(i) for i in range(self.P.shape[0]))
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for nid, row in zip(ids, self.P):
                fh.write(nid + "\t" + "\t".join(f"{x:.17g}" for x in row) + "\n")
        return path

    def write_block(self, path) -> Path:
        meta = {"kind": "embedding", "ordering": list(self.node_ids), "slices": list(self.slice_names)}
        if self.config is not None:
            meta["seed"] = self.config.seed
        return save_block(path, self.P, **meta)

    def write_trace(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iter", "objective", "residual", "lambda"])
            for row in self.trace:
                w.writerow([row["iter"], repr(row["objective"]), repr(row["residual"]), repr(row["lambda"])])
        return path


def read_embedding_tsv(path) -> tuple[tuple, np.ndarray]:
    ids, rows = [], []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            ids.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    return tuple(ids), np.array(rows, dtype=float)


# -- subproblem solutions -----------------------------------------------


def mttkrp(X: np.ndarray, A: np.ndarray, B: np.ndarray, mode: int) -> np.ndarray:
    """Unfolding of the third-order ``X`` in ``mode`` times the Khatri-Rao
    product of the two other factors (``A`` for the lower remaining mode,
    ``B`` for the higher one)."""
    if mode == 0:
        return np.einsum("ijk,jr,kr->ir", X, A, B, optimize=True)
    if mode == 1:
        return np.einsum("ijk,ir,kr->jr", X, A, B, optimize=True)
    if mode == 2:
        return np.einsum("ijk,ir,jr->kr", X, A, B, optimize=True)
    raise ValueError(f"mode must be 0, 1 or 2, got {mode}")


def _gram(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # (B kr A)^T (B kr A) == (B^T B) * (A^T A)
    return (B.T @ B) * (A.T @ A)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite input to a CTMD update")


def update_P(X, Y, Q, T, U, lam: float, alpha: float) -> np.ndarray:
    """Closed-form minimiser of the augmented Lagrangian over ``P``.

    ``P = (2 X_(1) F + 2 alpha Y Q + lam Q - U)(2 F^T F + 2 alpha Q^T Q + lam I)^-1``
    with ``F = T kr Q``.
    """
    _check_finite(Q, T, U)
    R = Q.shape[1]
    rhs = 2.0 * mttkrp(X, Q, T, 0) + lam * Q - U
    gram = 2.0 * _gram(Q, T) + lam * np.eye(R)
    if alpha:
        rhs += 2.0 * alpha * (Y @ Q)
        gram += 2.0 * alpha * (Q.T @ Q)
    return spd_solve(gram, rhs)


def update_Q(X, Y, P, T, U, lam: float, alpha: float) -> np.ndarray:
    """``Q = (2 X_(2) G + 2 alpha Y^T P + lam P + U)(2 G^T G + 2 alpha P^T P + lam I)^-1``
    with ``G = T kr P``."""
    _check_finite(P, T, U)
    R = P.shape[1]
    rhs = 2.0 * mttkrp(X, P, T, 1) + lam * P + U
    gram = 2.0 * _gram(P, T) + lam * np.eye(R)
    if alpha:
        rhs += 2.0 * alpha * (Y.T @ P)
        gram += 2.0 * alpha * (P.T @ P)
    return spd_solve(gram, rhs)


def update_T(X, P, Q) -> np.ndarray:
    """Least-squares ``T = X_(3) H (H^T H)^-1`` with ``H = Q kr P``."""
    _check_finite(P, Q)
    return spd_solve(_gram(P, Q), mttkrp(X, P, Q, 2))


def update_U(U, P, Q, lam: float) -> np.ndarray:
    return U + lam * (P - Q)


def objective(X, Y, P, T, alpha: float) -> float:
    """CTMD objective evaluated with ``P`` in both node modes."""
    M, _, N = X.shape
    if M * M * N <= _DIRECT_OBJECTIVE_LIMIT:
        recon = np.einsum("ir,jr,kr->ijk", P, P, T, optimize=True)
        fit = float(np.sum((X - recon) ** 2))
    else:
        inner = float(np.sum(mttkrp(X, P, T, 0) * P))
        fit = float(np.sum(X * X)) - 2.0 * inner + float(np.sum(_gram(P, T) * (P.T @ P)))
        fit = max(fit, 0.0)
    if alpha:
        fit += alpha * float(np.sum((Y - P @ P.T) ** 2))
    return fit


def lagrangian(X, Y, P, Q, T, U, lam: float, alpha: float) -> float:
    """Augmented Lagrangian of the split problem."""
    recon = np.einsum("ir,jr,kr->ijk", P, Q, T, optimize=True)
    val = float(np.sum((X - recon) ** 2))
    val += alpha * float(np.sum((Y - P @ Q.T) ** 2))
    val += float(np.sum(U * (P - Q))) + 0.5 * lam * float(np.sum((P - Q) ** 2))
    return val


# -- driver ---------------------------------------------------------------


def _as_array(x):
    if isinstance(x, SimilarityTensor):
        return x.data, x.node_ids, x.slice_names
    if isinstance(x, SimilarityMatrix):
        return x.values, x.node_ids, (x.provenance,)
    return np.asarray(x, dtype=float), (), ()


def ctmd(X, Y=None, cfg: Optional[CtmdConfig] = None, init: Optional[dict] = None) -> EmbeddingResult:
    """Run the ADMM iteration.

    Parameters
    ----------
    X : SimilarityTensor or ndarray, shape (M, M, N)
    Y : SimilarityMatrix or ndarray, shape (M, M), optional
        Coupled matrix; ignored (and may be omitted) when ``cfg.alpha == 0``.
    cfg : CtmdConfig
    init : dict, optional
        Explicit starting ``P``, ``Q``, ``T`` (and optionally ``U``);
        overrides the random starts.

    With ``cfg.n_init > 1`` independent seeded starts are run, each with the
    full iteration budget, and the one with the lowest final objective is
    returned.

    Returns
    -------
    EmbeddingResult

    Raises
    ------
    SolverDivergence
        If the objective becomes non-finite; the exception carries the
        partial result.
    """
    cfg = cfg or CtmdConfig()
    Xa, ids, names = _as_array(X)
    if Xa.ndim == 2:
        Xa = Xa[:, :, None]
    if Xa.ndim != 3 or Xa.shape[0] != Xa.shape[1]:
        raise ValueError(f"X must be M x M x N, got {Xa.shape}")
    M, _, N = Xa.shape
    if Y is None:
        if cfg.alpha:
            raise ValueError("alpha > 0 requires the coupled matrix Y")
        Ya = np.zeros((M, M))
    else:
        Ya, yids, _ = _as_array(Y)
        if Ya.shape != (M, M):
            raise ValueError(f"Y must be {M} x {M}, got {Ya.shape}")
        if ids and yids and tuple(yids) != tuple(ids):
            raise ValueError("X and Y use different node orderings")
    if init is not None:
        return _run(Xa, Ya, cfg, _explicit_start(init, M, cfg.rank), ids, names)
    best = None
    finals = []
    for k in range(cfg.n_init):
        res = _run(Xa, Ya, cfg, _random_start(cfg, M, N, k), ids, names)
        res.start = k
        finals.append(res.objective[-1])
        if best is None or res.objective[-1] < best.objective[-1]:
            best = res
    best.start_objectives = finals
    return best


def _explicit_start(init, M, R):
    P = np.array(init["P"], dtype=float)
    Q = np.array(init.get("Q", P), dtype=float)
    T = np.array(init["T"], dtype=float)
    U = np.array(init.get("U", np.zeros((M, R))), dtype=float)
    return P, Q, T, U


def _random_start(cfg, M, N, k):
    R = cfg.rank
    rng = substream(cfg.seed, "init" if k == 0 else f"init/{k}")
    P = rng.standard_normal((M, R))
    Q = rng.standard_normal((M, R))
    T = rng.standard_normal((N, R))
    if cfg.init == "scaled":
        P, Q, T = P / math.sqrt(R), Q / math.sqrt(R), T / math.sqrt(R)
    return P, Q, T, np.zeros((M, R))


def _run(Xa, Ya, cfg, start, ids, names) -> EmbeddingResult:
    alpha = float(cfg.alpha)
    P, Q, T, U = start
    lam = float(cfg.lam0)
    with np.errstate(over="ignore"):
        data_scale = float(np.sum(Xa * Xa)) + alpha * float(np.sum(Ya * Ya))
    floor = max(data_scale, 1.0) * 1e-14
    result = EmbeddingResult(P, T, Q, U, node_ids=tuple(ids), slice_names=tuple(names), config=cfg)
    prev = None
    for it in range(1, cfg.max_iter + 1):
        try:
            # non-finite values are caught explicitly below
            with np.errstate(over="ignore", invalid="ignore"):
                P = update_P(Xa, Ya, Q, T, U, lam, alpha)
                Q = update_Q(Xa, Ya, P, T, U, lam, alpha)
                T = update_T(Xa, P, Q)
                U = update_U(U, P, Q, lam)
                obj = objective(Xa, Ya, P, T, alpha)
        except FloatingPointError as exc:
            raise SolverDivergence(f"{exc} at iteration {it}", result) from None
        res = float(np.linalg.norm(P - Q))
        result.objective.append(obj)
        result.residual.append(res)
        result.lam.append(lam)
        result.P, result.Q, result.T, result.U = P, Q, T, U
        result.iterations = it
        if not (math.isfinite(obj) and np.all(np.isfinite(P))):
            raise SolverDivergence(f"objective became non-finite at iteration {it}", result)
        if cfg.check_convergence and prev is not None:
            rel_change = abs(prev - obj) / max(abs(prev), floor)
            rel_res = res / max(float(np.linalg.norm(P)), 1.0)
            if rel_change < cfg.tol and rel_res < cfg.tol_residual:
                result.converged = True
                break
        prev = obj
        lam = min(cfg.rho * lam, cfg.lam_max)
    log.debug("ctmd stopped after %d iterations (converged=%s)", result.iterations, result.converged)
    return result


# -- pipelines ------------------------------------------------------------


def meta_graph_slices(graph: TypedGraph, mg: MetaGraph, dedupe: bool = False, max_nodes: Optional[int] = None):
    """GraphSim matrix of ``mg`` and PathSim matrices of its embedded meta-paths."""
    if not is_symmetric(mg):
        raise MetaGraphError("MEGA needs a symmetric meta-graph")
    kw = {} if max_nodes is None else {"max_nodes": max_nodes}
    y = graphsim(graph, mg, **kw)
    paths = embedded_meta_paths(mg, dedupe=dedupe)
    return y, [pathsim(graph, p, **kw) for p in paths]


def mega(graph: TypedGraph, mg: MetaGraph, rank: int = 5, cfg: Optional[CtmdConfig] = None,
         dedupe: bool = False, slices=None) -> EmbeddingResult:
    """Tensor-only embedding over ``[GraphSim] + [PathSim of each embedded path]``."""
    cfg = (cfg or CtmdConfig()).replace(rank=rank, alpha=0.0)
    y, paths = slices if slices is not None else meta_graph_slices(graph, mg, dedupe=dedupe)
    X = stack_similarity_tensor([y] + list(paths))
    return ctmd(X, None, cfg)


def mega_pp(graph: TypedGraph, mg: MetaGraph, rank: int = 5, alpha: float = 1.0,
            cfg: Optional[CtmdConfig] = None, dedupe: bool = False, slices=None) -> EmbeddingResult:
    """Coupled embedding: PathSim slices as the tensor, GraphSim as the coupled matrix."""
    cfg = (cfg or CtmdConfig()).replace(rank=rank, alpha=alpha)
    y, paths = slices if slices is not None else meta_graph_slices(graph, mg, dedupe=dedupe)
    X = stack_similarity_tensor(list(paths))
    return ctmd(X, y, cfg)
