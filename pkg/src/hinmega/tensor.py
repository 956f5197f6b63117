"""Dense tensor algebra: outer products, unfolding, Khatri-Rao, CP-ALS.

Tensors are plain ``numpy.ndarray`` objects. Modes are 0-based.

Unfolding follows the convention under which a CP tensor
``[[A, B, C]]`` satisfies::

    unfold(X, 0) == A @ khatri_rao(C, B).T
    unfold(X, 1) == B @ khatri_rao(C, A).T
    unfold(X, 2) == C @ khatri_rao(B, A).T

i.e. the remaining indices are laid out with the lowest mode varying
fastest, and ``khatri_rao(A, B)[i * J + j] == A[i] * B[j]``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from ._rng import substream

__all__ = [
    "outer_product",
    "unfold",
    "matricize",
    "fold",
    "khatri_rao",
    "khatri_rao_except",
    "FactorSet",
    "reconstruct",
    "frobenius_error",
    "cp_objective",
    "cp_als",
    "spd_solve",
    "save_block",
    "load_block",
    "save_tensor",
    "load_tensor",
]

RIDGE = 1e-12


def outer_product(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Outer product of ``N`` vectors, an ``N``-th order tensor."""
    if len(vectors) == 0:
        raise ValueError("outer_product needs at least one vector")
    out = np.asarray(vectors[0], dtype=float).ravel()
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=float).ravel())
    return out


def unfold(tensor: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization, shape ``(I_mode, prod of the other dims)``."""
    tensor = np.asarray(tensor)
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for an order-{tensor.ndim} tensor")
    return np.reshape(np.moveaxis(tensor, mode, 0), (tensor.shape[mode], -1), order="F")


matricize = unfold


def fold(matrix: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(int(s) for s in shape)
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for an order-{len(shape)} tensor")
    full = (shape[mode],) + tuple(s for i, s in enumerate(shape) if i != mode)
    return np.moveaxis(np.reshape(matrix, full, order="F"), 0, mode)


def khatri_rao(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product, ``(I*J) x R``."""
    A, B = np.asarray(A), np.asarray(B)
    if A.ndim != 2 or B.ndim != 2:
        raise ValueError("khatri_rao expects two matrices")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    I, R = A.shape
    J = B.shape[0]
    return (A[:, None, :] * B[None, :, :]).reshape(I * J, R)


def khatri_rao_except(factors: Sequence[np.ndarray], skip: int) -> np.ndarray:
    """``X(N) kr ... kr X(skip+1) kr X(skip-1) kr ... kr X(1)``."""
    mats = [f for i, f in enumerate(factors) if i != skip][::-1]
    out = mats[0]
    for m in mats[1:]:
        out = khatri_rao(out, m)
    return out


@dataclass
class FactorSet:
    factors: list
    rel_error: float = float("nan")
    history: list = field(default_factory=list)
    iterations: int = 0

    def __post_init__(self):
        ranks = {np.shape(f)[1] for f in self.factors}
        if len(ranks) != 1:
            raise ValueError(f"factor matrices disagree on rank: {sorted(ranks)}")

    @property
    def rank(self) -> int:
        return np.shape(self.factors[0])[1]

    @property
    def shape(self) -> tuple:
        return tuple(np.shape(f)[0] for f in self.factors)


def reconstruct(factors) -> np.ndarray:
    """Sum of the ``R`` rank-one outer products."""
    if isinstance(factors, FactorSet):
        factors = factors.factors
    letters = "abcdefghijklmnopqrstuvwxy"
    n = len(factors)
    spec = ",".join(f"{letters[i]}z" for i in range(n)) + "->" + letters[:n]
    return np.einsum(spec, *factors)


def frobenius_error(tensor: np.ndarray, factors) -> float:
    recon = reconstruct(factors)
    if recon.shape != np.shape(tensor):
        raise ValueError(f"shape mismatch: tensor {np.shape(tensor)} vs factors {recon.shape}")
    return float(np.linalg.norm(np.asarray(tensor) - recon))


def cp_objective(tensor: np.ndarray, factors) -> float:
    """Squared Frobenius reconstruction error."""
    return frobenius_error(tensor, factors) ** 2


def spd_solve(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``X @ gram = rhs`` for symmetric positive definite ``gram``.

    Falls back to a ``1e-12`` ridge and then to least squares when the
    Cholesky factorisation fails.
    """
    try:
        c = scipy.linalg.cho_factor(gram, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs.T, check_finite=False).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        pass
    warnings.warn("ill-conditioned normal equations; applying ridge regularisation", RuntimeWarning, stacklevel=2)
    ridged = gram + RIDGE * np.eye(gram.shape[0])
    try:
        c = scipy.linalg.cho_factor(ridged, check_finite=False)
        return scipy.linalg.cho_solve(c, rhs.T, check_finite=False).T
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        return scipy.linalg.lstsq(ridged, rhs.T)[0].T


def cp_als(
    tensor: np.ndarray,
    rank: int,
    max_iter: int = 200,
    tol: float = 1e-14,
    seed: int = 0,
    init: Optional[Sequence[np.ndarray]] = None,
) -> FactorSet:
    """CP decomposition by alternating least squares.

    Parameters
    ----------
    tensor : ndarray
    rank : int
    max_iter : int
        Maximum number of full sweeps over all modes.
    tol : float
        Stop once the relative error changes by less than ``tol`` between
        sweeps, or falls below it.
    seed : int
        Seeds the standard-normal initialisation.

    Returns
    -------
    FactorSet
        ``history`` holds the squared error after every sweep.
    """
    tensor = np.asarray(tensor, dtype=float)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if init is None:
        rng = substream(seed, "cp_init")
        factors = [rng.standard_normal((n, rank)) for n in tensor.shape]
    else:
        factors = [np.array(f, dtype=float) for f in init]
    norm = np.linalg.norm(tensor)
    unfoldings = [unfold(tensor, n) for n in range(tensor.ndim)]
    history = []
    prev = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        for n in range(tensor.ndim):
            gram = np.ones((rank, rank))
            for m, f in enumerate(factors):
                if m != n:
                    gram *= f.T @ f
            mttkrp = unfoldings[n] @ khatri_rao_except(factors, n)
            factors[n] = spd_solve(gram, mttkrp)
        err = cp_objective(tensor, factors)
        history.append(err)
        rel = np.sqrt(err) / norm if norm > 0 else np.sqrt(err)
        if rel < tol or abs(prev - rel) < tol:
            prev = rel
            break
        prev = rel
    return FactorSet(factors, rel_error=float(prev), history=history, iterations=it)


# -- binary block format -------------------------------------------------

MAGIC = "HINMEGA-BLOCK 1"


def save_block(path, array: np.ndarray, **meta) -> Path:
    """Write a text header plus a row-major little-endian float64 payload.

    The header is two lines: a magic string and a JSON object carrying
    ``order``, ``shape`` and any extra ``meta`` (node ordering, measure,
    seed provenance, ...).
    """
    path = Path(path)
    array = np.ascontiguousarray(array, dtype="<f8")
    header = {"order": array.ndim, "shape": list(array.shape), "dtype": "<f8"}
    header.update(meta)
    with path.open("wb") as fh:
        fh.write((MAGIC + "\n").encode("utf-8"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        fh.write(array.tobytes(order="C"))
    return path


def load_block(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.readline().decode("utf-8").rstrip("\n")
        if magic != MAGIC:
            raise ValueError(f"{path}: not a block file (bad magic {magic!r})")
        header = json.loads(fh.readline().decode("utf-8"))
        payload = fh.read()
    shape = tuple(header["shape"])
    expected = int(np.prod(shape, dtype=np.int64)) * 8
    if len(payload) != expected:
        raise ValueError(f"{path}: payload has {len(payload)} bytes, header implies {expected}")
    array = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return array, header


def save_tensor(path, tensor: np.ndarray, seed: Optional[int] = None, **meta) -> Path:
    if seed is not None:
        meta["seed"] = seed
    return save_block(path, tensor, **meta)


def load_tensor(path) -> tuple[np.ndarray, dict]:
    return load_block(path)
