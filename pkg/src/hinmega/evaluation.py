"""Clustering and classification evaluation of node embeddings.

Clustering: k-means with random restarts, scored by NMI and purity.
Classification: repeated random 80/20 splits, 5-NN majority vote, scored by
Macro-F1 and Micro-F1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._rng import substream
from .errors import GraphParseError, HinError

__all__ = [
    "LabeledEmbedding",
    "KMeansResult",
    "EvalReport",
    "labeled_embedding",
    "kmeans",
    "contingency",
    "nmi",
    "purity",
    "macro_f1",
    "micro_f1",
    "knn_predict",
    "knn_classify",
    "cluster_evaluate",
    "load_labels",
]


@dataclass(frozen=True)
class LabeledEmbedding:
    P: np.ndarray
    labels: tuple
    node_ids: tuple

    def __post_init__(self):
        if len(self.labels) != self.P.shape[0]:
            raise HinError(f"{len(self.labels)} labels for {self.P.shape[0]} embedding rows")
        if len(set(self.labels)) < 2:
            raise HinError("evaluation needs at least two distinct classes")

    @property
    def classes(self) -> list:
        return sorted(set(self.labels))


def labeled_embedding(node_ids: Sequence[str], P: np.ndarray, labels: dict) -> LabeledEmbedding:
    """Keep only the rows whose node carries a ground-truth label."""
    keep = [i for i, nid in enumerate(node_ids) if labels.get(nid) is not None]
    if not keep:
        raise HinError("none of the embedded nodes has a label")
    return LabeledEmbedding(
        np.asarray(P, dtype=float)[keep],
        tuple(labels[node_ids[i]] for i in keep),
        tuple(node_ids[i] for i in keep),
    )


def load_labels(path) -> dict:
    """Read ``node_id<TAB>label`` lines; ``#`` lines are comments."""
    path = Path(path)
    labels = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise GraphParseError(path, lineno, "expected node_id<TAB>label")
            if parts[0] in labels:
                raise GraphParseError(path, lineno, f"duplicate label for {parts[0]!r}")
            labels[parts[0]] = parts[1]
    return labels


# -- k-means --------------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    inertia: float
    centers: np.ndarray
    n_iter: int
    history: list = field(default_factory=list)


def _sq_dist(X, C):
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(X, k, rng):
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d = _sq_dist(X, X[idx])[:, 0]
    for _ in range(1, k):
        total = d.sum()
        if total <= 0:
            rest = np.setdiff1d(np.arange(n), idx)
            idx.append(int(rng.choice(rest)))
        else:
            idx.append(int(rng.choice(n, p=d / total)))
        d = np.minimum(d, _sq_dist(X, X[idx[-1:]])[:, 0])
    return X[idx].copy()


def _lloyd(X, centers, max_iter):
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dist(X, centers), axis=1)
        history.append(float(((X - centers[new]) ** 2).sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.shape[0]):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)
    labels = np.argmin(_sq_dist(X, centers), axis=1)
    inertia = float(((X - centers[labels]) ** 2).sum())
    history.append(inertia)
    return labels, inertia, centers, it, history


def kmeans(P, k: int, restarts: int = 100, seed: int = 0, init: str = "random", max_iter: int = 300) -> KMeansResult:
    """Lloyd's k-means, best inertia over ``restarts`` seeded initialisations.

    ``init="random"`` seeds centroids with ``k`` distinct data points drawn
    uniformly; ``init="k-means++"`` uses D^2 sampling. Empty clusters keep
    their previous centroid.
    """
    X = np.asarray(P, dtype=float)
    n = X.shape[0]
    if k < 1 or k > n:
        raise HinError(f"k={k} must lie in [1, {n}]")
    if restarts < 1:
        raise HinError("restarts must be >= 1")
    rng = substream(seed, "kmeans")
    best = None
    for _ in range(restarts):
        if init == "random":
            centers = X[rng.choice(n, size=k, replace=False)].copy()
        elif init == "k-means++":
            centers = _plusplus(X, k, rng)
        else:
            raise ValueError(f"unknown init {init!r}")
        labels, inertia, centers, it, hist = _lloyd(X, centers, max_iter)
        if best is None or inertia < best.inertia:
            best = KMeansResult(labels, inertia, centers, it, hist)
    return best


# -- metrics ---------------------------------------------------------------


def contingency(true, pred) -> np.ndarray:
    true, pred = list(true), list(pred)
    if len(true) != len(pred):
        raise HinError(f"label sequences differ in length: {len(true)} vs {len(pred)}")
    _, ti = np.unique(np.asarray(true, dtype=object).astype(str), return_inverse=True)
    _, pi = np.unique(np.asarray(pred, dtype=object).astype(str), return_inverse=True)
    table = np.zeros((ti.max(initial=-1) + 1, pi.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ti, pi), 1)
    return table


def _entropy(counts) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(true, pred, average: str = "arithmetic") -> float:
    """Normalised mutual information; ``average`` picks the entropy normaliser
    (``arithmetic``, ``geometric``, ``max`` or ``min``)."""
    table = contingency(true, pred)
    n = table.sum()
    if n == 0:
        raise HinError("cannot score empty labelings")
    if (np.count_nonzero(table, axis=0) == 1).all() and (np.count_nonzero(table, axis=1) == 1).all():
        return 1.0
    a, b = table.sum(1), table.sum(0)
    ht, hp = _entropy(a), _entropy(b)
    nz = table > 0
    mi = float((table[nz] / n * np.log(n * table[nz] / np.outer(a, b)[nz])).sum())
    if average == "arithmetic":
        denom = (ht + hp) / 2.0
    elif average == "geometric":
        denom = math.sqrt(ht * hp)
    elif average == "max":
        denom = max(ht, hp)
    elif average == "min":
        denom = min(ht, hp)
    else:
        raise ValueError(f"unknown NMI normalisation {average!r}")
    if denom <= 0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def purity(true, pred) -> float:
    table = contingency(true, pred)
    return float(table.max(axis=0).sum() / table.sum())


def _per_class_counts(true, pred):
    true, pred = list(true), list(pred)
    if len(true) != len(pred):
        raise HinError(f"label sequences differ in length: {len(true)} vs {len(pred)}")
    classes = sorted(set(true) | set(pred), key=str)
    out = []
    for c in classes:
        tp = sum(1 for t, p in zip(true, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(true, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(true, pred) if t == c and p != c)
        out.append((tp, fp, fn))
    return out


def macro_f1(true, pred) -> float:
    """Unweighted mean of per-class F1 over classes seen in either sequence."""
    scores = [2 * tp / (2 * tp + fp + fn) for tp, fp, fn in _per_class_counts(true, pred) if 2 * tp + fp + fn]
    return float(sum(scores) / len(scores)) if scores else 0.0


def micro_f1(true, pred) -> float:
    counts = _per_class_counts(true, pred)
    tp = sum(c[0] for c in counts)
    fp = sum(c[1] for c in counts)
    fn = sum(c[2] for c in counts)
    return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0


# -- reports ----------------------------------------------------------------


@dataclass
class EvalReport:
    task: str
    trials: list
    config: dict = field(default_factory=dict)

    @property
    def metrics(self) -> list:
        return list(self.trials[0].keys()) if self.trials else []

    @property
    def mean(self) -> dict:
        return {m: float(np.mean([t[m] for t in self.trials])) for m in self.metrics}

    @property
    def std(self) -> dict:
        return {m: float(np.std([t[m] for t in self.trials])) for m in self.metrics}

    def table(self) -> str:
        lines = [f"{self.task} ({len(self.trials)} trial{'s' if len(self.trials) != 1 else ''})"]
        mean, std = self.mean, self.std
        for m in self.metrics:
            lines.append(f"  {m:<10s} {mean[m]:.4f} +/- {std[m]:.4f}")
        cfg = ", ".join(f"{k}={v}" for k, v in self.config.items())
        if cfg:
            lines.append(f"  [{cfg}]")
        return "\n".join(lines)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial"] + self.metrics)
            for i, t in enumerate(self.trials):
                w.writerow([i] + [repr(t[m]) for m in self.metrics])
            w.writerow(["mean"] + [repr(self.mean[m]) for m in self.metrics])
            w.writerow(["std"] + [repr(self.std[m]) for m in self.metrics])
        return path

    def to_dict(self) -> dict:
        return {"task": self.task, "trials": self.trials, "mean": self.mean, "std": self.std, "config": self.config}


def _normalize_rows(X):
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.where(norms > 0, norms, 1.0)


def cluster_evaluate(emb: LabeledEmbedding, k: Optional[int] = None, restarts: int = 100, seed: int = 0,
                     init: str = "random", nmi_average: str = "arithmetic") -> EvalReport:
    k = k or len(emb.classes)
    km = kmeans(emb.P, k, restarts=restarts, seed=seed, init=init)
    trial = {
        "nmi": nmi(emb.labels, km.labels, average=nmi_average),
        "purity": purity(emb.labels, km.labels),
    }
    return EvalReport(
        "clustering",
        [trial],
        {"k": k, "restarts": restarts, "seed": seed, "init": init, "nmi_average": nmi_average,
         "n": len(emb.labels), "inertia": km.inertia},
    )


def knn_predict(train_X, train_y, test_X, k: int = 5) -> list:
    """Euclidean k-NN majority vote; ties go to the tied class whose member is nearest."""
    d = _sq_dist(np.asarray(test_X, float), np.asarray(train_X, float))
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    preds = []
    for row in order:
        neigh = [train_y[j] for j in row]
        votes: dict = {}
        for lab in neigh:
            votes[lab] = votes.get(lab, 0) + 1
        top = max(votes.values())
        tied = {lab for lab, v in votes.items() if v == top}
        preds.append(next(lab for lab in neigh if lab in tied))
    return preds


def knn_classify(emb: LabeledEmbedding, k: int = 5, train_frac: float = 0.8, repeats: int = 10,
                 seed: int = 0, normalize: Optional[str] = None, max_attempts: int = 10) -> EvalReport:
    X = emb.P if normalize is None else _normalize_rows(emb.P)
    if normalize not in (None, "l2"):
        raise ValueError(f"unknown normalisation {normalize!r}")
    y = list(emb.labels)
    n = len(y)
    n_train = int(round(train_frac * n))
    if n_train < k:
        raise HinError(f"{n_train} training rows cannot support k={k}")
    if n_train >= n:
        raise HinError("train fraction leaves no test rows")
    classes = set(y)
    rng = substream(seed, "splits")
    trials = []
    for _ in range(repeats):
        for _attempt in range(max_attempts):
            perm = rng.permutation(n)
            tr, te = perm[:n_train], perm[n_train:]
            if {y[i] for i in tr} == classes:
                break
        else:
            raise HinError(f"could not draw a split covering all classes in {max_attempts} attempts")
        pred = knn_predict(X[tr], [y[i] for i in tr], X[te], k=k)
        truth = [y[i] for i in te]
        trials.append({"macro_f1": macro_f1(truth, pred), "micro_f1": micro_f1(truth, pred)})
    return EvalReport(
        "classification",
        trials,
        {"k": k, "train_frac": train_frac, "repeats": repeats, "seed": seed, "normalize": normalize or "none", "n": n},
    )
