"""k-nearest-neighbour classification on frozen representations."""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import DataError
from .table import RepresentationTable

METRICS = ("euclidean", "cosine")
_PAD = 16


def _prep(Z: np.ndarray, metric: str) -> np.ndarray:
    if metric == "cosine":
        return Z / np.maximum(np.linalg.norm(Z, axis=1, keepdims=True), 1e-12)
    return Z


def neighbours(train_Z, query_Z, kmax: int, metric: str = "euclidean", chunk: int = 256):
    """Indices and distances of the ``kmax`` nearest training rows per query.

    Rows are ordered by (distance, training index). Candidates come from the
    fast |q|^2 + |t|^2 - 2 q.t expansion; the leading candidates are then
    re-measured directly so ties and near-ties are ordered exactly.
    Cosine distance is 1 - cos(q, t).
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}")
    T = _prep(np.asarray(train_Z, dtype=np.float64), metric)
    Q = _prep(np.asarray(query_Z, dtype=np.float64), metric)
    n = len(T)
    n_cand = min(n, kmax + _PAD)
    tn = (T * T).sum(1)
    idx_out = np.empty((len(Q), kmax), dtype=np.int64)
    dist_out = np.empty((len(Q), kmax), dtype=np.float64)
    for s in range(0, len(Q), chunk):
        q = Q[s:s + chunk]
        d2 = (q * q).sum(1)[:, None] + tn[None, :] - 2.0 * q @ T.T
        if n_cand < n:
            cand = np.argpartition(d2, n_cand - 1, axis=1)[:, :n_cand]
        else:
            cand = np.broadcast_to(np.arange(n), (len(q), n))
        exact = np.sqrt(((q[:, None, :] - T[cand]) ** 2).sum(-1))
        order = np.lexsort((cand, exact), axis=1)[:, :kmax]
        idx = np.take_along_axis(cand, order, 1)
        dist = np.take_along_axis(exact, order, 1)
        if n_cand < n:
            # rows whose k-th neighbour is within rounding of an excluded point are redone exactly
            rest = d2.copy()
            np.put_along_axis(rest, cand, np.inf, 1)
            tol = 1e-9 * ((q * q).sum(1) + tn.max()) + 1e-12
            for r in np.flatnonzero(dist[:, -1] ** 2 >= rest.min(1) - tol):
                full = np.sqrt(((q[r] - T) ** 2).sum(-1))
                o = np.lexsort((np.arange(n), full))[:kmax]
                idx[r], dist[r] = o, full[o]
        idx_out[s:s + chunk] = idx
        dist_out[s:s + chunk] = dist
    if metric == "cosine":
        dist_out = dist_out**2 / 2
    return idx_out, dist_out


def _check(train: RepresentationTable, test: RepresentationTable, ks) -> None:
    if len(train) == 0 or len(test) == 0:
        raise DataError("kNN needs non-empty train and test tables")
    if train.dim != test.dim:
        raise DataError(f"dimension mismatch: train {train.dim}, test {test.dim}")
    ks = list(ks)
    if not ks:
        raise DataError("empty k range")
    if min(ks) < 1 or max(ks) > len(train):
        raise DataError(f"k must lie in [1, {len(train)}]")


def knn_predict(train: RepresentationTable, test: RepresentationTable, ks, metric: str = "euclidean") -> np.ndarray:
    """Predictions (len(ks), n_test): majority vote; ties to smallest summed distance, then smallest label."""
    ks = [int(k) for k in np.atleast_1d(ks)]
    _check(train, test, ks)
    idx, dist = neighbours(train.Z, test.Z, max(ks), metric)
    n_classes = int(max(train.y.max(), test.y.max())) + 1
    return kernels.knn_vote(train.y[idx], dist, ks, n_classes)


def knn_classify(train: RepresentationTable, test: RepresentationTable, k: int, metric: str = "euclidean") -> float:
    pred = knn_predict(train, test, [k], metric)[0]
    return float(np.mean(pred == test.y))


def knn_sweep(train: RepresentationTable, test: RepresentationTable, ks=range(1, 16), metric: str = "euclidean"):
    """(best_k, best_accuracy, {k: accuracy}); the smallest k wins ties."""
    ks = [int(k) for k in ks]
    _check(train, test, ks)
    preds = knn_predict(train, test, ks, metric)
    accs = {k: float(np.mean(p == test.y)) for k, p in zip(ks, preds)}
    best = max(accs.values())
    best_k = min(k for k, a in accs.items() if a == best)
    return best_k, best, accs
