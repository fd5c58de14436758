"""Clustering agreement and reconstruction error."""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DimensionError


def contingency(a, b) -> np.ndarray:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"label vectors must be 1-d with equal length, got {a.shape} and {b.shape}")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max(initial=-1) + 1, ib.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(labels_a, labels_b) -> float:
    """I(a; b) / sqrt(H(a) H(b)) in nats; 0 when either labelling has zero entropy."""
    table = contingency(labels_a, labels_b)
    n = int(table.sum())
    if n == 0:
        raise DataError("empty labelling")
    ha, hb = _entropy(table.sum(1), n), _entropy(table.sum(0), n)
    if ha * hb == 0.0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(1), table.sum(0))
    mi = float((table[nz] / n * np.log(table[nz] * n / outer[nz])).sum())
    return float(np.clip(mi / np.sqrt(ha * hb), 0.0, 1.0))


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index over pair counts; 1.0 when the normaliser vanishes."""
    table = contingency(labels_a, labels_b)
    n = int(table.sum())
    index = _comb2(table).sum()
    sa, sb = _comb2(table.sum(1)).sum(), _comb2(table.sum(0)).sum()
    total = _comb2(n)
    expected = sa * sb / total if total else 0.0
    max_index = (sa + sb) / 2
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))


def reconstruction_mse(x, x_rec) -> float:
    x, x_rec = np.asarray(x, dtype=np.float64), np.asarray(x_rec, dtype=np.float64)
    if x.shape != x_rec.shape:
        raise DimensionError(f"shape mismatch: {x.shape} vs {x_rec.shape}")
    return float(np.mean((x - x_rec) ** 2))
