"""Supervised probes trained on frozen representations, and the style regression."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericError
from ..losses import contrastive_cross_entropy
from ..nn import Adam, MlpSpec, init_params, mlp_forward
from ..numerics import Rng, backward, no_grad, precision
from .table import RepresentationTable


@dataclass
class ProbeResult:
    accuracy: float
    train_accuracy: float
    losses: list


def _standardize(train: np.ndarray, test: np.ndarray):
    mu = train.mean(0)
    sd = train.std(0)
    sd = np.where(sd > 0, sd, 1.0)
    return (train - mu) / sd, (test - mu) / sd


def _fit_classifier(spec: MlpSpec, train: RepresentationTable, test: RepresentationTable, lr: float,
                    epochs: int, batch_size: int, seed: int) -> ProbeResult:
    if len(train) == 0 or len(test) == 0:
        raise DataError("probe needs non-empty train and test tables")
    if len(np.unique(train.y)) < 2:
        raise DataError("probe train set has a single class")
    if train.dim != test.dim:
        raise DataError(f"dimension mismatch: train {train.dim}, test {test.dim}")
    Xtr, Xte = _standardize(train.Z, test.Z)
    rng = Rng(seed)
    with precision(np.float64):
        params = init_params(spec, rng.stream("init"), "probe")
        opt = Adam(params, lr)
        losses = []
        n = len(Xtr)
        for epoch in range(epochs):
            perm = rng.stream("order", epoch).permutation(n)
            total = 0.0
            for s in range(0, n, batch_size):
                idx = perm[s:s + batch_size]
                opt.zero_grad()
                loss = contrastive_cross_entropy(mlp_forward(spec, params, Xtr[idx], "probe"), train.y[idx])
                backward(loss)
                opt.step()
                total += loss.item() * len(idx)
            losses.append(total / n)
        with no_grad():
            pred_tr = np.argmax(mlp_forward(spec, params, Xtr, "probe").data, 1)
            pred_te = np.argmax(mlp_forward(spec, params, Xte, "probe").data, 1)
    return ProbeResult(float(np.mean(pred_te == test.y)), float(np.mean(pred_tr == train.y)), losses)


def _n_classes(train, test) -> int:
    return int(max(train.y.max(), test.y.max())) + 1


def linear_probe(train: RepresentationTable, test: RepresentationTable, lr: float = 3e-4, epochs: int = 200,
                 batch_size: int = 128, seed: int = 0) -> ProbeResult:
    """One affine layer with softmax cross-entropy, trained by Adam on standardised features."""
    spec = MlpSpec((train.dim, _n_classes(train, test)), ("none",))
    return _fit_classifier(spec, train, test, lr, epochs, batch_size, seed)


def mlp_probe(train: RepresentationTable, test: RepresentationTable, hidden: int = 256, lr: float = 3e-4,
              epochs: int = 200, batch_size: int = 128, seed: int = 0) -> ProbeResult:
    """Two fully connected layers with a ReLU between them."""
    spec = MlpSpec.relu_mlp((train.dim, hidden, _n_classes(train, test)))
    return _fit_classifier(spec, train, test, lr, epochs, batch_size, seed)


def ridge_fit(X: np.ndarray, Y: np.ndarray, lam: float):
    """Closed-form ridge with an unpenalised intercept; returns (W, b)."""
    if lam < 0:
        raise ValueError("ridge penalty must be non-negative")
    xm, ym = X.mean(0), Y.mean(0)
    Xc, Yc = X - xm, Y - ym
    G = Xc.T @ Xc
    if lam == 0 and np.linalg.matrix_rank(G) < G.shape[0]:
        raise NumericError("singular Gram matrix with zero ridge penalty")
    W = np.linalg.solve(G + lam * np.eye(G.shape[0]), Xc.T @ Yc)
    return W, ym - xm @ W


def r2_score(y: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Per-column coefficient of determination."""
    ss_res = ((y - pred) ** 2).sum(0)
    ss_tot = ((y - y.mean(0)) ** 2).sum(0)
    return 1.0 - ss_res / np.where(ss_tot > 0, ss_tot, np.nan)


def style_probe(table: RepresentationTable, targets=None, lam: float = 1e-6, train_frac: float = 0.8,
                seed: int = 0) -> np.ndarray:
    """Held-out R^2 of a ridge regression from Z to each style variable.

    Uses a fixed seeded 80/20 row split of ``table``; ``targets`` defaults
    to the table's style matrix.
    """
    S = table.S if targets is None else np.asarray(targets, dtype=np.float64).reshape(len(table), -1)
    if S is None:
        raise DataError("table has no style variables")
    if len(S) != len(table):
        raise DataError("style targets are not row-aligned with the table")
    perm = Rng(seed).stream("style-split").permutation(len(table))
    n_train = int(round(train_frac * len(table)))
    if n_train < 2 or n_train >= len(table):
        raise DataError("style probe needs at least two rows on each side of the split")
    tr, te = perm[:n_train], perm[n_train:]
    W, b = ridge_fit(table.Z[tr], S[tr], lam)
    return r2_score(S[te], table.Z[te] @ W + b)


def fit_linear_map_r2(Z: np.ndarray, target: np.ndarray, lam: float = 1e-6) -> float:
    """In-sample R^2 (variance-weighted over columns) of the best affine map Z -> target."""
    W, b = ridge_fit(Z, target, lam)
    pred = Z @ W + b
    return float(1.0 - ((target - pred) ** 2).sum() / ((target - target.mean(0)) ** 2).sum())
