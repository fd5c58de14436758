"""The evaluation suite over a pair of representation tables, and its CSV report."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gmm import gmm_fit
from .knn import knn_sweep
from .metrics import ari, nmi
from .probes import linear_probe, mlp_probe, style_probe
from .table import RepresentationTable

REPORT_COLUMNS = ("probe", "dataset", "metric", "value", "seed", "checkpoint_id")
PROBES = ("knn", "linear", "mlp", "gmm", "style")


@dataclass
class EvalSettings:
    probes: tuple = PROBES
    k_max: int = 15
    knn_metric: str = "euclidean"
    probe_epochs: int = 200
    probe_lr: float = 3e-4
    mlp_hidden: int = 256
    gmm_n_init: int = 10
    gmm_max_iter: int = 200
    gmm_reg: float = 1e-6
    gmm_max_points: int = 0  # 0 = fit on every test row
    style_lambda: float = 1e-6
    seed: int = 0
    extra: dict = field(default_factory=dict)


def evaluate(train: RepresentationTable, test: RepresentationTable, settings: EvalSettings | None = None,
             dataset: str = "", checkpoint_id: str = "") -> list:
    """Run the selected probes; returns report rows as dicts."""
    s = settings or EvalSettings()
    rows = []

    def add(probe, metric, value):
        rows.append({"probe": probe, "dataset": dataset or test.dataset_id, "metric": metric,
                     "value": float(value), "seed": s.seed, "checkpoint_id": checkpoint_id or test.checkpoint_id})

    if "knn" in s.probes:
        best_k, best, _ = knn_sweep(train, test, range(1, min(s.k_max, len(train)) + 1), s.knn_metric)
        add("knn", "accuracy", best)
        add("knn", "best_k", best_k)
    if "linear" in s.probes:
        add("linear", "accuracy", linear_probe(train, test, s.probe_lr, s.probe_epochs, seed=s.seed).accuracy)
    if "mlp" in s.probes:
        res = mlp_probe(train, test, s.mlp_hidden, s.probe_lr, s.probe_epochs, seed=s.seed)
        add("mlp", "accuracy", res.accuracy)
    if "gmm" in s.probes:
        tab = test
        if s.gmm_max_points and len(test) > s.gmm_max_points:
            tab = test.take(np.arange(s.gmm_max_points))
        K = len(np.unique(tab.y))
        model = gmm_fit(tab.Z, K, n_init=s.gmm_n_init, max_iter=s.gmm_max_iter, reg=s.gmm_reg, seed=s.seed)
        pred = model.predict(tab.Z)
        add("gmm", "nmi", nmi(tab.y, pred))
        add("gmm", "ari", ari(tab.y, pred))
        add("gmm", "accuracy", cluster_accuracy(tab.y, pred))
    if "style" in s.probes and train.S is not None:
        r2 = style_probe(train, lam=s.style_lambda, seed=s.seed)
        for name, v in zip(train.style_names, r2):
            add("style", f"r2_{name}", v)
        add("style", "r2_mean", np.nanmean(r2))
    return rows


def cluster_accuracy(y, pred) -> float:
    """Accuracy after mapping each cluster to its majority class."""
    y, pred = np.asarray(y), np.asarray(pred)
    correct = 0
    for c in np.unique(pred):
        correct += np.bincount(y[pred == c]).max()
    return correct / len(y)


def write_report(path, rows) -> None:
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "value": repr(float(r["value"]))})


def read_report(path) -> list:
    with Path(path).open(newline="") as f:
        return [{**r, "value": float(r["value"])} for r in csv.DictReader(f)]
