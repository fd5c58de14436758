"""Evaluation of frozen representations."""

from .generate import (
    FrozenDecoderResult,
    conditional_generate,
    fit_class_gaussian,
    frozen_decoder_train,
    image_grid,
    read_pgm,
    write_pgm,
)
from .gmm import GmmModel, gmm_cluster, gmm_fit
from .knn import knn_classify, knn_predict, knn_sweep, neighbours
from .metrics import ari, contingency, nmi, reconstruction_mse
from .probes import ProbeResult, fit_linear_map_r2, linear_probe, mlp_probe, r2_score, ridge_fit, style_probe
from .report import REPORT_COLUMNS, EvalSettings, cluster_accuracy, evaluate, read_report, write_report
from .table import RepresentationTable

__all__ = [
    "REPORT_COLUMNS",
    "EvalSettings",
    "FrozenDecoderResult",
    "GmmModel",
    "ProbeResult",
    "RepresentationTable",
    "ari",
    "cluster_accuracy",
    "conditional_generate",
    "contingency",
    "evaluate",
    "fit_class_gaussian",
    "fit_linear_map_r2",
    "frozen_decoder_train",
    "gmm_cluster",
    "gmm_fit",
    "image_grid",
    "knn_classify",
    "knn_predict",
    "knn_sweep",
    "linear_probe",
    "mlp_probe",
    "neighbours",
    "nmi",
    "r2_score",
    "read_pgm",
    "read_report",
    "reconstruction_mse",
    "ridge_fit",
    "style_probe",
    "write_pgm",
    "write_report",
]
