"""Hot inner loops with a compiled backend and a NumPy fallback.

The compiled extension is used when it was built; set
``SIMVAE_PURE_PYTHON=1`` to force the fallback. ``BACKEND`` names the
active implementation.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("SIMVAE_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels as _impl

    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

FLIP_AXES = {"horizontal": 0, "vertical": 1}


def crop_resize_batch(images, boxes, flips=None, flip_axis: str = "horizontal",
                      out_hw=(28, 28), bilinear: bool = True, impl=None) -> np.ndarray:
    """Crop ``boxes[b] = (top, left, h, w)`` from each image, resize, then optionally mirror.

    Bilinear sampling uses half-pixel centres with edge clamping, so a box
    covering the whole image at the output size reproduces it exactly.
    """
    impl = impl or _impl
    images = np.ascontiguousarray(images, dtype=np.float32)
    if images.ndim != 3:
        raise ValueError(f"expected (B, H, W) images, got {images.shape}")
    B, H, W = images.shape
    boxes = np.ascontiguousarray(boxes, dtype=np.int64).reshape(B, 4)
    if np.any(boxes[:, 2:] < 1) or np.any(boxes[:, :2] < 0) or np.any(boxes[:, 0] + boxes[:, 2] > H) \
            or np.any(boxes[:, 1] + boxes[:, 3] > W):
        raise ValueError("crop box outside image")
    flips = np.zeros(B, np.uint8) if flips is None else np.ascontiguousarray(flips, dtype=np.uint8)
    return impl.crop_resize_batch(images, boxes, flips, FLIP_AXES[flip_axis],
                                  int(out_hw[0]), int(out_hw[1]), bool(bilinear))


def knn_vote(labels, dists, ks, n_classes: int, impl=None) -> np.ndarray:
    """Majority vote over the first k neighbours for each k in ``ks``.

    ``labels``/``dists`` are (Q, K) and sorted by distance per row. Ties go
    to the smallest summed distance, then the smallest label. Returns (len(ks), Q).
    """
    impl = impl or _impl
    ks = np.asarray(ks, dtype=np.int64)
    order = np.argsort(ks, kind="stable")
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    dists = np.ascontiguousarray(dists, dtype=np.float64)
    preds = impl.knn_vote(labels, dists, np.ascontiguousarray(ks[order]), int(n_classes))
    out = np.empty_like(preds)
    out[order] = preds
    return out
