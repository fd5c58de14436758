"""NumPy implementations of the compiled kernels (same signatures and results)."""

from __future__ import annotations

import numpy as np


def _axis_sampling(n_src: int, n_out: int, bilinear: bool):
    pos = np.arange(n_out, dtype=np.float64)
    if bilinear:
        s = (pos + 0.5) * n_src / n_out - 0.5
        s = np.maximum(s, 0.0)
        i0 = np.minimum(np.floor(s).astype(np.int64), n_src - 1)
        i1 = np.where(i0 + 1 < n_src, i0 + 1, n_src - 1)
        w = s - i0
    else:
        i0 = np.minimum(np.floor((pos + 0.5) * n_src / n_out).astype(np.int64), n_src - 1)
        i1 = i0
        w = np.zeros(n_out)
    return i0, i1, w


def crop_resize_batch(images, boxes, flips, flip_axis, out_h, out_w, bilinear):
    images = np.asarray(images, dtype=np.float32)
    out = np.empty((images.shape[0], out_h, out_w), dtype=np.float32)
    for b, (top, left, h, w) in enumerate(np.asarray(boxes, dtype=np.int64)):
        y0, y1, wy = _axis_sampling(int(h), out_h, bilinear)
        x0, x1, wx = _axis_sampling(int(w), out_w, bilinear)
        img = images[b].astype(np.float64)
        r0 = img[top + y0]
        r1 = img[top + y1]
        wx_ = wx[None, :]
        top_row = (1.0 - wx_) * r0[:, left + x0] + wx_ * r0[:, left + x1]
        bot_row = (1.0 - wx_) * r1[:, left + x0] + wx_ * r1[:, left + x1]
        res = (1.0 - wy)[:, None] * top_row + wy[:, None] * bot_row
        if flips[b]:
            res = res[:, ::-1] if flip_axis == 0 else res[::-1, :]
        out[b] = res
    return out


def knn_vote(labels, dists, ks, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    dists = np.asarray(dists, dtype=np.float64)
    Q, kmax = labels.shape
    onehot = np.zeros((Q, kmax, n_classes), dtype=np.int64)
    onehot[np.arange(Q)[:, None], np.arange(kmax)[None, :], labels] = 1
    counts = np.cumsum(onehot, axis=1)
    dsum = np.cumsum(onehot * dists[:, :, None], axis=1)
    preds = np.empty((len(ks), Q), dtype=np.int64)
    for m, k in enumerate(ks):
        k = min(int(k), kmax)
        c = counts[:, k - 1, :]
        d = dsum[:, k - 1, :]
        top = c == c.max(axis=1, keepdims=True)
        d = np.where(top, d, np.inf)
        best = top & (d == d.min(axis=1, keepdims=True))
        preds[m] = np.argmax(best, axis=1)
    return preds
