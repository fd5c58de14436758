# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: batched crop/resize/flip and kNN voting."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def crop_resize_batch(const float[:, :, ::1] images, const long long[:, ::1] boxes,
                      const unsigned char[::1] flips, int flip_axis,
                      int out_h, int out_w, bint bilinear):
    cdef Py_ssize_t B = images.shape[0]
    out_arr = np.empty((B, out_h, out_w), dtype=np.float32)
    cdef float[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, i, j, oi, oj
    cdef long long top, left, h, w, y0, y1, x0, x1
    cdef double sy, sx, wy, wx, v
    for b in range(B):
        top = boxes[b, 0]
        left = boxes[b, 1]
        h = boxes[b, 2]
        w = boxes[b, 3]
        for i in range(out_h):
            if bilinear:
                sy = (i + 0.5) * h / out_h - 0.5
                if sy < 0:
                    sy = 0
                y0 = <long long>floor(sy)
                if y0 > h - 1:
                    y0 = h - 1
                y1 = y0 + 1 if y0 + 1 < h else h - 1
                wy = sy - y0
            else:
                y0 = <long long>floor((i + 0.5) * h / out_h)
                if y0 > h - 1:
                    y0 = h - 1
                y1 = y0
                wy = 0.0
            oi = out_h - 1 - i if (flips[b] and flip_axis == 1) else i
            for j in range(out_w):
                if bilinear:
                    sx = (j + 0.5) * w / out_w - 0.5
                    if sx < 0:
                        sx = 0
                    x0 = <long long>floor(sx)
                    if x0 > w - 1:
                        x0 = w - 1
                    x1 = x0 + 1 if x0 + 1 < w else w - 1
                    wx = sx - x0
                else:
                    x0 = <long long>floor((j + 0.5) * w / out_w)
                    if x0 > w - 1:
                        x0 = w - 1
                    x1 = x0
                    wx = 0.0
                oj = out_w - 1 - j if (flips[b] and flip_axis == 0) else j
                v = ((1.0 - wy) * ((1.0 - wx) * images[b, top + y0, left + x0]
                                   + wx * images[b, top + y0, left + x1])
                     + wy * ((1.0 - wx) * images[b, top + y1, left + x0]
                             + wx * images[b, top + y1, left + x1]))
                out[b, oi, oj] = <float>v
    return out_arr


def knn_vote(const long long[:, ::1] labels, const double[:, ::1] dists,
             const long long[::1] ks, int n_classes):
    cdef Py_ssize_t Q = labels.shape[0]
    cdef Py_ssize_t M = ks.shape[0]
    cdef Py_ssize_t kmax = labels.shape[1]
    preds_arr = np.empty((M, Q), dtype=np.int64)
    cdef long long[:, ::1] preds = preds_arr
    counts_arr = np.zeros(n_classes, dtype=np.int64)
    dsum_arr = np.zeros(n_classes, dtype=np.float64)
    cdef long long[::1] counts = counts_arr
    cdef double[::1] dsum = dsum_arr
    cdef Py_ssize_t q, m, n, c, best
    cdef long long lab, k
    for q in range(Q):
        for c in range(n_classes):
            counts[c] = 0
            dsum[c] = 0.0
        n = 0
        for m in range(M):
            k = ks[m]
            while n < k and n < kmax:
                lab = labels[q, n]
                counts[lab] += 1
                dsum[lab] += dists[q, n]
                n += 1
            best = 0
            for c in range(1, n_classes):
                if counts[c] > counts[best] or (counts[c] == counts[best] and counts[c] > 0 and dsum[c] < dsum[best]):
                    best = c
            preds[m, q] = best
    return preds_arr
