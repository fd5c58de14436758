import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simvae import kernels
from simvae.kernels import _pykernels

pytestmark = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled backend not built")


def _boxes(r, B, H, W):
    h = r.integers(1, H + 1, B)
    w = r.integers(1, W + 1, B)
    top = (r.random(B) * (H - h + 1)).astype(np.int64)
    left = (r.random(B) * (W - w + 1)).astype(np.int64)
    return np.stack([top, left, h, w], axis=1)


@given(st.integers(0, 10**6), st.booleans(), st.sampled_from(["horizontal", "vertical"]))
def test_crop_resize_backends_agree(seed, bilinear, axis):
    r = np.random.default_rng(seed)
    B, H, W = 6, int(r.integers(2, 30)), int(r.integers(2, 30))
    imgs = r.uniform(size=(B, H, W)).astype(np.float32)
    boxes, flips = _boxes(r, B, H, W), r.integers(0, 2, B).astype(np.uint8)
    out_hw = (int(r.integers(1, 30)), int(r.integers(1, 30)))
    a = kernels.crop_resize_batch(imgs, boxes, flips, axis, out_hw, bilinear)
    b = kernels.crop_resize_batch(imgs, boxes, flips, axis, out_hw, bilinear, impl=_pykernels)
    np.testing.assert_array_equal(a, b)


@given(st.integers(0, 10**6))
def test_knn_vote_backends_agree(seed):
    r = np.random.default_rng(seed)
    Q, K, C = 20, 12, 3
    labels = r.integers(0, C, (Q, K))
    dists = np.sort(r.integers(0, 4, (Q, K)).astype(np.float64), axis=1)
    ks = np.array([1, 4, 7, 12, 3])
    np.testing.assert_array_equal(kernels.knn_vote(labels, dists, ks, C),
                                  kernels.knn_vote(labels, dists, ks, C, impl=_pykernels))


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
