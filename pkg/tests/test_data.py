import gzip
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from simvae.data import (
    AugmentPipeline,
    ImageDataset,
    ImageViews,
    SynthDataset,
    SynthViews,
    augment_batch,
    binarize,
    exact_posterior_linear_gaussian,
    load_idx,
    load_image_dataset,
    make_views,
    random_flip,
    random_resized_crop,
    read_idx,
    sample_boxes,
    synth_generate,
    view_rng,
    write_idx,
)
from simvae.errors import DataError, IdxDimensionError, IdxMagicError, IdxTruncatedError, NumericError
from simvae.kernels import crop_resize_batch
from simvae.numerics import Rng


def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims) + payload


class TestIdx:
    def test_images(self, tmp_path):
        arr = np.arange(3 * 28 * 28, dtype=np.uint32).reshape(3, 28, 28) % 256
        p = tmp_path / "img"
        p.write_bytes(idx_bytes(0x803, (3, 28, 28), arr.astype(np.uint8).tobytes()))
        out = load_idx(p)
        assert out.shape == (3, 28, 28) and out.dtype == np.float32
        np.testing.assert_allclose(out, arr / 255.0, rtol=1e-6)
        assert 0 <= out.min() and out.max() <= 1

    def test_labels(self, tmp_path):
        p = tmp_path / "lab.gz"
        p.write_bytes(gzip.compress(idx_bytes(0x801, (5,), bytes([3, 1, 4, 1, 5]))))
        out = load_idx(p)
        assert out.dtype == np.int64
        np.testing.assert_array_equal(out, [3, 1, 4, 1, 5])

    def test_round_trip(self, tmp_path):
        arr = np.random.default_rng(0).integers(0, 256, (4, 5, 6)).astype(np.uint8)
        write_idx(tmp_path / "a", arr)
        np.testing.assert_array_equal(read_idx(tmp_path / "a"), arr)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "t"
        p.write_bytes(idx_bytes(0x803, (2, 28, 28), b"\0" * 100))
        with pytest.raises(IdxTruncatedError):
            read_idx(p)

    def test_truncated_header(self, tmp_path):
        p = tmp_path / "t"
        p.write_bytes(b"\0\0\x08")
        with pytest.raises(IdxTruncatedError):
            read_idx(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m"
        p.write_bytes(idx_bytes(0x802, (2, 2), b"\0" * 4))
        with pytest.raises(IdxMagicError):
            read_idx(p)

    def test_dims_mismatch(self, tmp_path):
        p = tmp_path / "d"
        p.write_bytes(idx_bytes(0x801, (3,), b"\0" * 9))
        with pytest.raises(IdxDimensionError):
            read_idx(p)

    def test_mnist_if_present(self):
        try:
            ds = load_image_dataset("mnist", "test")
        except (DataError, OSError):
            pytest.skip("MNIST not available under SIMVAE_DATA_DIR")
        assert ds.images.shape == (10000, 28, 28)
        np.testing.assert_array_equal(np.bincount(ds.labels),
                                      [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009])


class TestBinarize:
    def test_threshold_and_tie(self):
        np.testing.assert_array_equal(binarize(np.full((2, 2), 0.6)), np.ones((2, 2)))
        np.testing.assert_array_equal(binarize(np.array([0.5, 0.4999])), [1.0, 0.0])

    @given(arrays(np.float32, (3, 4), elements=st.floats(0, 1, width=32)))
    def test_idempotent(self, x):
        np.testing.assert_array_equal(binarize(binarize(x)), binarize(x))


class TestCrop:
    def test_full_crop_is_identity(self):
        img = np.random.default_rng(0).uniform(size=(28, 28)).astype(np.float32)
        out, style = random_resized_crop(img, 1.0, (1.0, 1.0), (28, 28), Rng(0))
        np.testing.assert_array_equal(out, img)
        assert style["crop_scale"] == 1.0 and style["crop_cx"] == 0.5

    def test_full_crop_resize_matches_bilinear(self):
        img = np.random.default_rng(0).uniform(size=(8, 8)).astype(np.float32)
        out, _ = random_resized_crop(img, 1.0, (1.0, 1.0), (4, 4), Rng(0))
        # half-pixel centres: downsampling by 2 averages each 2x2 block
        np.testing.assert_allclose(out, img.reshape(4, 2, 4, 2).mean(axis=(1, 3)), rtol=1e-6)

    def test_deterministic_and_output_size(self):
        img = np.random.default_rng(1).uniform(size=(28, 28)).astype(np.float32)
        a = random_resized_crop(img, 0.4, (0.75, 1.3), (28, 28), Rng(3))
        b = random_resized_crop(img, 0.4, (0.75, 1.3), (28, 28), Rng(3))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1] and a[0].shape == (28, 28)

    @given(st.integers(0, 10**6), st.floats(0.05, 1.0), st.integers(2, 40), st.integers(2, 40))
    def test_boxes_inside_and_in_scale(self, seed, lo, H, W):
        boxes = sample_boxes(H, W, 20, lo, (0.75, 1.3), Rng(seed))
        top, left, h, w = boxes.T
        assert np.all(top >= 0) and np.all(left >= 0) and np.all(top + h <= H) and np.all(left + w <= W)
        assert np.all(h >= 1) and np.all(w >= 1)

    def test_fallback_full_image(self):
        # a 1x40 strip cannot fit a crop with ratio close to 1 and area >= 90%
        boxes = sample_boxes(1, 40, 5, 0.9, (0.9, 1.1), Rng(0))
        np.testing.assert_array_equal(boxes, np.tile([0, 0, 1, 40], (5, 1)))

    def test_area_fraction_distribution(self):
        # square crops always fit, so the accepted area is the proposed U[0.4, 1] area
        boxes = sample_boxes(200, 200, 4000, 0.4, (1.0, 1.0), Rng(0))
        frac = boxes[:, 2] * boxes[:, 3] / 200**2
        assert frac.min() > 0.38 and frac.max() <= 1.0
        assert abs(frac.mean() - 0.7) < 0.03


class TestFlip:
    def test_p_zero(self):
        img = np.arange(6.0).reshape(2, 3)
        out, bit = random_flip(img, 0.0, Rng(0))
        np.testing.assert_array_equal(out, img)
        assert bit == 0

    def test_involution_and_axes(self):
        img = np.arange(6.0).reshape(2, 3)
        once, _ = random_flip(img, 1.0, Rng(0))
        np.testing.assert_array_equal(once, img[:, ::-1])
        twice, _ = random_flip(once, 1.0, Rng(1))
        np.testing.assert_array_equal(twice, img)
        np.testing.assert_array_equal(random_flip(img, 1.0, Rng(0), "vertical")[0], img[::-1])

    def test_rate(self):
        r = Rng(0)
        bits = [random_flip(np.zeros((1, 1)), 0.3, r)[1] for _ in range(10**5)]
        assert abs(np.mean(bits) - 0.3) < 0.01


class TestViews:
    def test_identity_pipeline(self):
        x = np.random.default_rng(0).uniform(size=(28, 28)).astype(np.float32)
        vs = make_views(x, 4, AugmentPipeline.identity(), Rng(0))
        np.testing.assert_array_equal(vs.views, np.broadcast_to(x, (4, 28, 28)))
        assert vs.style.shape == (4, 4)

    def test_same_seed_same_views(self):
        x = np.random.default_rng(0).uniform(size=(28, 28)).astype(np.float32)
        p = AugmentPipeline(binarize=True)
        a = make_views(x, 10, p, view_rng(5, 2, 7), 7)
        b = make_views(x, 10, p, view_rng(5, 2, 7), 7)
        np.testing.assert_array_equal(a.views, b.views)
        np.testing.assert_array_equal(a.style, b.style)
        assert set(np.unique(a.views)) <= {0.0, 1.0}
        assert len({v.tobytes() for v in a.views}) > 1

    def test_batch_matches_per_source(self):
        imgs = np.random.default_rng(0).uniform(size=(5, 28, 28)).astype(np.float32)
        idx = np.array([9, 2, 4, 0, 7])
        p = AugmentPipeline(binarize=True)
        views, style = augment_batch(imgs, idx, 3, p, seed=1, epoch=4)
        for b, src in enumerate(idx):
            vs = make_views(imgs[b], 3, p, view_rng(1, 4, int(src)), int(src))
            np.testing.assert_array_equal(views[:, b], vs.views)
            np.testing.assert_array_equal(style[:, b], vs.style)

    def test_order_independent(self):
        imgs = np.random.default_rng(0).uniform(size=(4, 28, 28)).astype(np.float32)
        idx = np.array([3, 1, 0, 2])
        p = AugmentPipeline()
        v1, _ = augment_batch(imgs, idx, 2, p, 0, 0)
        rev = idx[::-1]
        v2, _ = augment_batch(imgs[::-1], rev, 2, p, 0, 0)
        np.testing.assert_array_equal(v1, v2[:, ::-1])

    def test_pipeline_validation(self):
        with pytest.raises(ValueError):
            AugmentPipeline(scale_lo=0.0)
        with pytest.raises(ValueError):
            AugmentPipeline(flip_axis="diagonal")

    def test_image_views_shapes(self):
        ds = ImageDataset(np.random.default_rng(0).uniform(size=(6, 28, 28)).astype(np.float32),
                          np.arange(6) % 3, "toy")
        src = ImageViews(ds, AugmentPipeline(binarize=True))
        x = src.views(np.array([0, 3]), 4, 0, 0)
        assert x.shape == (4, 2, 784) and x.dtype == np.float32
        X, y, S, names = src.eval_inputs()
        assert X.shape == (6, 784) and set(np.unique(X)) <= {0.0, 1.0}


class TestSynth:
    def test_zero_style_variance(self):
        ds = synth_generate(3, 4, 5, 1.0, 0.0, 2, 6, 0.1, seed=0)
        np.testing.assert_array_equal(ds.z, np.broadcast_to(ds.psi[ds.y][:, None], ds.z.shape))

    def test_class_counts_and_shapes(self):
        ds = synth_generate(4, 7, 2, 1.0, 0.2, 3, 5, 0.1, seed=1)
        np.testing.assert_array_equal(np.bincount(ds.y), [7] * 4)
        assert ds.x.shape == (28, 2, 5) and ds.delta.shape == (28, 2, 3)
        np.testing.assert_allclose(np.linalg.norm(ds.W, axis=0), 1.0)

    def test_construction_identity(self):
        ds = synth_generate(2, 5, 3, 1.0, 0.3, 2, 4, 0.0, seed=2)
        np.testing.assert_allclose(ds.x, ds.z @ ds.W.T + ds.b)
        np.testing.assert_allclose(ds.z, ds.psi[ds.y][:, None] + ds.delta)

    def test_latent_variance(self):
        gamma, sigma = 1.0, 0.5
        ds = synth_generate(10**5, 1, 1, gamma, sigma, 2, 2, 0.1, seed=3)
        var = ds.z.reshape(-1, 2).var(axis=0)
        np.testing.assert_allclose(var, gamma**2 + sigma**2, rtol=0.02)
        cond = ds.z[:, 0] - ds.psi[ds.y]
        np.testing.assert_allclose(cond.mean(axis=0), 0, atol=0.01)

    def test_save_load(self, tmp_path):
        ds = synth_generate(2, 3, 2, 1.0, 0.2, 2, 4, 0.1, seed=0)
        ds.save(tmp_path / "s.svae")
        back = SynthDataset.load(tmp_path / "s.svae")
        for k in ("x", "z", "delta", "y", "psi", "W", "b"):
            np.testing.assert_array_equal(getattr(back, k), getattr(ds, k))
        assert back.params == ds.params

    def test_synth_views(self):
        ds = synth_generate(2, 3, 3, 1.0, 0.2, 2, 4, 0.1, seed=0)
        src = SynthViews(ds)
        np.testing.assert_allclose(src.views(np.array([4, 1]), 2, 0, 0), ds.x[[4, 1], :2].transpose(1, 0, 2),
                                   rtol=1e-6, atol=1e-6)
        X, y, S, names = src.eval_inputs()
        assert X.shape == (18, 4) and S.shape == (18, 2) and len(names) == 2
        np.testing.assert_array_equal(y, np.repeat(ds.y, 3))


class TestPosterior:
    def test_hand_example(self):
        mu, cov = exact_posterior_linear_gaussian(np.array([2.0, 0.0]), np.eye(2), np.zeros(2), 1.0, 1.0)
        np.testing.assert_allclose(mu, [1.0, 0.0])
        np.testing.assert_allclose(cov, 0.5 * np.eye(2))

    def test_noiseless_limit(self):
        x, b = np.array([1.5, -0.5]), np.array([0.2, 0.1])
        mu, _ = exact_posterior_linear_gaussian(x, np.eye(2), b, 1e-10, 1.0)
        np.testing.assert_allclose(mu, x - b, atol=1e-8)

    def test_singular(self):
        with pytest.raises(NumericError):
            exact_posterior_linear_gaussian(np.zeros(3), np.zeros((3, 2)), np.zeros(3), 1.0, np.inf)

    def test_importance_sampling(self):
        r = np.random.default_rng(0)
        W = r.normal(size=(3, 2))
        W /= np.linalg.norm(W, axis=0)
        b, x, var_x = r.normal(size=3), r.normal(size=3), 0.5
        mu, _ = exact_posterior_linear_gaussian(x, W, b, var_x, 1.0)
        z = Rng(0).normal((10**6, 2))
        logw = -0.5 * ((x - b - z @ W.T) ** 2).sum(axis=1) / var_x
        w = np.exp(logw - logw.max())
        est = (w[:, None] * z).sum(axis=0) / w.sum()
        np.testing.assert_allclose(est, mu, rtol=0.01)
