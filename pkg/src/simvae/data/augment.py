"""Image augmentation with recorded style parameters.

Each source image gets its own random stream derived from
``(master seed, epoch, source index)``, so a view never depends on batch
composition or on how many other sources were processed before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..numerics import Rng

STYLE_NAMES = ("crop_cx", "crop_cy", "crop_scale", "flip")
_ATTEMPTS = 10


def binarize(images, threshold: float = 0.5) -> np.ndarray:
    """1 where pixel >= threshold, else 0 (ties go to 1)."""
    images = np.asarray(images)
    return (images >= threshold).astype(np.float32)


@dataclass(frozen=True)
class AugmentPipeline:
    crop: bool = True
    scale_lo: float = 0.4
    ratio: tuple = (0.75, 1.3)
    flip_p: float = 0.5
    flip_axis: str = "horizontal"
    out_hw: tuple = (28, 28)
    interpolation: str = "bilinear"
    binarize: bool = False

    def __post_init__(self):
        if not 0 < self.scale_lo <= 1:
            raise ValueError("crop scale lower bound must lie in (0, 1]")
        if not (0 < self.ratio[0] <= self.ratio[1]):
            raise ValueError(f"invalid aspect-ratio range {self.ratio}")
        if not 0 <= self.flip_p <= 1:
            raise ValueError("flip probability must lie in [0, 1]")
        if self.flip_axis not in kernels.FLIP_AXES:
            raise ValueError(f"flip axis must be one of {sorted(kernels.FLIP_AXES)}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ValueError("interpolation must be 'bilinear' or 'nearest'")

    @classmethod
    def identity(cls, out_hw=(28, 28), binarize: bool = False) -> "AugmentPipeline":
        return cls(crop=False, flip_p=0.0, out_hw=tuple(out_hw), binarize=binarize)


@dataclass
class ViewSet:
    source_index: int
    views: np.ndarray  # (J, H, W)
    style: np.ndarray  # (J, len(STYLE_NAMES))
    style_names: tuple = field(default=STYLE_NAMES)

    @property
    def J(self) -> int:
        return self.views.shape[0]


def view_rng(seed: int, epoch: int, source_index: int) -> Rng:
    return Rng(seed).stream("augment", epoch, source_index)


def sample_boxes(H: int, W: int, n: int, scale_lo: float, ratio, rng: Rng) -> np.ndarray:
    """n crop boxes (top, left, h, w); area fraction in [scale_lo, 1], log-uniform aspect ratio.

    Up to 10 proposals per box; the first that fits inside the image wins,
    and the full image is used when none does. The number of draws is fixed
    so the stream position never depends on which proposal was accepted.
    """
    area = H * W
    frac = rng.uniform(scale_lo, 1.0, (n, _ATTEMPTS))
    logr = rng.uniform(math.log(ratio[0]), math.log(ratio[1]), (n, _ATTEMPTS))
    pos = rng.random((n, 2))
    r = np.exp(logr)
    w = np.rint(np.sqrt(frac * area * r)).astype(np.int64)
    h = np.rint(np.sqrt(frac * area / r)).astype(np.int64)
    ok = (w > 0) & (w <= W) & (h > 0) & (h <= H)
    boxes = np.empty((n, 4), dtype=np.int64)
    for i in range(n):
        hits = np.flatnonzero(ok[i])
        if hits.size == 0:
            boxes[i] = (0, 0, H, W)
            continue
        a = hits[0]
        bh, bw = h[i, a], w[i, a]
        top = min(int(pos[i, 0] * (H - bh + 1)), H - bh)
        left = min(int(pos[i, 1] * (W - bw + 1)), W - bw)
        boxes[i] = (top, left, bh, bw)
    return boxes


def _style_from_boxes(boxes: np.ndarray, flips: np.ndarray, H: int, W: int) -> np.ndarray:
    top, left, h, w = boxes.T.astype(np.float64)
    return np.stack([(left + w / 2) / W, (top + h / 2) / H, h * w / (H * W), flips.astype(np.float64)], axis=1)


def _sample_views(H: int, W: int, J: int, pipeline: AugmentPipeline, rng: Rng):
    if pipeline.crop:
        boxes = sample_boxes(H, W, J, pipeline.scale_lo, pipeline.ratio, rng)
    else:
        boxes = np.tile(np.array([0, 0, H, W], dtype=np.int64), (J, 1))
    flips = (rng.random(J) < pipeline.flip_p).astype(np.uint8)
    return boxes, flips


def random_resized_crop(img, scale_lo: float, ratio_range, out_hw, rng: Rng, interpolation: str = "bilinear"):
    """Crop a random box and resize it; returns (image, {crop_cx, crop_cy, crop_scale})."""
    img = np.asarray(img, dtype=np.float32)
    H, W = img.shape
    box = sample_boxes(H, W, 1, scale_lo, ratio_range, rng)
    out = kernels.crop_resize_batch(img[None], box, None, "horizontal", out_hw, interpolation == "bilinear")[0]
    style = _style_from_boxes(box, np.zeros(1), H, W)[0]
    return out, dict(zip(STYLE_NAMES[:3], style[:3]))


def random_flip(img, p: float, rng: Rng, axis: str = "horizontal"):
    """Mirror with probability ``p``; returns (image, flip_bit)."""
    if not 0 <= p <= 1:
        raise ValueError("flip probability must lie in [0, 1]")
    img = np.asarray(img)
    bit = int(rng.random() < p)
    if bit:
        img = img[:, ::-1] if axis == "horizontal" else img[::-1, :]
    return np.ascontiguousarray(img), bit


def make_views(x, J: int, pipeline: AugmentPipeline, rng: Rng, source_index: int = 0) -> ViewSet:
    """J independently augmented views of one image."""
    if J < 1:
        raise ValueError("J must be >= 1")
    x = np.asarray(x, dtype=np.float32)
    H, W = x.shape
    boxes, flips = _sample_views(H, W, J, pipeline, rng)
    imgs = np.broadcast_to(x, (J, H, W))
    views = kernels.crop_resize_batch(imgs, boxes, flips, pipeline.flip_axis, pipeline.out_hw,
                                      pipeline.interpolation == "bilinear")
    if pipeline.binarize:
        views = binarize(views)
    return ViewSet(source_index, views, _style_from_boxes(boxes, flips, H, W))


def augment_batch(images, source_indices, J: int, pipeline: AugmentPipeline, seed: int, epoch: int):
    """Views for a batch of sources; returns views (J, B, H', W') and style (J, B, 4).

    Identical to calling :func:`make_views` per source with
    ``view_rng(seed, epoch, source_index)``, but runs one kernel call.
    """
    images = np.asarray(images, dtype=np.float32)
    B, H, W = images.shape
    boxes = np.empty((J, B, 4), dtype=np.int64)
    flips = np.empty((J, B), dtype=np.uint8)
    for b, src in enumerate(source_indices):
        boxes[:, b], flips[:, b] = _sample_views(H, W, J, pipeline, view_rng(seed, epoch, int(src)))
    imgs = np.broadcast_to(images[None], (J, B, H, W)).reshape(J * B, H, W)
    views = kernels.crop_resize_batch(imgs, boxes.reshape(J * B, 4), flips.reshape(J * B), pipeline.flip_axis,
                                      pipeline.out_hw, pipeline.interpolation == "bilinear")
    if pipeline.binarize:
        views = binarize(views)
    style = _style_from_boxes(boxes.reshape(J * B, 4), flips.reshape(J * B), H, W).reshape(J, B, -1)
    return views.reshape(J, B, *pipeline.out_hw), style
