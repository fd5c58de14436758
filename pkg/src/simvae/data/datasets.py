"""Image datasets and the view providers consumed by the training loop."""

from __future__ import annotations

import os
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from .augment import STYLE_NAMES, AugmentPipeline, augment_batch, binarize
from .idx import load_idx
from .synth import SynthDataset

DATA_ENV = "SIMVAE_DATA_DIR"
IMAGE_DATASETS = ("mnist", "fashion_mnist")
_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class ImageDataset:
    images: np.ndarray  # (N, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) int64
    name: str = "images"

    def __post_init__(self):
        if self.images.ndim != 3:
            raise DataError(f"images must be (N, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise DataError("pixel values must lie in [0, 1]")
        if self.labels.size and self.labels.min() < 0:
            raise DataError("labels must be non-negative")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def hw(self) -> tuple:
        return self.images.shape[1:]

    def subset(self, n: int) -> "ImageDataset":
        """The first ``n`` items (the whole set when n <= 0 or n >= N)."""
        if n <= 0 or n >= len(self):
            return self
        return ImageDataset(self.images[:n], self.labels[:n], self.name)


def data_root(root=None) -> Path:
    root = root or os.environ.get(DATA_ENV)
    if not root:
        raise DataError(f"no dataset root given; set {DATA_ENV} or pass data_dir")
    return Path(root)


def _find(directory: Path, stem: str) -> Path:
    for cand in (directory / stem, directory / (stem + ".gz")):
        if cand.exists():
            return cand
    raise DataError(f"missing {stem}[.gz] under {directory}")


def load_image_dataset(name: str, split: str = "train", root=None) -> ImageDataset:
    """Load ``<root>/<name>/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]``."""
    if name not in IMAGE_DATASETS:
        raise DataError(f"unknown image dataset {name!r}; expected one of {IMAGE_DATASETS}")
    if split not in _FILES:
        raise DataError(f"split must be 'train' or 'test', got {split!r}")
    directory = data_root(root) / name
    img_file, lbl_file = _FILES[split]
    images = load_idx(_find(directory, img_file))
    labels = load_idx(_find(directory, lbl_file))
    return ImageDataset(images, labels, f"{name}/{split}")


def fingerprint(*arrays) -> str:
    crc = 0
    for a in arrays:
        a = np.ascontiguousarray(a)
        crc = zlib.crc32(repr((a.dtype.str, a.shape)).encode(), crc)
        crc = zlib.crc32(a.tobytes(), crc)
    return f"{crc:08x}"


class ImageViews:
    """Augmented views of an image dataset, flattened to (J, B, H*W)."""

    def __init__(self, dataset: ImageDataset, pipeline: AugmentPipeline, binarized: bool = True):
        self.dataset = dataset
        self.binarized = binarized
        if binarized and not pipeline.binarize:
            pipeline = AugmentPipeline(**{**pipeline.__dict__, "binarize": True})
        self.pipeline = pipeline
        self.images = binarize(dataset.images) if binarized else dataset.images
        self.labels = dataset.labels
        self.name = dataset.name

    @property
    def n_sources(self) -> int:
        return len(self.labels)

    @property
    def in_dim(self) -> int:
        return int(np.prod(self.pipeline.out_hw))

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.dataset.images, self.labels)

    def views(self, idx, J: int, seed: int, epoch: int) -> np.ndarray:
        v, _ = augment_batch(self.images[idx], idx, J, self.pipeline, seed, epoch)
        return v.reshape(J, len(idx), -1)

    def eval_inputs(self):
        """Unaugmented inputs, labels and no style."""
        return self.images.reshape(self.n_sources, -1), self.labels, None, ()

    def styled_inputs(self, seed: int):
        """One augmented view per image with its style parameters."""
        idx = np.arange(self.n_sources)
        v, style = augment_batch(self.images, idx, 1, self.pipeline, seed, 0)
        return v.reshape(self.n_sources, -1), self.labels, style[0], STYLE_NAMES


class SynthViews:
    """The J recorded views of each synthetic source (fixed across epochs)."""

    def __init__(self, dataset: SynthDataset):
        self.dataset = dataset
        self.labels = dataset.y
        self.name = dataset.name

    @property
    def n_sources(self) -> int:
        return self.dataset.n_sources

    @property
    def in_dim(self) -> int:
        return self.dataset.d_x

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.dataset.x, self.dataset.y)

    def views(self, idx, J: int, seed: int, epoch: int) -> np.ndarray:
        if J > self.dataset.J:
            raise DataError(f"dataset has {self.dataset.J} views per source, {J} requested")
        return np.ascontiguousarray(self.dataset.x[idx, :J].transpose(1, 0, 2), dtype=np.float32)

    def eval_inputs(self):
        """Every view as a row; labels repeated; style = offsets delta."""
        ds = self.dataset
        N, J = ds.n_sources, ds.J
        x = ds.x.reshape(N * J, -1).astype(np.float32)
        y = np.repeat(ds.y, J)
        style = ds.delta.reshape(N * J, -1)
        names = tuple(f"delta_{i}" for i in range(style.shape[1]))
        return x, y, style, names

    def styled_inputs(self, seed: int):
        return self.eval_inputs()
