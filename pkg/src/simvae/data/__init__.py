"""Dataset ingestion, augmentation and the synthetic generator."""

from .augment import (
    STYLE_NAMES,
    AugmentPipeline,
    ViewSet,
    augment_batch,
    binarize,
    make_views,
    random_flip,
    random_resized_crop,
    sample_boxes,
    view_rng,
)
from .datasets import (
    DATA_ENV,
    IMAGE_DATASETS,
    ImageDataset,
    ImageViews,
    SynthViews,
    data_root,
    fingerprint,
    load_image_dataset,
)
from .idx import IMAGE_MAGIC, LABEL_MAGIC, load_idx, read_idx, write_idx
from .synth import SynthDataset, exact_posterior_linear_gaussian, synth_generate

__all__ = [
    "DATA_ENV",
    "IMAGE_DATASETS",
    "IMAGE_MAGIC",
    "LABEL_MAGIC",
    "STYLE_NAMES",
    "AugmentPipeline",
    "ImageDataset",
    "ImageViews",
    "SynthDataset",
    "SynthViews",
    "ViewSet",
    "augment_batch",
    "binarize",
    "data_root",
    "exact_posterior_linear_gaussian",
    "fingerprint",
    "load_idx",
    "load_image_dataset",
    "make_views",
    "random_flip",
    "random_resized_crop",
    "read_idx",
    "sample_boxes",
    "synth_generate",
    "view_rng",
    "write_idx",
]
