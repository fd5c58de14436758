"""Frozen representations with aligned labels and optional style variables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..errors import DataError


@dataclass
class RepresentationTable:
    Z: np.ndarray  # (N, d)
    y: np.ndarray  # (N,)
    S: np.ndarray | None = None  # (N, s) style variables
    style_names: tuple = ()
    source: np.ndarray | None = None  # (N,) source index of each row
    checkpoint_id: str = ""
    dataset_id: str = ""
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.Z = np.asarray(self.Z, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.Z.ndim != 2:
            raise DataError(f"Z must be (N, d), got {self.Z.shape}")
        n = len(self.Z)
        if len(self.y) != n:
            raise DataError(f"{n} representations but {len(self.y)} labels")
        if not np.all(np.isfinite(self.Z)):
            raise DataError("representation table contains non-finite entries")
        if self.S is not None:
            self.S = np.asarray(self.S, dtype=np.float64).reshape(n, -1)
            if not self.style_names:
                self.style_names = tuple(f"style_{i}" for i in range(self.S.shape[1]))
            if len(self.style_names) != self.S.shape[1]:
                raise DataError("style_names must name every style column")
        if self.source is None:
            self.source = np.arange(n, dtype=np.int64)
        self.source = np.asarray(self.source, dtype=np.int64)
        for k, v in self.aux.items():
            if len(v) != n:
                raise DataError(f"aux array {k!r} is not row-aligned")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    def take(self, rows) -> "RepresentationTable":
        rows = np.asarray(rows)
        return RepresentationTable(
            self.Z[rows], self.y[rows], None if self.S is None else self.S[rows], self.style_names,
            self.source[rows], self.checkpoint_id, self.dataset_id, {k: v[rows] for k, v in self.aux.items()},
        )

    def split_by_source(self, frac: float = 0.8, seed: int = 0):
        """(train, test) with every row of a source on the same side."""
        from ..numerics import Rng

        sources = np.unique(self.source)
        perm = Rng(seed).stream("split").permutation(len(sources))
        n_train = int(round(frac * len(sources)))
        train_src = np.zeros(sources.max() + 1, dtype=bool)
        train_src[sources[perm[:n_train]]] = True
        mask = train_src[self.source]
        return self.take(np.flatnonzero(mask)), self.take(np.flatnonzero(~mask))

    def save(self, path) -> None:
        meta = {"kind": "reps", "style_names": list(self.style_names), "checkpoint_id": self.checkpoint_id,
                "dataset_id": self.dataset_id, "aux": sorted(self.aux)}
        arrays = {"Z": self.Z, "y": self.y, "source": self.source}
        if self.S is not None:
            arrays["S"] = self.S
        arrays.update({f"aux/{k}": v for k, v in self.aux.items()})
        container.write_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "RepresentationTable":
        meta, arrays = container.read_container(path)
        if meta.get("kind") != "reps":
            raise DataError(f"{path}: not a representation table (kind={meta.get('kind')!r})")
        return cls(arrays["Z"], arrays["y"], arrays.get("S"), tuple(meta["style_names"]), arrays["source"],
                   meta["checkpoint_id"], meta["dataset_id"], {k: arrays[f"aux/{k}"] for k in meta["aux"]})
