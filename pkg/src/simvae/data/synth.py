"""Synthetic data drawn from the hierarchical model with a linear-Gaussian decoder.

    psi_c ~ N(0, gamma^2 I)                       one mean per class
    z^j   ~ N(psi_y, sigma^2 I),  j = 1..J        related latents of one source
    x^j   = W z^j + b + eps,  eps ~ N(0, sigma_x^2 I)

W has unit-norm columns. The style offsets delta^j = z^j - psi_y are kept,
so how much within-class information a representation retains can be
measured directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import container
from ..errors import DataError, NumericError
from ..numerics import Rng


@dataclass
class SynthDataset:
    x: np.ndarray  # (N, J, d_x)
    z: np.ndarray  # (N, J, d_z)
    delta: np.ndarray  # (N, J, d_z)
    y: np.ndarray  # (N,)
    psi: np.ndarray  # (C, d_z)
    W: np.ndarray  # (d_x, d_z)
    b: np.ndarray  # (d_x,)
    params: dict = field(default_factory=dict)
    name: str = "synth"

    @property
    def n_sources(self) -> int:
        return self.x.shape[0]

    @property
    def J(self) -> int:
        return self.x.shape[1]

    @property
    def d_x(self) -> int:
        return self.x.shape[2]

    @property
    def n_classes(self) -> int:
        return self.psi.shape[0]

    def save(self, path) -> None:
        meta = {"kind": "synth", "name": self.name, "params": self.params}
        arrays = {"x": self.x, "z": self.z, "delta": self.delta, "y": self.y,
                  "psi": self.psi, "W": self.W, "b": self.b}
        container.write_container(path, meta, arrays)

    @classmethod
    def load(cls, path) -> "SynthDataset":
        meta, arrays = container.read_container(path)
        if meta.get("kind") != "synth":
            raise DataError(f"{path}: not a synthetic dataset (kind={meta.get('kind')!r})")
        return cls(params=meta["params"], name=meta.get("name", "synth"), **arrays)


def synth_generate(C: int, n_per_class: int, J: int, gamma: float, sigma: float, d_z: int, d_x: int,
                   sigma_x: float, seed: int) -> SynthDataset:
    if min(C, n_per_class, J, d_z, d_x) < 1:
        raise ValueError("counts and dimensions must be positive")
    if gamma <= 0 or sigma < 0 or sigma_x < 0:
        raise ValueError("gamma must be positive; sigma and sigma_x non-negative")
    rng = Rng(seed)
    psi = rng.stream("psi").normal((C, d_z)) * gamma
    W = rng.stream("W").normal((d_x, d_z))
    W /= np.linalg.norm(W, axis=0, keepdims=True)
    b = rng.stream("b").normal(d_x)
    y = np.repeat(np.arange(C, dtype=np.int64), n_per_class)
    N = C * n_per_class
    delta = rng.stream("delta").normal((N, J, d_z)) * sigma
    z = psi[y][:, None, :] + delta
    noise = rng.stream("noise").normal((N, J, d_x)) * sigma_x
    x = z @ W.T + b + noise
    params = dict(C=C, n_per_class=n_per_class, J=J, gamma=gamma, sigma=sigma, d_z=d_z, d_x=d_x,
                  sigma_x=sigma_x, seed=seed)
    return SynthDataset(x=x, z=z, delta=delta, y=y, psi=psi, W=W, b=b, params=params)


def exact_posterior_linear_gaussian(x, W, b, var_x: float, prior_var: float):
    """Posterior of z ~ N(0, prior_var I) given x = W z + b + N(0, var_x I).

    Returns (mean, covariance); ``x`` may be a single vector or a batch (n, d_x).
    """
    W = np.asarray(W, dtype=np.float64)
    d = W.shape[1]
    precision = np.eye(d) / prior_var + W.T @ W / var_x
    try:
        cov = np.linalg.inv(precision)
    except np.linalg.LinAlgError:
        raise NumericError("posterior precision matrix is singular") from None
    if not np.all(np.isfinite(cov)):
        raise NumericError("posterior covariance is not finite")
    resid = np.asarray(x, dtype=np.float64) - b
    mean = resid @ W @ cov.T / var_x
    return mean, cov
