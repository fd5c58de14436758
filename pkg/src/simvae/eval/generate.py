"""Decoding from frozen representations, class-conditional sampling and image export."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..nn import Adam, MlpSpec, init_params, mlp_forward
from ..numerics import Rng, Tensor, backward, no_grad
from .table import RepresentationTable


@dataclass
class FrozenDecoderResult:
    spec: MlpSpec
    params: dict
    train_mse: list  # per epoch
    val_mse: list  # per epoch
    reconstructions: np.ndarray
    per_image_mse: np.ndarray

    @property
    def mse(self) -> float:
        return float(self.per_image_mse.mean())

    def decode(self, Z) -> np.ndarray:
        with no_grad():
            return mlp_forward(self.spec, self.params, np.asarray(Z, dtype=np.float32), "decoder").data


def frozen_decoder_train(table: RepresentationTable, x, decoder: MlpSpec, lr: float = 1e-4, max_epochs: int = 100,
                         batch_size: int = 128, patience: int = 5, val_frac: float = 0.1,
                         seed: int = 0) -> FrozenDecoderResult:
    """Fit a fresh decoder by MSE on fixed representations; stop when validation MSE plateaus.

    ``x`` holds the flattened targets aligned with ``table`` rows. Only the
    decoder receives gradients. The parameters with the best validation
    MSE are kept, and the returned reconstructions cover every row.
    """
    Z = np.asarray(table.Z, dtype=np.float32)
    x = np.asarray(x, dtype=np.float32).reshape(len(table), -1)
    if decoder.in_dim != Z.shape[1] or decoder.out_dim != x.shape[1]:
        raise DataError(f"decoder {decoder.widths} does not map {Z.shape[1]} -> {x.shape[1]}")
    rng = Rng(seed)
    perm = rng.stream("split").permutation(len(x))
    n_val = max(1, int(round(val_frac * len(x))))
    val, tr = perm[:n_val], perm[n_val:]
    params = init_params(decoder, rng.stream("init"), "decoder")
    opt = Adam(params, lr)
    best = (np.inf, None)
    train_mse, val_mse, stale = [], [], 0
    for epoch in range(max_epochs):
        order = tr[rng.stream("order", epoch).permutation(len(tr))]
        total = 0.0
        for s in range(0, len(order), batch_size):
            idx = order[s:s + batch_size]
            opt.zero_grad()
            err = mlp_forward(decoder, params, Z[idx], "decoder") - Tensor(x[idx])
            loss = err.square().mean()
            backward(loss)
            opt.step()
            total += loss.item() * len(idx)
        train_mse.append(total / len(order))
        with no_grad():
            v = float(np.mean((mlp_forward(decoder, params, Z[val], "decoder").data - x[val]) ** 2))
        val_mse.append(v)
        if v < best[0] - 1e-7:
            best = (v, {k: p.data.copy() for k, p in params.items()})
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    final = {k: Tensor(a) for k, a in best[1].items()}
    with no_grad():
        rec = mlp_forward(decoder, final, Z, "decoder").data
    per_image = np.mean((rec.astype(np.float64) - x) ** 2, axis=1)
    return FrozenDecoderResult(decoder, final, train_mse, val_mse, rec, per_image)


def fit_class_gaussian(table: RepresentationTable, c: int, reg: float = 1e-6):
    """Mean and covariance of the representations of class ``c``; ridge added if singular."""
    Zc = table.Z[table.y == c]
    if len(Zc) == 0:
        raise DataError(f"class {c} is not present in the table")
    mean = Zc.mean(0)
    cov = np.cov(Zc.T, bias=True).reshape(table.dim, table.dim) if len(Zc) > 1 else np.zeros((table.dim,) * 2)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        warnings.warn(f"class {c} covariance is singular; adding ridge {reg:g}", RuntimeWarning, stacklevel=2)
        scale = max(reg, reg * np.trace(cov) / table.dim)
        L = np.linalg.cholesky(cov + scale * np.eye(table.dim))
    return mean, L


def conditional_generate(table: RepresentationTable, decode, c: int, n: int, seed: int = 0):
    """Sample ``n`` latents from a Gaussian fitted to class ``c`` and decode them.

    ``decode`` maps an (n, d) array to (n, D) outputs (a model's decoder or a
    :class:`FrozenDecoderResult`). Returns (images, latents).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    mean, L = fit_class_gaussian(table, c)
    eps = Rng(seed).stream("generate", c).normal((n, table.dim))
    Z = mean + eps @ L.T
    if n == 0:
        return np.zeros((0, 0), dtype=np.float32), Z
    if hasattr(decode, "decode"):
        decode = decode.decode
    with no_grad():
        out = decode(Z.astype(np.float32))
    out = out.data if isinstance(out, Tensor) else np.asarray(out)
    return out, Z


def to_uint8(img) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img, binary: bool = True) -> None:
    """Write a [0, 1] grayscale image as PGM (P5 binary or P2 text)."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise DataError(f"PGM needs a 2-d image, got {img.shape}")
    data = to_uint8(img)
    h, w = data.shape
    if binary:
        Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + data.tobytes())
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in data)
        Path(path).write_text(f"P2\n{w} {h}\n255\n{rows}\n")


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end].decode("ascii"))
        pos = end
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        data = np.frombuffer(raw, dtype=np.uint8, count=w * h, offset=pos + 1)
    elif magic == "P2":
        data = np.array(raw[pos:].split(), dtype=np.int64)[: w * h]
    else:
        raise DataError(f"{path}: not a PGM file")
    return data.reshape(h, w).astype(np.float64) / maxval


def image_grid(images, hw, ncols: int = 8, pad: int = 1) -> np.ndarray:
    images = np.asarray(images).reshape(-1, *hw)
    n = len(images)
    nrows = max(1, -(-n // ncols))
    H, W = hw
    grid = np.zeros((nrows * (H + pad) + pad, ncols * (W + pad) + pad))
    for i, im in enumerate(images):
        r, c = divmod(i, ncols)
        grid[pad + r * (H + pad): pad + r * (H + pad) + H, pad + c * (W + pad): pad + c * (W + pad) + W] = im
    return grid

