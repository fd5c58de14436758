"""MLP encoder/decoder with Gaussian heads, Adam, and checkpoint persistence."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import container
from .errors import (
    CheckpointFormatError,
    CheckpointMismatchError,
    CheckpointVersionError,
    DimensionError,
    NumericError,
)
from .numerics import Rng, RNG_ALGORITHM, Tensor, exp, get_dtype, matmul, relu

CHECKPOINT_VERSION = 1
INIT_SCHEME = "normal(0, sqrt(2/fan_in)) for relu layers, normal(0, sqrt(1/fan_in)) otherwise; zero biases"


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths including the input width, one activation per layer."""

    widths: tuple
    activations: tuple

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        acts = tuple(self.activations)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "activations", acts)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least one layer")
        if any(w <= 0 for w in widths):
            raise ValueError(f"layer widths must be positive: {widths}")
        if len(acts) != len(widths) - 1:
            raise ValueError("need one activation per layer")
        if any(a not in ("relu", "none") for a in acts):
            raise ValueError(f"unsupported activation in {acts}")

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @classmethod
    def relu_mlp(cls, widths) -> "MlpSpec":
        """ReLU on every hidden layer, linear output layer."""
        n = len(widths) - 1
        return cls(tuple(widths), ("relu",) * (n - 1) + ("none",))

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "activations": list(self.activations)}

    @classmethod
    def from_dict(cls, d) -> "MlpSpec":
        return cls(tuple(d["widths"]), tuple(d["activations"]))


def encoder_spec(in_dim: int, hidden, latent_dim: int) -> MlpSpec:
    return MlpSpec.relu_mlp([in_dim, *hidden, 2 * latent_dim])


def decoder_spec(latent_dim: int, hidden, out_dim: int) -> MlpSpec:
    return MlpSpec.relu_mlp([latent_dim, *hidden, out_dim])


# 784-500-500-2000 trunk; the last layer is doubled into mean and log-variance heads.
MNIST_ENCODER_HIDDEN = (500, 500, 2000)
MNIST_DECODER_HIDDEN = (2000, 500, 500)


def init_params(spec: MlpSpec, rng: Rng, prefix: str) -> dict:
    params = {}
    dtype = get_dtype()
    for i in range(spec.n_layers):
        fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
        gain = 2.0 if spec.activations[i] == "relu" else 1.0
        w = rng.normal((fan_in, fan_out)) * np.sqrt(gain / fan_in)
        params[f"{prefix}.{i}.weight"] = Tensor(w.astype(dtype), requires_grad=True)
        params[f"{prefix}.{i}.bias"] = Tensor(np.zeros(fan_out, dtype=dtype), requires_grad=True)
    return params


def mlp_forward(spec: MlpSpec, params: dict, x, prefix: str) -> Tensor:
    h = x if isinstance(x, Tensor) else Tensor(x)
    if h.ndim != 2 or h.shape[1] != spec.in_dim:
        raise DimensionError(f"{prefix}: expected input width {spec.in_dim}, got shape {h.shape}")
    for i in range(spec.n_layers):
        h = matmul(h, params[f"{prefix}.{i}.weight"]) + params[f"{prefix}.{i}.bias"]
        if spec.activations[i] == "relu":
            h = relu(h)
        if not np.all(np.isfinite(h.data)):
            raise NumericError(f"non-finite activations in layer {prefix}.{i}")
    return h


class GaussianPosterior(NamedTuple):
    mu: Tensor
    logvar: Tensor


def reparameterize(post: GaussianPosterior, eps) -> Tensor:
    """z = mu + exp(logvar / 2) * eps."""
    eps = eps if isinstance(eps, Tensor) else Tensor(eps)
    if eps.shape != post.mu.shape:
        raise DimensionError(f"noise shape {eps.shape} != posterior shape {post.mu.shape}")
    return post.mu + exp(post.logvar * 0.5) * eps


@dataclass
class Model:
    encoder: MlpSpec
    decoder: MlpSpec | None
    params: dict = field(default_factory=dict)

    @classmethod
    def build(cls, encoder: MlpSpec, decoder: MlpSpec | None, rng: Rng) -> "Model":
        if encoder.out_dim % 2:
            raise ValueError("Gaussian encoder needs an even output width (mean and log-variance)")
        if decoder is not None and decoder.in_dim != encoder.out_dim // 2:
            raise ValueError("decoder input width must equal the latent dimension")
        params = init_params(encoder, rng.stream("init", "encoder"), "encoder")
        if decoder is not None:
            params.update(init_params(decoder, rng.stream("init", "decoder"), "decoder"))
        return cls(encoder, decoder, params)

    @property
    def latent_dim(self) -> int:
        return self.encoder.out_dim // 2

    def encode(self, x) -> GaussianPosterior:
        out = mlp_forward(self.encoder, self.params, x, "encoder")
        L = self.latent_dim
        return GaussianPosterior(out[:, :L], out[:, L:])

    def decode(self, z) -> Tensor:
        if self.decoder is None:
            raise ValueError("model has no decoder")
        return mlp_forward(self.decoder, self.params, z, "decoder")

    def parameters(self) -> list:
        return list(self.params.values())

    def state_arrays(self) -> dict:
        return {k: v.data for k, v in self.params.items()}


def encode(model: Model, x) -> GaussianPosterior:
    return model.encode(x)


def decode(model: Model, z) -> Tensor:
    return model.decode(z)


# -- Adam ---------------------------------------------------------------------
def adam_step(params: dict, grads: dict, state: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> None:
    """One bias-corrected Adam update, applied in place.

    ``state`` holds ``t`` (steps taken so far) and per-parameter ``m``/``v``.
    All gradients are checked before any parameter moves.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}; step aborted")
    t = state.get("t", 0) + 1
    m_all = state.setdefault("m", {})
    v_all = state.setdefault("v", {})
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.items():
        g = grads.get(name)
        data = p.data if isinstance(p, Tensor) else p
        if g is None:
            g = np.zeros_like(data)
        m = m_all.get(name)
        v = v_all.get(name)
        if m is None:
            m = np.zeros_like(data)
            v = np.zeros_like(data)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        m_all[name], v_all[name] = m, v
        mhat = m / c1
        vhat = v / c2
        data -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(data.dtype, copy=False)
    state["t"] = t


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict = {"t": 0, "m": {}, "v": {}}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        grads = {k: p.grad for k, p in self.params.items()}
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)


# -- checkpoints --------------------------------------------------------------
@dataclass
class ModelCheckpoint:
    encoder: MlpSpec
    decoder: MlpSpec | None
    params: dict
    optimizer: dict | None = None
    seed: int = 0
    epoch: int = 0
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def to_model(self) -> Model:
        model = Model(self.encoder, self.decoder, {})
        expected = {}
        expected.update(_param_shapes(self.encoder, "encoder"))
        if self.decoder is not None:
            expected.update(_param_shapes(self.decoder, "decoder"))
        for name, shape in expected.items():
            if name not in self.params:
                raise CheckpointMismatchError(f"missing parameter {name!r}")
            if tuple(self.params[name].shape) != shape:
                raise CheckpointMismatchError(
                    f"parameter {name!r} has shape {self.params[name].shape}, architecture needs {shape}"
                )
        for name, arr in self.params.items():
            model.params[name] = Tensor(arr.copy(), requires_grad=True, dtype=arr.dtype)
        return model

    @classmethod
    def from_model(cls, model: Model, optimizer: Adam | None = None, **kw) -> "ModelCheckpoint":
        opt = None
        if optimizer is not None:
            opt = {
                "t": optimizer.state["t"],
                "m": {k: v.copy() for k, v in optimizer.state["m"].items()},
                "v": {k: v.copy() for k, v in optimizer.state["v"].items()},
            }
        params = {k: v.data.copy() for k, v in model.params.items()}
        return cls(model.encoder, model.decoder, params, opt, **kw)


def _param_shapes(spec: MlpSpec, prefix: str) -> dict:
    out = {}
    for i in range(spec.n_layers):
        out[f"{prefix}.{i}.weight"] = (spec.widths[i], spec.widths[i + 1])
        out[f"{prefix}.{i}.bias"] = (spec.widths[i + 1],)
    return out


def save_checkpoint(path, ckpt: ModelCheckpoint) -> None:
    meta = {
        "kind": "model",
        "checkpoint_version": ckpt.version,
        "encoder": ckpt.encoder.to_dict(),
        "decoder": None if ckpt.decoder is None else ckpt.decoder.to_dict(),
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "rng_algorithm": RNG_ALGORITHM,
        "init_scheme": INIT_SCHEME,
        "param_names": list(ckpt.params),
        "optimizer_t": None if ckpt.optimizer is None else ckpt.optimizer["t"],
        "config": ckpt.config,
        "extra": ckpt.extra,
    }
    arrays = {f"param/{k}": v for k, v in ckpt.params.items()}
    if ckpt.optimizer is not None:
        for k in ckpt.params:
            if k in ckpt.optimizer["m"]:
                arrays[f"adam_m/{k}"] = ckpt.optimizer["m"][k]
                arrays[f"adam_v/{k}"] = ckpt.optimizer["v"][k]
    container.write_container(path, meta, arrays)


def load_checkpoint(path) -> ModelCheckpoint:
    meta, arrays = container.read_container(path)
    if meta.get("kind") != "model":
        raise CheckpointFormatError(f"{path}: not a model checkpoint (kind={meta.get('kind')!r})")
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: checkpoint version {meta.get('checkpoint_version')}, expected {CHECKPOINT_VERSION}"
        )
    params = {}
    for name in meta["param_names"]:
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointMismatchError(f"{path}: parameter table lacks {name!r}")
        params[name] = arrays[key]
    opt = None
    if meta["optimizer_t"] is not None:
        opt = {"t": meta["optimizer_t"], "m": {}, "v": {}}
        for name in meta["param_names"]:
            if f"adam_m/{name}" in arrays:
                opt["m"][name] = arrays[f"adam_m/{name}"]
                opt["v"][name] = arrays[f"adam_v/{name}"]
    dec = meta["decoder"]
    return ModelCheckpoint(
        encoder=MlpSpec.from_dict(meta["encoder"]),
        decoder=None if dec is None else MlpSpec.from_dict(dec),
        params=params,
        optimizer=opt,
        seed=meta["seed"],
        epoch=meta["epoch"],
        config=meta["config"],
        extra=meta["extra"],
        version=meta["checkpoint_version"],
    )
