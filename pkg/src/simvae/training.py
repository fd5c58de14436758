"""Training loop, configuration, checkpointed resume and representation export.

One epoch: shuffle the sources with a per-epoch stream, cut them into
batches of ``batch_size`` sources, build J views per source, encode,
reparameterise, decode, evaluate the selected loss, backpropagate and take
one Adam step. Every random draw comes from a stream keyed by
(seed, purpose, epoch, step or source index), so a resumed run replays
exactly what an unbroken run would have done.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import AugmentPipeline, ImageViews, SynthDataset, SynthViews, fingerprint, load_image_dataset
from .errors import ConfigError, DataError, NumericError, ResumeError, TrainingError
from .eval.knn import knn_sweep
from .eval.table import RepresentationTable
from .losses import (
    SIMVAE_MODES,
    LossBreakdown,
    info_nce_loss,
    instance_discrimination_loss,
    simvae_loss,
    vae_loss,
)
from .nn import (
    MNIST_DECODER_HIDDEN,
    MNIST_ENCODER_HIDDEN,
    Adam,
    Model,
    ModelCheckpoint,
    decoder_spec,
    encoder_spec,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
)
from .numerics import Rng, Tensor, backward, no_grad, precision

LOSSES = ("simvae", "vae", "beta_vae", "infonce", "instance_disc")
DATASETS = ("mnist", "fashion_mnist", "synth")
METRICS_COLUMNS = ("epoch", "step", "loss_total", "loss_recon", "loss_entropy", "loss_prior", "loss_extra",
                   "lr", "seconds")
# Keys that may change between a checkpoint and its resumption.
RESUMABLE_KEYS = ("epochs", "checkpoint_every", "eval_every", "log_timing")


def _tuple_of_ints(v) -> tuple:
    if isinstance(v, str):
        v = [p for p in v.replace(" ", "").split(",") if p]
    return tuple(int(p) for p in v)


@dataclass
class TrainConfig:
    loss: str = "simvae"
    mode: str = "exact_elbo"
    lr: float = 8e-5
    batch_size: int = 128
    epochs: int = 10
    J: int = 10
    latent_dim: int = 10
    prior_var: float = 0.15
    likelihood_var: float = 0.02
    beta: float | None = None
    tau: float = 0.7
    seed: int = 0
    n_samples: int = 1
    dataset: str = "mnist"
    data_dir: str = ""
    data_path: str = ""
    train_subset: int = 0
    binarize: bool = True
    crop: bool = True
    crop_scale_lo: float = 0.4
    crop_ratio_lo: float = 0.75
    crop_ratio_hi: float = 1.3
    flip_p: float = 0.5
    flip_axis: str = "horizontal"
    interpolation: str = "bilinear"
    encoder_hidden: tuple = MNIST_ENCODER_HIDDEN
    decoder_hidden: tuple = MNIST_DECODER_HIDDEN
    class_init_std: float = 0.01
    eval_every: int = 0
    checkpoint_every: int = 0
    max_batch_items: int = 16384
    log_timing: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        self.encoder_hidden = _tuple_of_ints(self.encoder_hidden)
        self.decoder_hidden = _tuple_of_ints(self.decoder_hidden)

    @classmethod
    def keys(cls) -> tuple:
        return tuple(f.name for f in dataclasses.fields(cls))

    def validate(self) -> "TrainConfig":
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.mode not in SIMVAE_MODES:
            raise ConfigError(f"mode must be one of {SIMVAE_MODES}, got {self.mode!r}")
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        for name in ("lr", "prior_var", "likelihood_var", "tau", "class_init_std"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("batch_size", "epochs", "J", "latent_dim", "n_samples", "max_batch_items"):
            if getattr(self, name) < (0 if name == "epochs" else 1):
                raise ConfigError(f"{name} must be positive")
        if self.loss == "beta_vae" and self.beta is None:
            raise ConfigError("beta_vae needs an explicit beta")
        if self.beta is not None and not self.beta > 0:
            raise ConfigError("beta must be positive")
        if self.loss == "infonce" and self.J < 2:
            raise ConfigError("infonce needs J >= 2 views per source")
        if self.dataset == "synth" and not self.data_path:
            raise ConfigError("dataset=synth needs data_path")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if not 0 < self.crop_scale_lo <= 1 or not 0 < self.crop_ratio_lo <= self.crop_ratio_hi:
            raise ConfigError("invalid crop parameters")
        if not 0 <= self.flip_p <= 1:
            raise ConfigError("flip_p must lie in [0, 1]")
        if self.flip_axis not in ("horizontal", "vertical"):
            raise ConfigError("flip_axis must be horizontal or vertical")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ConfigError("interpolation must be bilinear or nearest")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        d["decoder_hidden"] = list(self.decoder_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = sorted(set(d) - set(cls.keys()))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def to_text(self) -> str:
        lines = []
        for k, v in self.to_dict().items():
            if v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


# Desk-scale settings for the synthetic hierarchical data (d_x=20, d_z=4): a
# small MLP, prior variance sigma^2 = 0.04 and likelihood variance sigma_x^2 = 0.01.
SYNTH_TRAIN_DEFAULTS = {"dataset": "synth", "J": 2, "latent_dim": 4, "encoder_hidden": (128, 128),
                        "decoder_hidden": (128, 128), "lr": 1e-3, "prior_var": 0.04, "likelihood_var": 0.01,
                        "epochs": 50}


def synth_config(data_path, **kw) -> TrainConfig:
    """Desk-scale training config for a synthetic dataset file; ``kw`` overrides any key."""
    return TrainConfig(**{**SYNTH_TRAIN_DEFAULTS, "data_path": str(data_path), **kw}).validate()


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce(key: str, raw: str):
    t = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if "bool" in t:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if "None" in t and raw.lower() in ("none", ""):
            return None
        if t.startswith("float"):
            return float(raw)
        if t == "int":
            return int(raw)
        if t == "tuple":
            return _tuple_of_ints(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None
    return raw


def parse_overrides(items) -> dict:
    """``["key=value", ...]`` (or text lines ``key = value``) to a typed dict."""
    out = {}
    for item in items:
        line = item.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, value)
    return out


def parse_config_text(text: str) -> dict:
    return parse_overrides(text.splitlines())


def load_config(path=None, overrides=(), **kw) -> TrainConfig:
    values = {}
    if path:
        values.update(parse_config_text(Path(path).read_text()))
    values.update(kw)
    values.update(parse_overrides(overrides))
    return TrainConfig.from_dict(values).validate()


def config_diff(a: dict, b: dict, ignore=()) -> list:
    keys = sorted(set(a) | set(b))
    return [f"{k}: {a.get(k)!r} -> {b.get(k)!r}" for k in keys if k not in ignore and a.get(k) != b.get(k)]


# -- data ---------------------------------------------------------------------
def pipeline_from_config(cfg: TrainConfig, out_hw=(28, 28)) -> AugmentPipeline:
    return AugmentPipeline(crop=cfg.crop, scale_lo=cfg.crop_scale_lo, ratio=(cfg.crop_ratio_lo, cfg.crop_ratio_hi),
                           flip_p=cfg.flip_p, flip_axis=cfg.flip_axis, out_hw=tuple(out_hw),
                           interpolation=cfg.interpolation, binarize=cfg.binarize)


def build_source(cfg: TrainConfig, split: str = "train"):
    """Training view provider for the configured dataset (images or synthetic)."""
    if cfg.dataset == "synth":
        return SynthViews(SynthDataset.load(cfg.data_path))
    ds = load_image_dataset(cfg.dataset, split, cfg.data_dir or None)
    if split == "train":
        ds = ds.subset(cfg.train_subset)
    return ImageViews(ds, pipeline_from_config(cfg, ds.hw), binarized=cfg.binarize)


def eval_sources(cfg: TrainConfig, source=None):
    """(train, test) providers for evaluation; synthetic data has no test split (see ``split_tables``)."""
    train_src = source if source is not None else build_source(cfg, "train")
    if cfg.dataset == "synth":
        return train_src, None
    return train_src, build_source(cfg, "test")


# -- model --------------------------------------------------------------------
def build_model(cfg: TrainConfig, in_dim: int, n_sources: int) -> Model:
    rng = Rng(cfg.seed)
    enc = encoder_spec(in_dim, cfg.encoder_hidden, cfg.latent_dim)
    dec = decoder_spec(cfg.latent_dim, cfg.decoder_hidden, in_dim) if cfg.loss in ("simvae", "vae", "beta_vae") else None
    model = Model.build(enc, dec, rng)
    if cfg.loss == "instance_disc":
        w = rng.stream("init", "class_matrix").normal((n_sources, cfg.latent_dim)) * cfg.class_init_std
        model.params["head.class_matrix"] = Tensor(w.astype(model.params["encoder.0.weight"].dtype),
                                                   requires_grad=True)
    return model


def _mean_breakdown(parts: list) -> LossBreakdown:
    if len(parts) == 1:
        return parts[0]
    s = 1.0 / len(parts)
    extra = {k: sum((p.extra[k] for p in parts[1:]), parts[0].extra[k]) * s for k in parts[0].extra}
    return LossBreakdown(
        total=sum((p.total for p in parts[1:]), parts[0].total) * s,
        recon=sum((p.recon for p in parts[1:]), parts[0].recon) * s,
        entropy=sum((p.entropy for p in parts[1:]), parts[0].entropy) * s,
        prior=sum((p.prior for p in parts[1:]), parts[0].prior) * s,
        extra=extra,
    )


def compute_loss(model: Model, cfg: TrainConfig, x: np.ndarray, idx: np.ndarray, rng: Rng) -> LossBreakdown:
    """Selected loss for views ``x`` (J, B, D) of sources ``idx``."""
    J, B, D = x.shape
    L = cfg.latent_dim
    dtype = model.params["encoder.0.weight"].dtype
    post = model.encode(x.reshape(J * B, D))
    if cfg.loss in ("vae", "beta_vae"):
        beta = cfg.beta if cfg.loss == "beta_vae" else 1.0
        parts = []
        for s in range(cfg.n_samples):
            z = reparameterize(post, rng.stream("eps", s).normal((J * B, L), dtype))
            parts.append(vae_loss(x.reshape(J * B, D), model.decode(z), post, cfg.likelihood_var, beta))
        return _mean_breakdown(parts)
    if cfg.loss == "simvae":
        mu, logvar = post.mu.reshape(J, B, L), post.logvar.reshape(J, B, L)
        parts = []
        for s in range(cfg.n_samples):
            z = reparameterize(post, rng.stream("eps", s).normal((J * B, L), dtype))
            xr = model.decode(z).reshape(J, B, D)
            parts.append(simvae_loss(x, xr, (mu, logvar), z.reshape(J, B, L), cfg.prior_var, cfg.likelihood_var,
                                     cfg.mode))
        return _mean_breakdown(parts)
    mu = post.mu
    if cfg.loss == "infonce":
        mu = mu.reshape(J, B, L)
        parts = [info_nce_loss(mu[j], mu[k], cfg.tau) for j in range(J) for k in range(j + 1, J)]
        return _mean_breakdown(parts)
    return instance_discrimination_loss(mu, np.tile(idx, J), model.params["head.class_matrix"])


def _check_finite(lb: LossBreakdown, epoch: int, batch: int) -> None:
    terms = {"total": lb.total, "recon": lb.recon, "entropy": lb.entropy, "prior": lb.prior, **lb.extra}
    bad = [k for k, v in terms.items() if not np.isfinite(float(v.data))]
    if bad:
        raise TrainingError(f"non-finite loss term(s) {', '.join(bad)} at epoch {epoch}, batch {batch}; "
                            "no update applied")


# -- training -----------------------------------------------------------------
@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    model: Model
    rows: list
    out_dir: Path | None = None
    checkpoint_path: Path | None = None
    metrics_path: Path | None = None
    messages: list = field(default_factory=list)


def _format_row(row: dict) -> dict:
    out = {}
    for k in METRICS_COLUMNS:
        v = row[k]
        out[k] = "" if v is None else (str(v) if isinstance(v, (int, np.integer)) else repr(float(v)))
    return out


def metrics_text(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRICS_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(_format_row(r))
    return buf.getvalue()


def read_metrics(path) -> list:
    with Path(path).open(newline="") as f:
        rows = []
        for r in csv.DictReader(f):
            rows.append({k: (int(v) if k in ("epoch", "step") else (float(v) if v else None)) for k, v in r.items()})
        return rows


def _effective_batch(cfg: TrainConfig) -> int:
    bs = cfg.batch_size
    if bs * cfg.J > cfg.max_batch_items:
        bs = max(1, cfg.max_batch_items // cfg.J)
        warnings.warn(f"batch_size {cfg.batch_size} x J {cfg.J} exceeds max_batch_items {cfg.max_batch_items}; "
                      f"using batch_size {bs}", RuntimeWarning, stacklevel=3)
    return bs


def _ckpt_extra(source, step: int, rows: list, bs: int) -> dict:
    return {"dataset": source.name, "dataset_fingerprint": source.fingerprint, "n_sources": source.n_sources,
            "in_dim": source.in_dim, "step": step, "batch_size_effective": bs,
            "metrics_rows": [_format_row(r) for r in rows]}


def _run(cfg: TrainConfig, source, model: Model, opt: Adam, start_epoch: int, step: int, rows: list,
         out_dir: Path | None, eval_fn=None) -> TrainResult:
    bs = _effective_batch(cfg)
    N = source.n_sources
    master = Rng(cfg.seed)
    ckpt_dir = metrics_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        metrics_path = out_dir / "metrics.csv"
        metrics_path.write_text(metrics_text(rows))
    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        order = master.stream("shuffle", epoch).permutation(N)
        sums = dict.fromkeys(("total", "recon", "entropy", "prior", "extra"), 0.0)
        batches = [order[s:s + bs] for s in range(0, N, bs)]
        if cfg.loss == "infonce" and len(batches) > 1 and len(batches[-1]) < 2:
            batches[-2] = np.concatenate(batches[-2:])
            batches.pop()
        for b, idx in enumerate(batches):
            x = source.views(idx, cfg.J, cfg.seed, epoch)
            opt.zero_grad()
            try:
                lb = compute_loss(model, cfg, x, idx, master.stream("sample", epoch, b))
            except NumericError as e:
                raise TrainingError(f"epoch {epoch}, batch {b}: {e}; no update applied") from e
            _check_finite(lb, epoch, b)
            backward(lb.total)
            opt.step()
            step += 1
            f = lb.as_floats()
            for k in sums:
                sums[k] += f[k] * len(idx)
        row = {"epoch": epoch, "step": step, "lr": cfg.lr,
               "seconds": (time.perf_counter() - t0) if cfg.log_timing else None}
        for k, v in sums.items():
            row[f"loss_{k}"] = v / N
        rows.append(row)
        if metrics_path is not None:
            with metrics_path.open("a") as fh:
                fh.write(metrics_text([row]).split("\n", 1)[1])
        if eval_fn is not None and cfg.eval_every and epoch % cfg.eval_every == 0:
            eval_fn(model, epoch)
        if ckpt_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            ck = ModelCheckpoint.from_model(model, opt, seed=cfg.seed, epoch=epoch, config=cfg.to_dict(),
                                            extra=_ckpt_extra(source, step, rows, bs))
            save_checkpoint(ckpt_dir / f"epoch_{epoch:04d}.svae", ck)
    final_epoch = max(start_epoch, cfg.epochs)
    ck = ModelCheckpoint.from_model(model, opt, seed=cfg.seed, epoch=final_epoch, config=cfg.to_dict(),
                                    extra=_ckpt_extra(source, step, rows, bs))
    ck_path = None
    if ckpt_dir is not None:
        ck_path = ckpt_dir / "final.svae"
        save_checkpoint(ck_path, ck)
    return TrainResult(ck, model, rows, out_dir, ck_path, metrics_path)


def _make_eval_fn(cfg: TrainConfig, source, out_dir: Path | None):
    if not cfg.eval_every or out_dir is None:
        return None
    train_src, test_src = eval_sources(cfg, source)
    log = out_dir / "eval_log.csv"
    log.write_text("epoch,knn_accuracy,best_k\n")

    def fn(model, epoch):
        train_tab = export_representations(model, train_src)
        if test_src is None:
            train_tab, test_tab = train_tab.split_by_source(0.8, cfg.seed)
        else:
            test_tab = export_representations(model, test_src)
        best_k, acc, _ = knn_sweep(train_tab, test_tab)
        with log.open("a") as fh:
            fh.write(f"{epoch},{acc!r},{best_k}\n")

    return fn


def _dtype(cfg: TrainConfig):
    return np.float64 if cfg.dtype == "float64" else np.float32


def train(cfg: TrainConfig, source=None, out_dir=None) -> TrainResult:
    """Train from scratch; writes metrics.csv and checkpoints under ``out_dir`` when given."""
    cfg.validate()
    source = source if source is not None else build_source(cfg)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(cfg.to_text())
    with precision(_dtype(cfg)):
        model = build_model(cfg, source.in_dim, source.n_sources)
        opt = Adam(model.params, cfg.lr)
        return _run(cfg, source, model, opt, 0, 0, [], out_dir, _make_eval_fn(cfg, source, out_dir))


def resume(checkpoint, cfg: TrainConfig | None = None, source=None, out_dir=None) -> TrainResult:
    """Continue a checkpointed run up to ``cfg.epochs``.

    Every key except those in ``RESUMABLE_KEYS`` must match the checkpoint's
    config snapshot, and the dataset must have the recorded fingerprint.
    A run that already reached ``cfg.epochs`` is returned unchanged.
    """
    ck = checkpoint if isinstance(checkpoint, ModelCheckpoint) else load_checkpoint(checkpoint)
    saved = TrainConfig.from_dict(ck.config)
    cfg = (cfg or saved).validate()
    diff = config_diff(saved.to_dict(), cfg.to_dict(), ignore=RESUMABLE_KEYS)
    if diff:
        raise ResumeError("config differs from the checkpoint:\n  " + "\n  ".join(diff))
    source = source if source is not None else build_source(cfg)
    if source.fingerprint != ck.extra.get("dataset_fingerprint"):
        raise ResumeError(f"dataset mismatch: checkpoint was trained on {ck.extra.get('dataset')!r} "
                          f"(fingerprint {ck.extra.get('dataset_fingerprint')}), got {source.name!r} "
                          f"(fingerprint {source.fingerprint})")
    rows = [{k: (int(v) if k in ("epoch", "step") else (float(v) if v else None)) for k, v in r.items()}
            for r in ck.extra.get("metrics_rows", [])]
    rows = [r for r in rows if r["epoch"] <= ck.epoch]
    out_dir = Path(out_dir) if out_dir is not None else None
    if ck.epoch >= cfg.epochs:
        res = TrainResult(ck, ck.to_model(), rows, out_dir)
        res.messages.append(f"run already finished at epoch {ck.epoch} (epochs={cfg.epochs}); nothing to do")
        return res
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.txt").write_text(cfg.to_text())
    with precision(_dtype(cfg)):
        model = ck.to_model()
        opt = Adam(model.params, cfg.lr)
        if ck.optimizer is not None:
            opt.state = {"t": ck.optimizer["t"], "m": {k: v.copy() for k, v in ck.optimizer["m"].items()},
                         "v": {k: v.copy() for k, v in ck.optimizer["v"].items()}}
        return _run(cfg, source, model, opt, ck.epoch, int(ck.extra.get("step", 0)), rows, out_dir,
                    _make_eval_fn(cfg, source, out_dir))


# -- export -------------------------------------------------------------------
def checkpoint_id(model: Model) -> str:
    names = sorted(model.params)
    return fingerprint(*(model.params[n].data for n in names))


def export_representations(model, source, use_mean: bool = True, styled: bool = False, seed: int = 0,
                           batch: int = 2048) -> RepresentationTable:
    """Encode every datum without augmentation; posterior means by default.

    ``styled=True`` instead encodes one augmented view per image and records
    its style parameters (synthetic data always carries its offsets).
    """
    if isinstance(model, ModelCheckpoint):
        model = model.to_model()
    elif isinstance(model, (str, Path)):
        model = load_checkpoint(model).to_model()
    x, y, S, names = source.styled_inputs(seed) if styled else source.eval_inputs()
    if x.shape[1] != model.encoder.in_dim:
        raise DataError(f"encoder expects inputs of width {model.encoder.in_dim}, data has {x.shape[1]}")
    dtype = model.params["encoder.0.weight"].dtype
    out = np.empty((len(x), model.latent_dim), dtype=np.float64)
    rng = Rng(seed).stream("export")
    with no_grad(), precision(dtype):
        for s in range(0, len(x), batch):
            post = model.encode(x[s:s + batch].astype(dtype))
            z = post.mu.data
            if not use_mean:
                eps = rng.stream(s).normal(z.shape)
                z = z + np.exp(0.5 * post.logvar.data) * eps
            out[s:s + batch] = z
    aux, src = {}, None
    if isinstance(source, SynthViews):
        ds = source.dataset
        src = np.repeat(np.arange(ds.n_sources), ds.J)
        aux["z_true"] = ds.z.reshape(len(x), -1)
    return RepresentationTable(out, y, S, tuple(names) if S is not None else (), src, checkpoint_id(model),
                               source.name, aux)
