"""Training objectives.

Each loss returns a :class:`LossBreakdown` whose ``total`` is the value to
minimise. The sub-terms are the signed contributions to ``total``, so
``total == recon + entropy + prior + sum(extra.values())`` for every loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, PreconditionError
from .numerics import Tensor, as_tensor, concat, logsumexp, matmul, sqrt, sum_
from .ssl_model import (
    gaussian_log_pdf,
    kl_to_standard_normal,
    log_prior_uniform_psi,
    posterior_entropy,
)

SIMVAE_MODES = ("exact_elbo", "algo1_literal")
_MASK = -1e9


def _zero() -> Tensor:
    return Tensor(0.0)


@dataclass
class LossBreakdown:
    total: Tensor
    recon: Tensor = field(default_factory=_zero)
    entropy: Tensor = field(default_factory=_zero)
    prior: Tensor = field(default_factory=_zero)
    extra: dict = field(default_factory=dict)

    def as_floats(self) -> dict:
        out = {
            "total": float(self.total.data),
            "recon": float(self.recon.data),
            "entropy": float(self.entropy.data),
            "prior": float(self.prior.data),
            "extra": float(sum(float(v.data) for v in self.extra.values())),
        }
        for k, v in self.extra.items():
            out[f"extra.{k}"] = float(v.data)
        return out


def vae_loss(x, x_rec, post, var_x: float, beta: float = 1.0) -> LossBreakdown:
    """Negative (beta-weighted) ELBO averaged over the batch.

    ``x``/``x_rec`` have shape (B, D); ``post`` is a (mu, logvar) pair of (B, L).
    """
    if beta <= 0:
        raise PreconditionError("beta must be positive")
    x, x_rec = as_tensor(x), as_tensor(x_rec)
    recon = (-gaussian_log_pdf(x, x_rec, var_x)).mean()
    kl = kl_to_standard_normal(post[0], post[1]).mean() * beta
    return LossBreakdown(total=recon + kl, recon=recon, extra={"kl": kl})


def simvae_loss(x, x_rec, post, z, prior_var: float, var_x: float, mode: str = "exact_elbo") -> LossBreakdown:
    """Negative ELBO of J related views, averaged over sources.

    All inputs are view-major: ``x``/``x_rec`` are (J, B, D), ``post`` is a
    (mu, logvar) pair of (J, B, L) and ``z`` the reparameterised samples
    (J, B, L).

    ``exact_elbo`` uses the Gaussian likelihood with variance ``var_x``, the
    posterior entropy and the flat-prior conditional ``p(z|y)``.
    ``algo1_literal`` uses (1/D) squared error, +1/2 sum log-variance, and
    (1/(2 prior_var)) sum ||z - zbar||^2.
    """
    if mode not in SIMVAE_MODES:
        raise ConfigError(f"unknown simvae mode {mode!r}; expected one of {SIMVAE_MODES}")
    x, x_rec, z = as_tensor(x), as_tensor(x_rec), as_tensor(z)
    mu, logvar = post
    if x.ndim != 3 or x.shape[0] < 1:
        raise PreconditionError(f"expected views shaped (J, B, D) with J >= 1, got {x.shape}")
    if mode == "exact_elbo":
        recon = sum_(-gaussian_log_pdf(x, x_rec, var_x), axis=0).mean()
        entropy = -sum_(posterior_entropy(logvar), axis=0).mean()
        prior = -log_prior_uniform_psi(z, prior_var).mean()
    else:
        D = x.shape[-1]
        recon = sum_((x - x_rec).square(), axis=(0, 2)).mean() * (1.0 / D)
        entropy = sum_(as_tensor(logvar), axis=(0, 2)).mean() * 0.5
        prior = -log_prior_uniform_psi(z, prior_var).mean()
    return LossBreakdown(total=recon + entropy + prior, recon=recon, entropy=entropy, prior=prior)


def contrastive_cross_entropy(logits, positive) -> Tensor:
    """Mean over rows of -log softmax(logits)[row, positive[row]]."""
    logits = as_tensor(logits)
    positive = np.asarray(positive, dtype=np.int64)
    rows = np.arange(logits.shape[0])
    return (logsumexp(logits, axis=1) - logits[rows, positive]).mean()


def _l2_normalize(h: Tensor) -> Tensor:
    return h / sqrt(sum_(h.square(), axis=1, keepdims=True) + 1e-12)


def info_nce_loss(z, z_pos, tau: float = 0.7) -> LossBreakdown:
    """Symmetric in-batch InfoNCE with cosine similarity over temperature ``tau``.

    Row i of ``z`` and row i of ``z_pos`` form a positive pair; every other
    item of the combined 2N batch is a negative.
    """
    z, z_pos = as_tensor(z), as_tensor(z_pos)
    if z.shape != z_pos.shape:
        raise PreconditionError(f"anchor/positive shapes differ: {z.shape} vs {z_pos.shape}")
    n = z.shape[0]
    if n < 2:
        raise PreconditionError("InfoNCE needs a batch of at least 2 pairs")
    if tau <= 0:
        raise PreconditionError("temperature must be positive")
    h = _l2_normalize(concat([z, z_pos], axis=0))
    sim = matmul(h, h.T) * (1.0 / tau)
    mask = np.zeros((2 * n, 2 * n), dtype=sim.dtype)
    np.fill_diagonal(mask, _MASK)
    positive = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    loss = contrastive_cross_entropy(sim + mask, positive)
    return LossBreakdown(total=loss, extra={"infonce": loss})


def instance_discrimination_loss(z, source_indices, class_matrix) -> LossBreakdown:
    """Softmax cross-entropy of ``z @ class_matrix.T`` against each item's source index."""
    z, W = as_tensor(z), as_tensor(class_matrix)
    idx = np.asarray(source_indices, dtype=np.int64)
    n_classes = W.shape[0]
    if idx.ndim != 1 or idx.shape[0] != z.shape[0]:
        raise DataError("need one source index per representation")
    if np.any(idx < 0) or np.any(idx >= n_classes):
        raise DataError(f"source index out of range [0, {n_classes})")
    loss = contrastive_cross_entropy(matmul(z, W.T), idx)
    return LossBreakdown(total=loss, extra={"instance": loss})


def pmi_table(joint) -> np.ndarray:
    """log p(a,b) - log p(a) - log p(b); -inf where p(a,b) = 0."""
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2:
        raise DataError("joint must be a 2-d table")
    if np.any(joint < 0) or abs(joint.sum() - 1.0) > 1e-9:
        raise DataError(f"joint must be a probability table (sum={joint.sum()!r})")
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    if np.any(pa <= 0) or np.any(pb <= 0):
        raise DataError("marginals must be positive")
    with np.errstate(divide="ignore"):
        return np.log(joint) - np.log(pa)[:, None] - np.log(pb)[None, :]


def info_nce_population_loss(sim, joint) -> Tensor:
    """InfoNCE over a discrete joint with a free similarity table.

    Expected cross-entropy of picking the positive ``b ~ p(b|a)`` against
    candidates drawn from the marginal ``p(b)`` in the many-negatives limit::

        -sum_{a,b} p(a,b) [ sim(a,b) - log sum_b' p(b') exp sim(a,b') ]

    Its stationary points are exactly ``sim(a,b) = PMI(a,b) + c(a)``.
    """
    sim = as_tensor(sim)
    joint = np.asarray(joint, dtype=sim.dtype)
    pa = joint.sum(axis=1)
    log_pb = np.log(joint.sum(axis=0))
    lse = logsumexp(sim + log_pb[None, :], axis=1)
    return -(sim * joint).sum() + (lse * pa).sum()
