"""Densities of the hierarchical model y -> z^1..z^J -> x^1..x^J.

Latent groups ("ZSets") are arrays of shape ``(J, ..., d)``: the first axis
indexes the J related latents, the last axis the latent dimension, and any
axes between are batch axes carried through to the result. All functions
accept tensors (and stay differentiable) or plain arrays.

The conditional priors are log-densities up to an additive constant that
depends only on (sigma^2, gamma^2, J, d).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, PreconditionError
from .numerics import Tensor, as_tensor, exp, mean, sum_

LOG_2PI = math.log(2 * math.pi)


def _check_var(name: str, v) -> None:
    arr = v.data if isinstance(v, Tensor) else np.asarray(v, dtype=float)
    if np.any(arr <= 0) or np.any(np.isnan(arr)):
        raise DomainError(f"{name} must be positive, got {v!r}")


def gaussian_log_pdf(x, mu, var) -> Tensor:
    """Diagonal Gaussian log-density summed over the last axis."""
    _check_var("variance", var)
    x, mu = as_tensor(x), as_tensor(mu)
    var = np.asarray(var.data if isinstance(var, Tensor) else var, dtype=float)
    d = x.shape[-1]
    if var.ndim == 0:
        norm = d * math.log(2 * math.pi * float(var))
        quad = (x - mu).square().sum(axis=-1) * (1.0 / float(var))
    else:
        norm = float(np.sum(np.log(2 * math.pi * var)))
        quad = ((x - mu).square() * (1.0 / var).astype(x.dtype)).sum(axis=-1)
    return quad * -0.5 - 0.5 * norm


def posterior_entropy(logvar) -> Tensor:
    """Entropy of N(mu, diag(exp(logvar))), summed over the last axis."""
    logvar = as_tensor(logvar)
    d = logvar.shape[-1]
    return logvar.sum(axis=-1) * 0.5 + 0.5 * d * (1 + LOG_2PI)


def kl_to_standard_normal(mu, logvar) -> Tensor:
    """KL(N(mu, diag(exp(logvar))) || N(0, I)), summed over the last axis."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    return (exp(logvar) + mu.square() - 1.0 - logvar).sum(axis=-1) * 0.5


def standard_normal_cross_entropy(mu, logvar) -> Tensor:
    """-E_q[log N(z; 0, I)] for q = N(mu, diag(exp(logvar)))."""
    mu, logvar = as_tensor(mu), as_tensor(logvar)
    d = mu.shape[-1]
    return (exp(logvar) + mu.square()).sum(axis=-1) * 0.5 + 0.5 * d * LOG_2PI


def _zset(zs) -> Tensor:
    zs = as_tensor(zs)
    if zs.ndim < 2 or zs.shape[0] < 1:
        raise PreconditionError(f"a latent group needs shape (J, ..., d) with J >= 1, got {zs.shape}")
    return zs


def group_mean(zs) -> Tensor:
    return mean(_zset(zs), axis=0, keepdims=True)


def log_prior_uniform_psi(zs, var: float) -> Tensor:
    """-(1 / (2 var)) * sum_j ||z^j - zbar||^2 (cluster mean integrated out under a flat prior)."""
    _check_var("prior variance", var)
    zs = _zset(zs)
    dev = zs - mean(zs, axis=0, keepdims=True)
    return sum_(dev.square(), axis=(0, zs.ndim - 1)) * (-0.5 / var)


def _shrink(var: float, gamma2: float, J: int) -> float:
    """1 / (var / gamma^2 + J); gamma^2 = inf gives the flat-prior limit 1/J."""
    ratio = 0.0 if math.isinf(gamma2) else var / gamma2
    return 1.0 / (ratio + J)


def log_prior_gaussian_psi(zs, var: float, gamma2: float) -> Tensor:
    """Cluster mean psi ~ N(0, gamma^2 I) integrated out analytically.

    -(1 / (2 var)) * [ sum_j ||z^j||^2 - ||sum_j z^j||^2 / (var / gamma^2 + J) ]
    """
    _check_var("prior variance", var)
    _check_var("psi variance", gamma2)
    zs = _zset(zs)
    J = zs.shape[0]
    a = _shrink(var, gamma2, J)
    sq = sum_(zs.square(), axis=(0, zs.ndim - 1))
    tot = sum_(zs, axis=0)
    return (sq - sum_(tot.square(), axis=-1) * a) * (-0.5 / var)


def log_prior_dot_form(zs, var: float, gamma2: float, tol: float = 1e-6) -> Tensor:
    """Pairwise dot-product form of :func:`log_prior_gaussian_psi` for unit-norm latents.

    Equals ``a / (2 var) * sum_{j != k} z^j . z^k`` with ``a = 1 / (var/gamma^2 + J)``,
    which differs from the Gaussian-psi form only by a constant when every
    ``||z^j|| = 1``.
    """
    _check_var("prior variance", var)
    _check_var("psi variance", gamma2)
    zs = _zset(zs)
    norms = np.sqrt(np.sum(zs.data.astype(np.float64) ** 2, axis=-1))
    if np.any(np.abs(norms - 1.0) > tol):
        raise PreconditionError("dot-product prior form requires unit-norm latents")
    J = zs.shape[0]
    a = _shrink(var, gamma2, J)
    tot = sum_(zs, axis=0)
    # sum_{j != k} z^j.z^k = ||sum_j z^j||^2 - sum_j ||z^j||^2
    cross = sum_(tot.square(), axis=-1) - sum_(zs.square(), axis=(0, zs.ndim - 1))
    return cross * (a / (2 * var))


def log_prior_gaussian_psi_mc(zs: np.ndarray, var: float, gamma2: float, n_samples: int, rng) -> float:
    """Monte-Carlo estimate of log p(z^1..z^J) by sampling psi from its prior.

    Returns the exact normalized log-density estimate
    ``log mean_s prod_j N(z^j; psi_s, var I)`` with ``psi_s ~ N(0, gamma^2 I)``.
    Used as an independent check of the closed form.
    """
    zs = np.asarray(zs, dtype=np.float64)
    J, d = zs.shape
    chunk = 200_000
    logs = []
    remaining = n_samples
    while remaining > 0:
        n = min(chunk, remaining)
        psi = rng.normal((n, d)) * math.sqrt(gamma2)
        sq = ((zs[None, :, :] - psi[:, None, :]) ** 2).sum(axis=(1, 2))
        logs.append(-0.5 * sq / var - 0.5 * J * d * math.log(2 * math.pi * var))
        remaining -= n
    out = np.concatenate(logs)
    m = out.max()
    return float(m + math.log(np.mean(np.exp(out - m))))
