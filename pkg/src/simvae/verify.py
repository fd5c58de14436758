"""Self-checks shared by the CLI and the test-suite.

``gradcheck_suite`` compares backprop with central differences for every
training loss on small random models. ``verify_prior`` checks the
closed-form psi-integrated prior against Monte-Carlo integration over psi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import (
    info_nce_loss,
    info_nce_population_loss,
    instance_discrimination_loss,
    pmi_table,
    simvae_loss,
    vae_loss,
)
from .nn import Model, MlpSpec, reparameterize
from .numerics import Rng, Tensor, grad_check, precision
from .ssl_model import log_prior_gaussian_psi, log_prior_gaussian_psi_mc, log_prior_uniform_psi

GRADCHECK_LOSSES = ("vae", "beta_vae", "simvae_exact_elbo", "simvae_algo1_literal", "infonce", "instance_disc")
GRADCHECK_TOL = 1e-4
_KINK_MARGIN = 1e-3


@dataclass
class GradCheckCase:
    loss: str
    model_index: int
    max_rel_error: float
    n_params: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < GRADCHECK_TOL


def _random_spec(rng: Rng, in_dim: int, out_dim: int, max_layers: int, max_units: int) -> MlpSpec:
    n_layers = int(rng.integers(1, max_layers + 1))
    hidden = [int(rng.integers(2, max_units + 1)) for _ in range(n_layers - 1)]
    return MlpSpec.relu_mlp([in_dim, *hidden, out_dim])


def _relu_margin(spec: MlpSpec, params: dict, x: np.ndarray, prefix: str) -> float:
    """Smallest |pre-activation| feeding a ReLU; finite differences are only valid away from 0."""
    h, margin = x, np.inf
    for i in range(spec.n_layers):
        pre = h @ params[f"{prefix}.{i}.weight"].data + params[f"{prefix}.{i}.bias"].data
        if spec.activations[i] == "relu":
            margin = min(margin, float(np.abs(pre).min()))
            h = np.maximum(pre, 0)
        else:
            h = pre
    return margin


def _loss_closure(name: str, model: Model, x: np.ndarray, eps: np.ndarray, idx: np.ndarray, J: int, B: int):
    D = x.shape[-1]
    L = model.latent_dim
    flat = x.reshape(J * B, D)

    def f():
        post = model.encode(flat)
        if name in ("vae", "beta_vae"):
            z = reparameterize(post, eps)
            return vae_loss(flat, model.decode(z), post, 0.5, 4.0 if name == "beta_vae" else 1.0).total
        if name.startswith("simvae"):
            mode = name[len("simvae_"):]
            z = reparameterize(post, eps)
            xr = model.decode(z).reshape(J, B, D)
            post3 = (post.mu.reshape(J, B, L), post.logvar.reshape(J, B, L))
            return simvae_loss(x, xr, post3, z.reshape(J, B, L), 0.15, 0.5, mode).total
        mu = post.mu
        if name == "infonce":
            mu = mu.reshape(J, B, L)
            return info_nce_loss(mu[0], mu[1], 0.7).total
        return instance_discrimination_loss(mu, np.tile(idx, J), model.params["head.class_matrix"]).total

    return f


def gradcheck_case(name: str, seed: int, model_index: int, max_layers: int = 3, max_units: int = 16,
                   h: float = 1e-5) -> GradCheckCase:
    """One random model for one loss, drawn so that no ReLU sits within 1e-3 of its kink."""
    with precision(np.float64):
        for attempt in range(100):
            rng = Rng(seed).stream("gradcheck", name, model_index, attempt)
            D = int(rng.integers(2, 7))
            L = int(rng.integers(2, 4))
            J, B = 3, 3
            enc = _random_spec(rng, D, 2 * L, max_layers, max_units)
            dec = _random_spec(rng, L, D, max_layers, max_units)
            model = Model.build(enc, dec if name in ("vae", "beta_vae") or name.startswith("simvae") else None, rng)
            for p in model.params.values():
                p.data += rng.normal(p.data.shape) * 0.1
            n_src = 5
            if name == "instance_disc":
                model.params["head.class_matrix"] = Tensor(rng.normal((n_src, L)) * 0.5, requires_grad=True)
            x = rng.normal((J, B, D))
            eps = rng.normal((J * B, L))
            idx = rng.permutation(n_src)[:B]
            flat = x.reshape(J * B, D)
            margin = _relu_margin(enc, model.params, flat, "encoder")
            if model.decoder is not None:
                out = flat
                for i in range(enc.n_layers):
                    out = out @ model.params[f"encoder.{i}.weight"].data + model.params[f"encoder.{i}.bias"].data
                    if enc.activations[i] == "relu":
                        out = np.maximum(out, 0)
                z = out[:, :L] + np.exp(0.5 * out[:, L:]) * eps
                margin = min(margin, _relu_margin(dec, model.params, z, "decoder"))
            if margin > _KINK_MARGIN:
                break
        f = _loss_closure(name, model, x, eps, idx, J, B)
        params = model.parameters()
        err = grad_check(f, params, h)
    return GradCheckCase(name, model_index, err, int(sum(p.data.size for p in params)))


def gradcheck_suite(seed: int = 0, n_models: int = 20, losses=GRADCHECK_LOSSES) -> list:
    return [gradcheck_case(name, seed, i) for name in losses for i in range(n_models)]


@dataclass
class PriorCheck:
    closed_diff: float
    mc_diff: float

    @property
    def error(self) -> float:
        return abs(self.closed_diff - self.mc_diff)


def verify_prior(seed: int = 0, n_pairs: int = 20, d: int = 2, J: int = 3, var: float = 0.15, gamma2: float = 1.0,
                 n_samples: int = 10**6) -> list:
    """Closed-form vs Monte-Carlo log-density differences between pairs of latent groups.

    Groups are drawn from the generative model itself (psi ~ N(0, gamma2 I),
    z^j ~ N(psi, var I)) so both members of a pair are typical.
    """
    out = []
    for i in range(n_pairs):
        rng = Rng(seed).stream("verify-prior", i)
        groups = []
        for g in range(2):
            psi = rng.normal(d) * np.sqrt(gamma2)
            groups.append(psi + rng.normal((J, d)) * np.sqrt(var))
        with precision(np.float64):
            closed = [float(log_prior_gaussian_psi(Tensor(z), var, gamma2).data) for z in groups]
        mc = [log_prior_gaussian_psi_mc(z, var, gamma2, n_samples, rng.stream("mc", g)) for g, z in enumerate(groups)]
        out.append(PriorCheck(closed[0] - closed[1], mc[0] - mc[1]))
    return out


def flat_limit_gap(seed: int = 0, n: int = 20, d: int = 2, J: int = 3, var: float = 0.15,
                   gamma2: float = 1e12) -> float:
    """Max |log_prior_gaussian_psi(gamma2 huge) - log_prior_uniform_psi| over random groups."""
    rng = Rng(seed).stream("flat-limit")
    worst = 0.0
    with precision(np.float64):
        for _ in range(n):
            z = Tensor(rng.normal((J, d)))
            a = float(log_prior_gaussian_psi(z, var, gamma2).data)
            b = float(log_prior_uniform_psi(z, var).data)
            worst = max(worst, abs(a - b))
    return worst


@dataclass
class StationarityCheck:
    drift: float
    increases: int
    trials: int


def _row_differences(sim: np.ndarray) -> np.ndarray:
    return sim[:, :, None] - sim[:, None, :]


def pmi_stationarity(joint, seed: int = 0, steps: int = 2000, lr: float = 0.05, trials: int = 10,
                     scale: float = 0.1) -> StationarityCheck:
    """Start population InfoNCE at sim = PMI + c and probe whether it is a local optimum.

    ``drift`` is the largest change of any within-row similarity difference
    after ``steps`` of gradient descent; ``increases`` counts random
    perturbations of max-magnitude ``scale`` that raise the loss.
    """
    joint = np.asarray(joint, dtype=np.float64)
    rng = Rng(seed).stream("pmi")
    start = pmi_table(joint) + 0.7
    with precision(np.float64):
        sim = Tensor(start.copy(), requires_grad=True)
        for _ in range(steps):
            sim.grad = None
            info_nce_population_loss(sim, joint).backward()
            sim.data -= lr * sim.grad
        drift = float(np.max(np.abs(_row_differences(sim.data) - _row_differences(start))))
        base = float(info_nce_population_loss(Tensor(start), joint).data)
        up = 0
        for _ in range(trials):
            delta = rng.uniform(-1.0, 1.0, start.shape)
            delta *= scale / np.max(np.abs(delta))
            if float(info_nce_population_loss(Tensor(start + delta), joint).data) > base:
                up += 1
    return StationarityCheck(drift, up, trials)
