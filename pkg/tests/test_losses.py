import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from simvae.errors import ConfigError, DataError, PreconditionError
from simvae.losses import (
    contrastive_cross_entropy,
    info_nce_loss,
    info_nce_population_loss,
    instance_discrimination_loss,
    pmi_table,
    simvae_loss,
    vae_loss,
)
from simvae.numerics import Tensor, precision
from simvae.ssl_model import standard_normal_cross_entropy
from simvae.verify import gradcheck_case, pmi_stationarity


def f(t):
    return float(np.asarray(t.data))


def random_batch(seed, J=3, B=4, D=5, L=2):
    r = np.random.default_rng(seed)
    return (r.normal(size=(J, B, D)), r.normal(size=(J, B, D)),
            (r.normal(size=(J, B, L)), r.normal(size=(J, B, L)) * 0.3), r.normal(size=(J, B, L)))


class TestVae:
    def test_recon_floor(self):
        D, var = 6, 0.02
        x = np.random.default_rng(0).uniform(size=(3, D))
        with precision(np.float64):
            out = vae_loss(x, x, (np.zeros((3, 2)), np.zeros((3, 2))), var)
        assert f(out.total) == pytest.approx(D / 2 * math.log(2 * math.pi * var))

    def test_beta_scales_kl(self):
        x, xr, post, _ = random_batch(0)
        with precision(np.float64):
            a = vae_loss(x[0], xr[0], (post[0][0], post[1][0]), 0.5, 1.0)
            b = vae_loss(x[0], xr[0], (post[0][0], post[1][0]), 0.5, 4.0)
        assert f(b.extra["kl"]) == pytest.approx(4 * f(a.extra["kl"]))
        with pytest.raises(PreconditionError):
            vae_loss(x[0], xr[0], (post[0][0], post[1][0]), 0.5, 0.0)


class TestSimVae:
    def test_prior_hand_value(self):
        z = np.array([[[1.0, 0.0]], [[0.0, 1.0]]])
        x = np.zeros((2, 1, 3))
        with precision(np.float64):
            out = simvae_loss(x, x, (np.zeros((2, 1, 2)), np.zeros((2, 1, 2))), z, 0.15, 0.02)
        assert f(out.prior) == pytest.approx(1 / 0.3)

    def test_errors(self):
        x, xr, post, z = random_batch(0)
        with pytest.raises(ConfigError):
            simvae_loss(x, xr, post, z, 0.15, 0.02, mode="bogus")
        with pytest.raises(PreconditionError):
            simvae_loss(x[:0], xr[:0], (post[0][:0], post[1][:0]), z[:0], 0.15, 0.02)

    @pytest.mark.parametrize("mode", ["exact_elbo", "algo1_literal"])
    @given(seed=st.integers(0, 10**6))
    def test_subterms_sum_to_total(self, mode, seed):
        with precision(np.float64):
            out = simvae_loss(*random_batch(seed), 0.15, 0.02, mode=mode)
        assert f(out.total) == pytest.approx(f(out.recon) + f(out.entropy) + f(out.prior), abs=1e-6)

    @pytest.mark.parametrize("mode", ["exact_elbo", "algo1_literal"])
    @given(seed=st.integers(0, 10**6), perm_seed=st.integers(0, 100))
    def test_view_permutation_invariance(self, mode, seed, perm_seed):
        x, xr, (mu, lv), z = random_batch(seed)
        p = np.random.default_rng(perm_seed).permutation(x.shape[0])
        with precision(np.float64):
            a = f(simvae_loss(x, xr, (mu, lv), z, 0.15, 0.02, mode).total)
            b = f(simvae_loss(x[p], xr[p], (mu[p], lv[p]), z[p], 0.15, 0.02, mode).total)
        assert a == pytest.approx(b, rel=1e-12)

    def test_algo1_literal_terms(self):
        x, xr, (mu, lv), z = random_batch(1)
        with precision(np.float64):
            out = simvae_loss(x, xr, (mu, lv), z, 0.15, 0.02, "algo1_literal")
        assert f(out.recon) == pytest.approx(((x - xr) ** 2).sum(axis=(0, 2)).mean() / x.shape[-1])
        assert f(out.entropy) == pytest.approx(0.5 * lv.sum(axis=(0, 2)).mean())

    @given(seed=st.integers(0, 10**6))
    def test_single_view_with_standard_prior_is_vae(self, seed):
        x, xr, (mu, lv), z = random_batch(seed, J=1)
        with precision(np.float64):
            s = simvae_loss(x, xr, (mu, lv), z, 0.15, 0.02)
            swapped = f(s.total) - f(s.prior) + f(standard_normal_cross_entropy(mu[0], lv[0]).mean())
            v = vae_loss(x[0], xr[0], (mu[0], lv[0]), 0.02, 1.0)
        assert f(s.prior) == 0.0
        assert swapped == pytest.approx(f(v.total), abs=1e-6)


class TestInfoNce:
    @pytest.mark.parametrize("n", [2, 5, 16])
    def test_identical_representations(self, n):
        z = np.ones((n, 3))
        with precision(np.float64):
            assert f(info_nce_loss(z, z).total) == pytest.approx(math.log(2 * n - 1))

    def test_three_candidate_example(self):
        with precision(np.float64):
            got = f(contrastive_cross_entropy(np.array([[1.0, 0.0, 0.0]]), [0]))
        assert got == pytest.approx(-math.log(math.e / (math.e + 2)), abs=1e-5)
        assert got == pytest.approx(0.55144, abs=1e-5)

    def test_against_direct_formula(self):
        r = np.random.default_rng(0)
        a, b, tau = r.normal(size=(4, 3)), r.normal(size=(4, 3)), 0.7
        h = np.concatenate([a, b])
        h /= np.linalg.norm(h, axis=1, keepdims=True)
        s = h @ h.T / tau
        n = 4
        losses = []
        for i in range(2 * n):
            pos = (i + n) % (2 * n)
            others = [j for j in range(2 * n) if j != i]
            losses.append(-s[i, pos] + np.log(np.exp(s[i, others]).sum()))
        with precision(np.float64):
            assert f(info_nce_loss(a, b, tau).total) == pytest.approx(np.mean(losses))

    def test_errors(self):
        with pytest.raises(PreconditionError):
            info_nce_loss(np.ones((1, 2)), np.ones((1, 2)))
        with pytest.raises(PreconditionError):
            info_nce_loss(np.ones((2, 2)), np.ones((3, 2)))


class TestInstanceDiscrimination:
    def test_zero_weights(self):
        with precision(np.float64):
            out = instance_discrimination_loss(np.ones((3, 2)), [0, 4, 2], np.zeros((7, 2)))
        assert f(out.total) == pytest.approx(math.log(7))

    def test_large_true_logit(self):
        W = np.zeros((4, 2))
        W[1] = [100.0, 0.0]
        with precision(np.float64):
            assert f(instance_discrimination_loss(np.array([[1.0, 0.0]]), [1], W).total) < 1e-30

    def test_index_out_of_range(self):
        with pytest.raises(DataError):
            instance_discrimination_loss(np.ones((2, 2)), [0, 5], np.zeros((5, 2)))


class TestPmi:
    def test_independent_joint(self):
        pa, pb = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.4])
        np.testing.assert_allclose(pmi_table(np.outer(pa, pb)), 0.0, atol=1e-12)

    def test_diagonal_joint(self):
        C = 4
        t = pmi_table(np.eye(C) / C)
        np.testing.assert_allclose(np.diag(t), math.log(C))
        assert np.all(np.isneginf(t[~np.eye(C, dtype=bool)]))

    def test_symmetric(self):
        r = np.random.default_rng(0).uniform(size=(4, 4))
        j = (r + r.T) / (r + r.T).sum()
        t = pmi_table(j)
        np.testing.assert_allclose(t, t.T)

    def test_not_normalized(self):
        with pytest.raises(DataError):
            pmi_table(np.full((2, 2), 0.3))

    @given(st.integers(0, 10**6))
    def test_pmi_is_stationary(self, seed):
        r = np.random.default_rng(seed)
        j = r.uniform(0.05, 1, (4, 4))
        j /= j.sum()
        res = pmi_stationarity(j, seed=seed, steps=300)
        assert res.drift < 1e-3
        assert res.increases == res.trials

    def test_descent_recovers_pmi_from_perturbed_start(self):
        r = np.random.default_rng(1)
        j = r.uniform(0.05, 1, (4, 4))
        j /= j.sum()
        with precision(np.float64):
            sim = Tensor(pmi_table(j) + r.normal(size=(4, 4)), requires_grad=True)
            for _ in range(5000):
                sim.grad = None
                info_nce_population_loss(sim, j).backward()
                sim.data -= 0.5 * sim.grad
        gap = sim.data - pmi_table(j)
        np.testing.assert_allclose(gap - gap.mean(axis=1, keepdims=True), 0, atol=1e-4)


class TestGradients:
    @pytest.mark.parametrize("loss", ["vae", "beta_vae", "simvae_exact_elbo", "simvae_algo1_literal",
                                      "infonce", "instance_disc"])
    def test_grad_check(self, loss):
        for i in range(3):
            assert gradcheck_case(loss, 11, i).max_rel_error < 1e-4
