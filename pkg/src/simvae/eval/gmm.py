"""Full-covariance Gaussian mixtures fitted by EM.

Covariances are regularised through the M-step
``Sigma_k = (S_k + lam I) / n_k`` with ``lam = reg * N / K``, where ``S_k`` is
the responsibility-weighted scatter. This is the exact maximiser of the
log-likelihood plus the penalty ``-lam/2 * sum_k tr(Sigma_k^-1)``, so EM
never decreases the penalised objective, and for balanced components it
equals the familiar ``S_k / n_k + reg I``. ``trace`` records that objective
per sample for the initial parameters and after every iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, NumericError
from ..numerics import Rng

_LOG2PI = np.log(2 * np.pi)


@dataclass
class GmmModel:
    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, d)
    covariances: np.ndarray  # (K, d, d)
    trace: list = field(default_factory=list)
    reg: float = 0.0
    converged: bool = False

    @property
    def K(self) -> int:
        return len(self.weights)

    @property
    def objective(self) -> float:
        return self.trace[-1] if self.trace else -np.inf

    def component_log_pdf(self, Z) -> np.ndarray:
        """log N(z | mean_k, cov_k), shape (N, K)."""
        return _component_log_pdf(np.asarray(Z, dtype=np.float64), self.means, self.covariances)

    def responsibilities(self, Z) -> np.ndarray:
        lp = self.component_log_pdf(Z) + np.log(self.weights)
        return np.exp(lp - _lse(lp)[:, None])

    def predict(self, Z) -> np.ndarray:
        return np.argmax(self.component_log_pdf(Z) + np.log(self.weights), axis=1)

    def log_likelihood(self, Z) -> float:
        """Mean per-sample log-likelihood (unpenalised)."""
        return float(np.mean(_lse(self.component_log_pdf(Z) + np.log(self.weights))))


def _lse(a: np.ndarray) -> np.ndarray:
    m = a.max(axis=1)
    return m + np.log(np.exp(a - m[:, None]).sum(axis=1))


def _cholesky(cov: np.ndarray, k: int) -> np.ndarray:
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericError(f"covariance of component {k} collapsed (not positive definite)") from None
    if not np.all(np.isfinite(L)) or np.min(np.diag(L)) <= 0:
        raise NumericError(f"covariance of component {k} collapsed")
    return L


def _component_log_pdf(Z, means, covs) -> np.ndarray:
    N, d = Z.shape
    out = np.empty((N, len(means)))
    for k, (mu, cov) in enumerate(zip(means, covs)):
        L = _cholesky(cov, k)
        sol = np.linalg.solve(L, (Z - mu).T)
        out[:, k] = -0.5 * (sol * sol).sum(0) - np.log(np.diag(L)).sum() - 0.5 * d * _LOG2PI
    return out


def _kmeans_pp(Z: np.ndarray, K: int, rng: Rng) -> np.ndarray:
    N = len(Z)
    centers = [Z[rng.integers(N)]]
    d2 = ((Z - centers[0]) ** 2).sum(1)
    for _ in range(1, K):
        total = d2.sum()
        if total <= 0:
            i = rng.integers(N)
        else:
            i = min(int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right")), N - 1)
        centers.append(Z[i])
        d2 = np.minimum(d2, ((Z - Z[i]) ** 2).sum(1))
    return np.array(centers)


def _penalty(covs: np.ndarray, lam: float) -> float:
    if lam == 0:
        return 0.0
    return -0.5 * lam * sum(np.trace(np.linalg.inv(c)) for c in covs)


def _em(Z, K, means, covs, weights, reg, max_iter, tol) -> GmmModel:
    N, d = Z.shape
    lam = reg * N / K
    eye = np.eye(d)
    trace = []
    converged = False
    for it in range(max_iter + 1):
        lp = _component_log_pdf(Z, means, covs) + np.log(weights)
        norm = _lse(lp)
        trace.append(float((norm.sum() + _penalty(covs, lam)) / N))
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        if it == max_iter:
            break
        R = np.exp(lp - norm[:, None])
        nk = R.sum(0) + 10 * np.finfo(np.float64).eps
        weights = nk / N
        means = (R.T @ Z) / nk[:, None]
        covs = np.empty((K, d, d))
        for k in range(K):
            diff = Z - means[k]
            S = (R[:, k, None] * diff).T @ diff
            covs[k] = ((S + S.T) / 2 + lam * eye) / nk[k]
    return GmmModel(weights, means, covs, trace, reg, converged)


def gmm_fit(Z, K: int, n_init: int = 10, max_iter: int = 200, reg: float = 1e-6, tol: float = 1e-8,
            seed: int = 0) -> GmmModel:
    """EM with ``n_init`` k-means++ restarts; keeps the best final objective."""
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2:
        raise DataError(f"expected (N, d) data, got {Z.shape}")
    N, d = Z.shape
    if K < 1 or N <= K:
        raise DataError(f"need K >= 1 and N > K (N={N}, K={K})")
    if n_init < 1:
        raise DataError("n_init must be >= 1")
    base = np.cov(Z.T, bias=True).reshape(d, d) + max(reg, 1e-12) * np.eye(d)
    best = None
    for r in range(n_init):
        rng = Rng(seed).stream("gmm", r)
        means = _kmeans_pp(Z, K, rng)
        covs = np.repeat(base[None], K, axis=0)
        weights = np.full(K, 1.0 / K)
        model = _em(Z, K, means, covs, weights, reg, max_iter, tol)
        if best is None or model.objective > best.objective:
            best = model
    return best


def gmm_cluster(Z, K: int, **kw) -> np.ndarray:
    model = gmm_fit(Z, K, **kw)
    return model.predict(Z)
