"""
Exact GP regression with a constant mean and an RBF kernel.

Every factorization is a Cholesky of ``K + (noise + jitter) I`` followed by
triangular solves; nothing is inverted explicitly except the matrix needed
for the trace term of the likelihood gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError
from .kernel import JITTER, KernelParams, cholesky, gram, gram_grads, sqdist

__all__ = [
    "PredictiveDistribution",
    "marginal_nll",
    "posterior",
    "latent_moments",
    "ExactBackend",
]

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PredictiveDistribution:
    means: np.ndarray
    variances: np.ndarray
    covariance: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.means)


def _training_arrays(data):
    if data is None:
        return np.zeros((0, 1)), np.zeros(0)
    X = np.asarray(data.X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X, np.asarray(data.y, dtype=float)


def _obs_var(params):
    return params.noise_var + JITTER


class _Factor:
    """Cholesky of the noisy training Gram matrix plus the weight vector."""

    def __init__(self, params, X, y):
        self.X = X
        K = gram(params, X)
        K[np.diag_indices_from(K)] += _obs_var(params)
        self.L = cholesky(K, params)
        self.resid = y - params.mean_const
        self.alpha = sla.cho_solve((self.L, True), self.resid)

    def solve(self, B):
        return sla.cho_solve((self.L, True), B)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.L))))


def marginal_nll(params, data, with_grad=False):
    """Negative log marginal likelihood of the targets.

    Returns ``(nll, grad)`` where ``grad`` is ``None`` unless requested; the
    gradient follows the packed kernel-parameter order.
    """
    X, y = _training_arrays(data)
    n = len(y)
    if n == 0:
        raise InvalidInputError("marginal_nll needs at least one training point")
    fac = _Factor(params, X, y)
    nll = 0.5 * float(fac.resid @ fac.alpha) + 0.5 * fac.logdet() + 0.5 * n * LOG_2PI
    if not with_grad:
        return nll, None

    Kinv = fac.solve(np.eye(n))
    Q = Kinv - np.outer(fac.alpha, fac.alpha)
    dK_ell, dK_sf = gram_grads(params, X)
    grad = np.array([
        0.5 * float(np.sum(Q * dK_ell)),
        0.5 * float(np.sum(Q * dK_sf)),
        0.5 * float(np.trace(Q)) * params.noise_var_slope,
        -float(np.sum(fac.alpha)),
    ])
    return nll, grad


def posterior(params, data, Xstar, full_cov=False, include_noise=False):
    """Predictive distribution of the latent function at ``Xstar``.

    Variances are latent by default; pass ``include_noise=True`` to get the
    observation-space variances used by likelihood metrics.
    """
    X, y = _training_arrays(data)
    Xstar = np.asarray(Xstar, dtype=float)
    if Xstar.ndim == 1:
        Xstar = Xstar[:, None]
    ns = Xstar.shape[0]
    sf2 = params.signal_var

    if len(y) == 0:
        means = np.full(ns, params.mean_const)
        cov = gram(params, Xstar) if full_cov else None
        variances = np.full(ns, sf2)
    else:
        fac = _Factor(params, X, y)
        Ks = gram(params, X, Xstar)
        means = params.mean_const + Ks.T @ fac.alpha
        V = sla.solve_triangular(fac.L, Ks, lower=True)
        if full_cov:
            cov = gram(params, Xstar) - V.T @ V
            cov = 0.5 * (cov + cov.T)
            variances = np.maximum(np.diag(cov).copy(), 0.0)
            cov[np.diag_indices_from(cov)] = variances
        else:
            cov = None
            variances = np.maximum(sf2 - np.sum(V * V, axis=0), 0.0)

    if include_noise:
        variances = variances + params.noise_var
        if cov is not None:
            cov = cov + params.noise_var * np.eye(ns)
    return PredictiveDistribution(means, variances, cov)


def latent_moments(params, data, Xq):
    """Latent predictive means/variances at ``Xq`` with a vector-Jacobian product.

    Returns ``(means, variances, vjp)``; ``vjp(g_mean, g_var)`` maps cotangents
    on the moments to a gradient over the packed kernel parameters. Variances
    are not clamped here.
    """
    X, y = _training_arrays(data)
    Xq = np.asarray(Xq, dtype=float)
    if Xq.ndim == 1:
        Xq = Xq[:, None]
    ell2 = params.lengthscale ** 2
    sf2 = params.signal_var
    m = Xq.shape[0]

    if len(y) == 0:
        means = np.full(m, params.mean_const)
        variances = np.full(m, sf2)

        def vjp(g_mean, g_var):
            return np.array([0.0, sf2 * float(np.sum(g_var)), 0.0,
                             float(np.sum(g_mean))])

        return means, variances, vjp

    fac = _Factor(params, X, y)
    Ds = sqdist(X, Xq)
    Ks = sf2 * np.exp(-0.5 * Ds / ell2)
    A = fac.solve(Ks)  # (K + s I)^-1 K*
    means = params.mean_const + Ks.T @ fac.alpha
    variances = sf2 - np.sum(Ks * A, axis=0)

    def vjp(g_mean, g_var):
        g_mean = np.asarray(g_mean, dtype=float)
        g_var = np.asarray(g_var, dtype=float)
        b = A @ g_mean
        AW = A * g_var
        # cotangents on the cross-covariance and on the noisy train Gram
        G_s = np.outer(fac.alpha, g_mean) - 2.0 * AW
        G_y = -np.outer(b, fac.alpha) + AW @ A.T
        dK_ell, dK_sf = gram_grads(params, X)
        return np.array([
            float(np.sum(G_s * Ks * Ds) / ell2 + np.sum(G_y * dK_ell)),
            float(np.sum(G_s * Ks) + np.sum(G_y * dK_sf) + sf2 * np.sum(g_var)),
            float(np.trace(G_y)) * params.noise_var_slope,
            float(np.sum(g_mean) - np.sum(b)),
        ])

    return means, variances, vjp


class ExactBackend:
    """Model handle used by the penalty and the trainer for the exact GP."""

    name = "exact"

    def init_params(self, data, rng=None):
        y = np.asarray(data.y, dtype=float)
        return KernelParams(0.0, 0.0, float(np.log(0.1)), float(np.mean(y)))

    def pack(self, params):
        return params.to_vector()

    def unpack(self, vec):
        return KernelParams.from_vector(vec)

    def kernel_params(self, params):
        return params

    def objective(self, params, data, batch=None, with_grad=False):
        return marginal_nll(params, data, with_grad=with_grad)

    def moments(self, params, data, Xq):
        return latent_moments(params, data, Xq)

    def predict(self, params, data, Xq, full_cov=False, include_noise=False):
        return posterior(params, data, Xq, full_cov=full_cov,
                         include_noise=include_noise)
