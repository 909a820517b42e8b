"""
Negative datapairs: Gaussian blobs, the Gaussian-Gaussian KL divergence and
the log-KL repulsion penalty that is combined with the backend likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "KL_FLOOR",
    "VAR_FLOOR",
    "NegativeSet",
    "gaussian_kl",
    "nd_penalty",
    "combined_objective",
]

KL_FLOOR = 1e-10
# latent variance floor inside the KL; log(sigma2 / sigma1) is undefined at 0
VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class NegativeSet:
    X: np.ndarray
    y: np.ndarray
    sigma_neg: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"negative set has {X.shape[0]} inputs but {y.shape[0]} targets")
        if not (np.isfinite(self.sigma_neg) and self.sigma_neg > 0):
            raise InvalidInputError(f"sigma_neg must be positive, got {self.sigma_neg}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("negative set contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma_neg", float(self.sigma_neg))

    def __len__(self):
        return self.y.shape[0]

    @classmethod
    def empty(cls, d=1, sigma_neg=1.0):
        return cls(np.zeros((0, d)), np.zeros(0), sigma_neg)

    def with_sigma(self, sigma_neg):
        return NegativeSet(self.X, self.y, sigma_neg)


def gaussian_kl(mu1, sigma1, mu2, sigma2):
    """KL(N(mu1, sigma1^2) || N(mu2, sigma2^2)); sigmas are standard deviations.

    Works elementwise on arrays; scalars in give a float back.
    """
    s1 = np.asarray(sigma1, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(~(s1 > 0)) or np.any(~(s2 > 0)):
        raise InvalidInputError("standard deviations must be strictly positive")
    diff = np.asarray(mu1, dtype=float) - np.asarray(mu2, dtype=float)
    kl = np.log(s2 / s1) + (s1 ** 2 + diff ** 2) / (2.0 * s2 ** 2) - 0.5
    kl = np.maximum(kl, 0.0)
    return float(kl) if kl.ndim == 0 else kl


def _kl_terms(means, variances, targets, sigma_neg):
    """Per-pair KL plus its partials w.r.t. the latent mean and variance."""
    v = np.maximum(variances, VAR_FLOOR)
    s2 = sigma_neg ** 2
    diff = means - targets
    kl = 0.5 * np.log(s2 / v) + (v + diff ** 2) / (2.0 * s2) - 0.5
    kl = np.maximum(kl, 0.0)
    d_mean = diff / s2
    d_var = np.where(variances > VAR_FLOOR, 0.5 / s2 - 0.5 / v, 0.0)
    return kl, d_mean, d_var


def _backend(backend):
    if backend is None:
        from .exact_gp import ExactBackend
        return ExactBackend()
    return backend


def nd_penalty(params, data, neg, backend=None, with_grad=False):
    """Sum over negative pairs of ``log(KL(predictive || blob) + KL_FLOOR)``.

    The predictive is the backend's latent distribution at the negative
    inputs, conditioned on ``data``. Larger is better separated.
    """
    if neg is None or len(neg) == 0:
        raise InvalidInputError("nd_penalty needs at least one negative pair")
    backend = _backend(backend)
    means, variances, vjp = backend.moments(params, data, neg.X)
    kl, d_mean, d_var = _kl_terms(means, variances, neg.y, neg.sigma_neg)
    # summation in index order keeps the reduction reproducible
    penalty = float(np.sum(np.log(kl + KL_FLOOR)))
    if not with_grad:
        return penalty, None
    w = 1.0 / (kl + KL_FLOOR)
    return penalty, vjp(w * d_mean, w * d_var)


def combined_objective(params, data, neg, beta, backend=None, with_grad=False):
    """Backend NLL minus ``beta`` times the repulsion penalty (to be minimized)."""
    if beta < 0:
        raise InvalidInputError(f"beta must be non-negative, got {beta}")
    backend = _backend(backend)
    nll, g_nll = backend.objective(params, data, with_grad=with_grad)
    if beta == 0 or neg is None or len(neg) == 0:
        return nll, g_nll
    pen, g_pen = nd_penalty(params, data, neg, backend, with_grad=with_grad)
    loss = nll - beta * pen
    if not with_grad:
        return loss, None
    return loss, g_nll - beta * g_pen
