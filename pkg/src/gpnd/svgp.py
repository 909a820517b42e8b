"""
Sparse variational GP (inducing points, Gaussian q(u) = N(m, S)).

Inducing values are deviations from the constant mean: p(u) = N(0, K_MM).
The variational covariance is stored through its Cholesky factor; the
packed vector holds the strict lower triangle as-is and the diagonal on the
log scale, so every unconstrained vector decodes to a valid S.

Packed layout: [kernel (4), Z (M*d, row-major), m (M), tril(L_S) (M(M+1)/2)].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError
from .exact_gp import LOG_2PI, PredictiveDistribution
from .kernel import JITTER, N_KERNEL_PARAMS, KernelParams, cholesky, sqdist

__all__ = [
    "VariationalParams",
    "SparseParams",
    "elbo",
    "svgp_posterior",
    "init_variational",
    "SparseBackend",
]


@dataclass(frozen=True)
class VariationalParams:
    Z: np.ndarray
    m_vec: np.ndarray
    L_S: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        m = np.asarray(self.m_vec, dtype=float).reshape(-1)
        L = np.tril(np.asarray(self.L_S, dtype=float))
        M = Z.shape[0]
        if M < 1 or m.shape != (M,) or L.shape != (M, M):
            raise InvalidInputError(
                f"inconsistent variational shapes Z={Z.shape} m={m.shape} L={L.shape}")
        if np.any(np.diag(L) <= 0):
            raise InvalidInputError("L_S must have a strictly positive diagonal")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "m_vec", m)
        object.__setattr__(self, "L_S", L)

    @property
    def M(self):
        return self.Z.shape[0]

    @property
    def S(self):
        return self.L_S @ self.L_S.T

    def to_vector(self):
        L = self.L_S.copy()
        L[np.diag_indices_from(L)] = np.log(np.diag(L))
        return np.concatenate([self.Z.ravel(), self.m_vec,
                               L[np.tril_indices(self.M)]])

    @classmethod
    def from_vector(cls, vec, M, d):
        vec = np.asarray(vec, dtype=float)
        nz = M * d
        Z = vec[:nz].reshape(M, d)
        m = vec[nz:nz + M]
        L = np.zeros((M, M))
        L[np.tril_indices(M)] = vec[nz + M:]
        L[np.diag_indices(M)] = np.exp(np.diag(L))
        return cls(Z, m, L)

    def as_dict(self):
        return {"Z": self.Z.tolist(), "m_vec": self.m_vec.tolist(),
                "L_S": self.L_S.tolist()}


@dataclass(frozen=True)
class SparseParams:
    """Kernel and variational parameters trained together."""

    kernel: KernelParams
    var: VariationalParams


def _as_2d(X):
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


class _Core:
    """Shared factorization of K_MM and the projections at a set of inputs."""

    def __init__(self, params, var, Xq):
        self.params = params
        self.var = var
        self.Xq = _as_2d(Xq)
        ell2 = params.lengthscale ** 2
        sf2 = params.signal_var
        Z = var.Z
        M = var.M
        self.Dmm = sqdist(Z, Z)
        self.Kmm0 = sf2 * np.exp(-0.5 * self.Dmm / ell2)
        Kmm = self.Kmm0.copy()
        Kmm[np.diag_indices(M)] += JITTER
        self.Lm = cholesky(Kmm, params)
        self.Dnm = sqdist(self.Xq, Z)
        self.Knm = sf2 * np.exp(-0.5 * self.Dnm / ell2)
        self.A = self.solve(self.Knm.T).T  # K_nm K_mm^-1
        self.beta_m = self.solve(var.m_vec)
        self.S = var.S
        self.AS = self.A @ self.S
        self.means = params.mean_const + self.Knm @ self.beta_m
        self.kt_diag = sf2 - np.sum(self.A * self.Knm, axis=1)
        self.variances = self.kt_diag + np.sum(self.AS * self.A, axis=1)

    def solve(self, B):
        return sla.cho_solve((self.Lm, True), B)

    def backprop(self, g_mean, g_var, G_mm=None, G_S=None):
        """Cotangents on (means, variances) -> kernel, Z, m and S gradients."""
        p = self.params
        ell2 = p.lengthscale ** 2
        sf2 = p.signal_var
        g_mean = np.asarray(g_mean, dtype=float)
        g_var = np.asarray(g_var, dtype=float)
        A, Knm, Kmm0 = self.A, self.Knm, self.Kmm0
        Kinv_S_T = self.solve(self.S)  # K_mm^-1 S

        AgV = A * g_var[:, None]
        G_nm = (np.outer(g_mean, self.beta_m)
                + 2.0 * g_var[:, None] * self.solve(self.AS.T).T - 2.0 * AgV)
        AtgVA = A.T @ AgV
        G = -np.outer(A.T @ g_mean, self.beta_m) + AtgVA - 2.0 * Kinv_S_T @ AtgVA
        if G_mm is not None:
            G = G + G_mm
        G_S_total = AtgVA if G_S is None else AtgVA + G_S

        g_kern = np.array([
            float(np.sum(G_nm * Knm * self.Dnm) + np.sum(G * Kmm0 * self.Dmm)) / ell2,
            float(np.sum(G_nm * Knm) + np.sum(G * Kmm0) + sf2 * np.sum(g_var)),
            0.0,
            float(np.sum(g_mean)),
        ])

        Z = self.var.Z
        W = (G + G.T) * Kmm0
        gZ = (W @ Z - W.sum(axis=1)[:, None] * Z) / ell2
        V = G_nm * Knm
        gZ += (V.T @ self.Xq - V.sum(axis=0)[:, None] * Z) / ell2
        g_m = A.T @ g_mean
        return g_kern, gZ, g_m, G_S_total

    def pack_grad(self, g_kern, gZ, g_m, G_S, extra_logdiag=None):
        L = self.var.L_S
        gL = np.tril((G_S + G_S.T) @ L)
        gL[np.diag_indices_from(gL)] *= np.diag(L)
        if extra_logdiag is not None:
            gL[np.diag_indices_from(gL)] += extra_logdiag
        return np.concatenate([g_kern, gZ.ravel(), g_m,
                               gL[np.tril_indices(self.var.M)]])


def _kl_qp(core):
    """KL(N(m, S) || N(0, K_MM)) and its partials w.r.t. K_MM, m and S."""
    var = core.var
    M = var.M
    Kinv_S = core.solve(core.S)
    logdet_K = 2.0 * np.sum(np.log(np.diag(core.Lm)))
    logdet_S = 2.0 * np.sum(np.log(np.diag(var.L_S)))
    kl = 0.5 * (np.trace(Kinv_S) + var.m_vec @ core.beta_m - M + logdet_K - logdet_S)
    Kinv = core.solve(np.eye(M))
    dK = 0.5 * (Kinv - Kinv_S @ Kinv - np.outer(core.beta_m, core.beta_m))
    return float(kl), dK, core.beta_m, 0.5 * Kinv


def elbo(params, var, data, batch=None, with_grad=False):
    """Evidence lower bound; minibatches are rescaled by ``n / |batch|``.

    Returns ``(elbo, grad)`` with the gradient over the packed layout.
    """
    X = _as_2d(data.X)
    y = np.asarray(data.y, dtype=float)
    n = len(y)
    if n == 0:
        raise InvalidInputError("elbo needs at least one training point")
    if batch is not None:
        batch = np.asarray(batch, dtype=int)
        if batch.size == 0 or batch.min() < 0 or batch.max() >= n:
            raise InvalidInputError("batch indices out of range")
        X, y = X[batch], y[batch]
    scale = n / len(y)
    obs = params.noise_var + JITTER

    core = _Core(params, var, X)
    resid = y - core.means
    quad = resid ** 2 + core.variances
    fit = scale * float(np.sum(-0.5 * (LOG_2PI + np.log(obs)) - quad / (2.0 * obs)))
    kl, dKL_dK, dKL_dm, dKL_dS_half = _kl_qp(core)
    value = fit - kl
    if not with_grad:
        return value, None

    g_mean = scale * resid / obs
    g_var = np.full(len(y), -scale / (2.0 * obs))
    g_kern, gZ, g_m, G_S = core.backprop(g_mean, g_var, G_mm=-dKL_dK,
                                         G_S=-dKL_dS_half)
    g_kern[2] = scale * float(np.sum(-0.5 / obs + quad / (2.0 * obs ** 2))) \
        * params.noise_var_slope
    g_m = g_m - dKL_dm
    # the +1/2 log|S| entropy term differentiates to 1 per log-diagonal entry
    return value, core.pack_grad(g_kern, gZ, g_m, G_S,
                                 extra_logdiag=np.ones(var.M))


def svgp_posterior(params, var, Xstar, include_noise=False):
    core = _Core(params, var, Xstar)
    variances = np.maximum(core.variances, 0.0)
    if include_noise:
        variances = variances + params.noise_var
    return PredictiveDistribution(core.means.copy(), variances)


def sparse_moments(params, var, Xq):
    """Latent moments at ``Xq`` and a vjp over the packed sparse layout."""
    core = _Core(params, var, Xq)

    def vjp(g_mean, g_var):
        g_kern, gZ, g_m, G_S = core.backprop(g_mean, g_var)
        return core.pack_grad(g_kern, gZ, g_m, G_S)

    return core.means.copy(), core.variances.copy(), vjp


def init_variational(params, X, M, rng):
    """Inducing inputs drawn without replacement from ``X``; q(u) starts at p(u)."""
    X = _as_2d(X)
    M = int(min(M, X.shape[0]))
    if M < 1:
        raise InvalidInputError("need at least one inducing point")
    idx = np.sort(rng.choice(X.shape[0], size=M, replace=False))
    Z = X[idx].copy()
    K = params.signal_var * np.exp(-0.5 * sqdist(Z, Z) / params.lengthscale ** 2)
    K[np.diag_indices(M)] += JITTER
    L = cholesky(K, params)
    return VariationalParams(Z, np.zeros(M), L)


class SparseBackend:
    """Model handle for the sparse variational GP.

    ``freeze_inducing`` zeroes the gradient on Z so its locations stay put.
    """

    name = "svgp"

    def __init__(self, num_inducing=1000, freeze_inducing=False):
        self.num_inducing = int(num_inducing)
        self.freeze_inducing = bool(freeze_inducing)
        self._shape = None

    def init_params(self, data, rng):
        y = np.asarray(data.y, dtype=float)
        kern = KernelParams(0.0, 0.0, float(np.log(0.1)), float(np.mean(y)))
        var = init_variational(kern, data.X, self.num_inducing, rng)
        return SparseParams(kern, var)

    def pack(self, params):
        self._shape = params.var.Z.shape
        return np.concatenate([params.kernel.to_vector(), params.var.to_vector()])

    def unpack(self, vec):
        if self._shape is None:
            raise InvalidInputError("pack() must be called before unpack()")
        M, d = self._shape
        return SparseParams(KernelParams.from_vector(vec[:N_KERNEL_PARAMS]),
                            VariationalParams.from_vector(vec[N_KERNEL_PARAMS:], M, d))

    def kernel_params(self, params):
        return params.kernel

    def _mask(self, grad, params):
        if self.freeze_inducing and grad is not None:
            nz = params.var.Z.size
            grad = grad.copy()
            grad[N_KERNEL_PARAMS:N_KERNEL_PARAMS + nz] = 0.0
        return grad

    def objective(self, params, data, batch=None, with_grad=False):
        value, grad = elbo(params.kernel, params.var, data, batch, with_grad)
        if grad is not None:
            grad = self._mask(-grad, params)
        return -value, grad

    def moments(self, params, data, Xq):
        means, variances, vjp = sparse_moments(params.kernel, params.var, Xq)

        def masked(g_mean, g_var):
            return self._mask(vjp(g_mean, g_var), params)

        return means, variances, masked

    def predict(self, params, data, Xq, full_cov=False, include_noise=False):
        if full_cov:
            raise InvalidInputError("the sparse backend reports diagonal variances only")
        return svgp_posterior(params.kernel, params.var, Xq, include_noise)
