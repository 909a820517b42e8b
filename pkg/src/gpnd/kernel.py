"""
RBF covariance function and its hyperparameters.

All positive hyperparameters are stored on the log scale so that the
optimizer works on an unconstrained vector. The packed order used for
every gradient in this package is::

    [log_lengthscale, log_signal_var, log_noise_var, mean_const]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .errors import InvalidInputError, NumericalError

__all__ = [
    "JITTER",
    "NOISE_FLOOR",
    "KernelParams",
    "rbf_eval",
    "gram",
    "gram_grads",
    "sqdist",
    "cholesky",
]

JITTER = 1e-8
NOISE_FLOOR = 1e-8
N_KERNEL_PARAMS = 4


@dataclass(frozen=True)
class KernelParams:
    log_lengthscale: float = 0.0
    log_signal_var: float = 0.0
    log_noise_var: float = float(np.log(0.1))
    mean_const: float = 0.0

    @classmethod
    def from_values(cls, lengthscale=1.0, signal_var=1.0, noise_var=0.1,
                    mean_const=0.0):
        """Build from constrained (positive) values."""
        if min(lengthscale, signal_var, noise_var) <= 0:
            raise InvalidInputError("hyperparameters must be positive")
        return cls(float(np.log(lengthscale)), float(np.log(signal_var)),
                   float(np.log(noise_var)), float(mean_const))

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(*(float(v) for v in vec[:N_KERNEL_PARAMS]))

    def to_vector(self):
        return np.array([self.log_lengthscale, self.log_signal_var,
                         self.log_noise_var, self.mean_const])

    @property
    def lengthscale(self):
        return float(np.exp(self.log_lengthscale))

    @property
    def signal_var(self):
        return float(np.exp(self.log_signal_var))

    @property
    def noise_var(self):
        return max(float(np.exp(self.log_noise_var)), NOISE_FLOOR)

    @property
    def noise_var_slope(self):
        # d noise_var / d log_noise_var; zero where the floor is active.
        raw = float(np.exp(self.log_noise_var))
        return raw if raw > NOISE_FLOOR else 0.0

    def as_dict(self):
        return {
            "log_lengthscale": self.log_lengthscale,
            "log_signal_var": self.log_signal_var,
            "log_noise_var": self.log_noise_var,
            "mean_const": self.mean_const,
        }


def _as_matrix(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array, got ndim={A.ndim}")
    return A


def sqdist(A, B):
    """Pairwise squared Euclidean distances; exact zeros for identical rows."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise InvalidInputError(
            f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    if A.shape[0] == 0 or B.shape[0] == 0:
        return np.zeros((A.shape[0], B.shape[0]))
    return cdist(A, B, "sqeuclidean")


def rbf_eval(params, x1, x2):
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x1.shape != x2.shape or x1.ndim != 1:
        raise InvalidInputError(
            f"dimension mismatch: {x1.shape} vs {x2.shape}")
    d2 = float(np.sum((x1 - x2) ** 2))
    return params.signal_var * float(np.exp(-0.5 * d2 / params.lengthscale ** 2))


def gram(params, A, B=None):
    """Cross-covariance matrix ``k(A, B)``; ``B`` defaults to ``A``."""
    D = sqdist(A, A if B is None else B)
    return params.signal_var * np.exp(-0.5 * D / params.lengthscale ** 2)


def gram_grads(params, A):
    """Derivatives of ``gram(params, A)`` w.r.t. log lengthscale and log signal variance."""
    D = sqdist(A, A)
    K = params.signal_var * np.exp(-0.5 * D / params.lengthscale ** 2)
    return K * D / params.lengthscale ** 2, K


def cholesky(K, params=None):
    """Lower Cholesky factor; ``K`` is expected to already carry its jitter."""
    try:
        return sla.cholesky(K, lower=True, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        snapshot = params.as_dict() if params is not None else None
        raise NumericalError(
            f"Cholesky factorization failed ({exc}); params={snapshot}",
            params=snapshot) from exc
