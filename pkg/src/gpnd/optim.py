"""Adam with bias-corrected moments over a flat parameter vector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, TrainingError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size):
        return cls(np.zeros(size), np.zeros(size), 0)


def optimizer_step(params, grad, state, lr):
    """One Adam step. Returns ``(new_params, new_state)``; inputs are not mutated."""
    grad = np.asarray(grad, dtype=float)
    params = np.asarray(params, dtype=float)
    if grad.shape != state.m.shape or params.shape != grad.shape:
        raise InvalidInputError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise TrainingError("non-finite gradient", snapshot=params.tolist())
    t = state.t + 1
    m = BETA1 * state.m + (1.0 - BETA1) * grad
    v = BETA2 * state.v + (1.0 - BETA2) * grad * grad
    m_hat = m / (1.0 - BETA1 ** t)
    v_hat = v / (1.0 - BETA2 ** t)
    return params - lr * m_hat / (np.sqrt(v_hat) + EPS), AdamState(m, v, t)
