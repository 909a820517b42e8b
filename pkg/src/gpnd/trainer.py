"""
First-order training loop for classical and negative-datapair GP fits.

In alternating mode each epoch takes one Adam step on the backend NLL and
then, when negatives are active, one step that ascends ``beta * penalty``.
Both steps share a single Adam state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError, TrainingError
from .negcon import nd_penalty
from .optim import AdamState, optimizer_step

__all__ = ["TrainConfig", "FitReport", "fit", "params_to_dict"]

MODES = ("classical", "gp_nd")
ALTERNATIONS = ("alternating", "joint")


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.0
    sigma_neg: Optional[float] = None
    learning_rate: float = 0.1
    epochs: int = 400
    batch_size: Optional[int] = None
    seed: int = 0
    mode: str = "gp_nd"
    alternation: str = "alternating"
    early_stop: bool = False
    tol: float = 1e-6
    patience: int = 20
    record_params: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alternation not in ALTERNATIONS:
            raise InvalidInputError(
                f"alternation must be one of {ALTERNATIONS}, got {self.alternation!r}")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if int(self.epochs) < 1:
            raise InvalidInputError("epochs must be >= 1")
        if self.beta < 0:
            raise InvalidInputError("beta must be non-negative")
        if self.sigma_neg is not None and not self.sigma_neg > 0:
            raise InvalidInputError("sigma_neg must be positive")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise InvalidInputError("batch_size must be positive")
        if self.mode == "classical":
            object.__setattr__(self, "beta", 0.0)

    @property
    def uses_negatives(self):
        return self.mode == "gp_nd" and self.beta > 0


@dataclass
class FitReport:
    backend: str
    final_params: object
    nll_trace: list = field(default_factory=list)
    penalty_trace: list = field(default_factory=list)
    wall_clock_per_epoch: list = field(default_factory=list)
    converged_epoch: Optional[int] = None
    param_trace: Optional[list] = None

    @property
    def epochs_run(self):
        return len(self.nll_trace)

    def to_dict(self):
        return {
            "backend": self.backend,
            "epochs_run": self.epochs_run,
            "converged_epoch": self.converged_epoch,
            "final_params": params_to_dict(self.final_params),
            "nll_trace": [float(v) for v in self.nll_trace],
            "penalty_trace": [float(v) for v in self.penalty_trace],
            "wall_clock_per_epoch": [float(v) for v in self.wall_clock_per_epoch],
        }


def params_to_dict(params):
    if hasattr(params, "var"):
        return {"kernel": params.kernel.as_dict(), "variational": params.var.as_dict()}
    return {"kernel": params.as_dict()}


def _check(value, epoch, what, vec):
    if not np.isfinite(value):
        raise TrainingError(f"non-finite {what} at epoch {epoch}", epoch=epoch,
                            snapshot=[float(v) for v in vec])


def _step(vec, grad, state, lr, epoch):
    try:
        return optimizer_step(vec, grad, state, lr)
    except TrainingError as exc:
        raise TrainingError(f"{exc} at epoch {epoch}", epoch=epoch,
                            snapshot=[float(v) for v in vec]) from None


def fit(backend, data, neg=None, config=None, init=None,
        clock: Callable[[], float] = time.perf_counter):
    """Train ``backend`` on ``data`` (and ``neg`` in gp_nd mode).

    ``init`` overrides the backend's initial parameters. ``clock`` is only
    used for the per-epoch wall-clock record.
    """
    config = config or TrainConfig()
    if len(data) == 0:
        raise InvalidInputError("cannot train on an empty dataset")
    if config.mode == "gp_nd" and neg is None:
        raise InvalidInputError("gp_nd mode needs a NegativeSet")
    if neg is not None and config.sigma_neg is not None:
        neg = neg.with_sigma(config.sigma_neg)
    active = config.uses_negatives and neg is not None and len(neg) > 0

    rng = np.random.default_rng(config.seed)
    params = init if init is not None else backend.init_params(data, rng)
    vec = backend.pack(params)
    state = AdamState.zeros(vec.size)
    batch_size = config.batch_size
    if batch_size is not None and batch_size >= len(data):
        batch_size = None

    report = FitReport(backend.name, params,
                       param_trace=[vec.copy()] if config.record_params else None)
    prev_obj = None
    streak = 0
    for epoch in range(int(config.epochs)):
        try:
            vec, state, nll, pen = _epoch(backend, data, neg, config, rng, vec, state,
                                          batch_size, active, epoch, clock, report)
        except (OverflowError, FloatingPointError) as exc:
            raise TrainingError(f"overflow at epoch {epoch}: {exc}", epoch=epoch,
                                snapshot=[float(v) for v in vec]) from None
        if report.param_trace is not None:
            report.param_trace.append(vec.copy())

        obj = nll - config.beta * pen if active else nll
        if prev_obj is not None and abs(obj - prev_obj) <= config.tol * max(abs(prev_obj), 1e-12):
            streak += 1
        else:
            streak = 0
        prev_obj = obj
        if streak >= config.patience and report.converged_epoch is None:
            report.converged_epoch = epoch
            if config.early_stop:
                break

    report.final_params = backend.unpack(vec)
    return report


def _epoch(backend, data, neg, config, rng, vec, state, batch_size, active, epoch,
           clock, report):
    """One epoch: NLL step, then the repulsion step when negatives are active."""
    lr = config.learning_rate
    t0 = clock()
    batch = None
    if batch_size is not None:
        batch = np.sort(rng.choice(len(data), size=batch_size, replace=False))
    params = backend.unpack(vec)
    pen = 0.0
    nll, g_nll = backend.objective(params, data, batch, with_grad=True)
    _check(nll, epoch, "loss", vec)
    if active and config.alternation == "joint":
        pen, g_pen = nd_penalty(params, data, neg, backend, with_grad=True)
        _check(pen, epoch, "penalty", vec)
        vec, state = _step(vec, g_nll - config.beta * g_pen, state, lr, epoch)
    else:
        vec, state = _step(vec, g_nll, state, lr, epoch)
        if active:
            params = backend.unpack(vec)
            pen, g_pen = nd_penalty(params, data, neg, backend, with_grad=True)
            _check(pen, epoch, "penalty", vec)
            vec, state = _step(vec, -config.beta * g_pen, state, lr, epoch)
    report.wall_clock_per_epoch.append(max(clock() - t0, 0.0))
    report.nll_trace.append(float(nll))
    report.penalty_trace.append(float(pen))
    return vec, state, nll, pen
