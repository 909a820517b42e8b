"""
Synthetic trajectory scene: noisy markers along a smooth path inside a
corridor, obstacles placed beside the path, clearance evaluation and
(beta, sigma_neg) sweeps.

The trajectory is a scalar GP over a 1-d path parameter ``t``; the target is
the lateral position.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .data import Dataset, metrics
from .errors import GPNDError, InvalidInputError
from .exact_gp import ExactBackend
from .negcon import NegativeSet
from .trainer import TrainConfig, fit

__all__ = [
    "PATHS",
    "Scene",
    "AvoidanceReport",
    "make_scene",
    "evaluate_avoidance",
    "holdout_split",
    "run_pair",
    "sweep",
    "SWEEP_COLUMNS",
    "write_sweep_csv",
]

T_RANGE = (0.0, 10.0)
CORRIDOR = (-3.0, 3.0)
HOLDOUT_FRAC = 0.2
DEFAULT_GAP = 0.4
MAX_DRAW_ROUNDS = 100
SWEEP_COLUMNS = ("beta", "sigma_neg", "min_clearance", "mean_clearance",
                 "collisions", "rmse", "nll", "epochs_run", "seconds")


def _two_sines(t):
    return np.sin(0.6 * t) + 0.5 * np.sin(1.7 * t + 0.5)


def _s_bend(t):
    return 1.5 * np.tanh(t - 5.0)


def _wave(t):
    return 1.2 * np.sin(0.9 * t)


PATHS = {"two_sines": _two_sines, "s_bend": _s_bend, "wave": _wave}


@dataclass(frozen=True)
class Scene:
    markers: Dataset
    obstacles: NegativeSet
    ground_truth: Callable
    corridor: tuple
    path: str = "two_sines"
    seed: int = 0

    @property
    def lane_width(self):
        return 0.05 * (self.corridor[1] - self.corridor[0])

    def check_invariants(self):
        lo, hi = self.corridor
        y = self.markers.y
        if np.any(y < lo) or np.any(y > hi):
            return False
        truth = self.ground_truth(self.obstacles.X[:, 0])
        return bool(np.all(self.obstacles.y != truth))


def make_scene(path="two_sines", n_markers=250, m_obstacles=10, noise_std=None,
               seed=0, sigma_neg=0.1, gap=DEFAULT_GAP):
    """Build a seeded scene.

    Obstacles sit 1-3 lane widths to a random side of the path. Markers are
    the path plus Gaussian noise, sampled uniformly in ``t`` except within
    ``gap`` of an obstacle input, so every obstacle lies in an unobserved
    stretch of road. ``gap=0`` gives plain uniform sampling.
    """
    if path not in PATHS:
        raise InvalidInputError(f"unknown path {path!r}; choose from {sorted(PATHS)}")
    if n_markers < 2 or m_obstacles < 0:
        raise InvalidInputError("need n_markers >= 2 and m_obstacles >= 0")
    g = PATHS[path]
    lo, hi = CORRIDOR
    t_lo, t_hi = T_RANGE
    span = t_hi - t_lo
    lane = 0.05 * (hi - lo)
    noise_std = lane if noise_std is None else float(noise_std)
    rng = np.random.default_rng(seed)

    if m_obstacles == 0:
        obstacles = NegativeSet.empty(1, sigma_neg)
    else:
        # keep obstacles away from the ends where the GP is least constrained
        tb = np.sort(rng.uniform(t_lo + 0.05 * span, t_hi - 0.05 * span,
                                 size=m_obstacles))
        side = rng.choice([-1.0, 1.0], size=m_obstacles)
        offset = lane * rng.uniform(1.0, 3.0, size=m_obstacles)
        obstacles = NegativeSet(tb[:, None], g(tb) + side * offset, sigma_neg)
    t = np.empty(0)
    for _ in range(MAX_DRAW_ROUNDS):
        if t.size >= n_markers:
            break
        cand = rng.uniform(t_lo, t_hi, size=2 * n_markers)
        if gap > 0 and m_obstacles > 0:
            dist = np.min(np.abs(cand[:, None] - obstacles.X[:, 0][None, :]), axis=1)
            cand = cand[dist > gap]
        t = np.concatenate([t, cand])
    else:
        raise InvalidInputError("observation gaps leave too little of the path to sample")
    t = np.sort(t[:n_markers])
    y = np.clip(g(t) + noise_std * rng.standard_normal(n_markers), lo, hi)
    markers = Dataset(t[:, None], y, ("t",), "lateral")
    return Scene(markers, obstacles, g, (lo, hi), path, seed)


@dataclass(frozen=True)
class AvoidanceReport:
    clearances: np.ndarray
    min_clearance: float
    mean_clearance: float
    collisions: int
    threshold: float

    def as_dict(self):
        return {"min_clearance": self.min_clearance,
                "mean_clearance": self.mean_clearance,
                "collisions": self.collisions, "threshold": self.threshold,
                "clearances": [float(c) for c in self.clearances]}


def evaluate_avoidance(pred, neg, k=2.0):
    means = np.asarray(pred.means, dtype=float)
    if means.shape[0] != len(neg):
        raise InvalidInputError(
            f"length mismatch: {means.shape[0]} predictions vs {len(neg)} obstacles")
    c = np.abs(means - neg.y)
    thr = k * neg.sigma_neg
    if c.size == 0:
        return AvoidanceReport(c, float("inf"), float("inf"), 0, thr)
    return AvoidanceReport(c, float(c.min()), float(c.mean()), int(np.sum(c < thr)), thr)


def holdout_split(scene, seed=None):
    """Seeded 80/20 marker split used for the holdout RMSE."""
    n = len(scene.markers)
    rng = np.random.default_rng(scene.seed if seed is None else seed)
    perm = rng.permutation(n)
    n_test = max(1, int(round(HOLDOUT_FRAC * n)))
    test, train = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return scene.markers.subset(train), scene.markers.subset(test)


def run_pair(scene, config, backend=None, k=2.0, clock=time.perf_counter):
    """Fit on the training markers and score clearance + holdout metrics.

    Returns ``(report, avoidance, (nll, rmse), seconds)``.
    """
    backend = backend or ExactBackend()
    train, test = holdout_split(scene)
    neg = scene.obstacles
    if config.sigma_neg is not None:
        neg = neg.with_sigma(config.sigma_neg)
    t0 = clock()
    report = fit(backend, train, neg if config.mode == "gp_nd" else None, config,
                 clock=clock)
    seconds = max(clock() - t0, 0.0)
    params = report.final_params
    kern = backend.kernel_params(params)
    avoid = evaluate_avoidance(backend.predict(params, train, neg.X), neg, k)
    pred = backend.predict(params, train, test.X)
    scores = metrics(pred, test.y, kern.noise_var)
    return report, avoid, scores, seconds


def _sweep_cell(scene, beta, sigma, base, backend, k, clock):
    cfg = replace(base, beta=float(beta), sigma_neg=float(sigma), mode="gp_nd")
    row = {"beta": float(beta), "sigma_neg": float(sigma)}
    try:
        report, avoid, (nll, rmse), seconds = run_pair(scene, cfg, backend, k, clock)
    except GPNDError as exc:
        row.update(min_clearance=float("nan"), mean_clearance=float("nan"),
                   collisions=-1, rmse=float("nan"), nll=float("nan"),
                   epochs_run=0, seconds=0.0, error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(min_clearance=avoid.min_clearance, mean_clearance=avoid.mean_clearance,
               collisions=avoid.collisions, rmse=rmse, nll=nll,
               epochs_run=report.epochs_run, seconds=seconds, error="")
    return row


def sweep(scene, betas, sigmas, base=None, backend=None, k=2.0, jobs=1,
          clock=time.perf_counter):
    """Train one GP-ND model per (beta, sigma_neg) cell; rows ordered beta-major."""
    if len(betas) == 0 or len(sigmas) == 0:
        raise InvalidInputError("sweep grids must be non-empty")
    base = base or TrainConfig(epochs=100)
    backend = backend or ExactBackend()
    cells = [(b, s) for b in betas for s in sigmas]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                lambda c: _sweep_cell(scene, c[0], c[1], base, backend, k, clock), cells))
    else:
        rows = [_sweep_cell(scene, b, s, base, backend, k, clock) for b, s in cells]
    return rows


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_sweep_csv(rows, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in SWEEP_COLUMNS])
