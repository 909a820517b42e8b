"""
Command-line front end.

    gpnd fit      train on a CSV (classical or with negative pairs) and save a model
    gpnd predict  predictive means/variances for a query CSV
    gpnd scene    classical vs GP-ND on the synthetic trajectory scene
    gpnd sweep    (beta, sigma_neg) grid on the scene
    gpnd bench    paired classical / GP-ND timing

Settings come from flags, optionally layered over a JSON file given with
``--config``; flags win. Exit codes: 0 ok, 2 configuration, 3 ingestion,
4 numerical, 5 training.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import Dataset, Standardization, load_csv, metrics, shuffle_negatives
from .errors import (
    ConfigError,
    GenerationError,
    GPNDError,
    IngestionError,
    InvalidInputError,
    NumericalError,
    TrainingError,
)
from .exact_gp import ExactBackend
from .negcon import NegativeSet
from .persist import atomic_write_text, dump_json, load_model, save_model
from .scene import (
    SWEEP_COLUMNS,
    holdout_split,
    make_scene,
    run_pair,
    sweep,
    write_sweep_csv,
)
from .svgp import SparseBackend
from .trainer import TrainConfig, fit

log = logging.getLogger("gpnd")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_NUMERICAL = 4
EXIT_TRAINING = 5

COMMANDS = ("fit", "predict", "scene", "sweep", "bench")
DEFAULT_EPOCHS = {"fit": 400, "predict": 400, "scene": 100, "sweep": 100, "bench": 50}


@dataclass
class RunConfig:
    command: str
    backend: str = "exact"
    data: Optional[str] = None
    target: str = "-1"
    header: bool = True
    model: Optional[str] = None
    query: Optional[str] = None
    out: str = "."
    report: str = "json"
    mode: Optional[str] = None
    alternation: str = "alternating"
    beta: float = 3.0
    sigma_neg: float = 0.1
    lr: float = 0.1
    epochs: Optional[int] = None
    batch_size: Optional[int] = None
    inducing: int = 1000
    freeze_inducing: bool = False
    negatives: Optional[str] = None
    standardize: bool = True
    seed: int = 0
    jobs: int = 1
    early_stop: bool = False
    deterministic: bool = False
    # scene / sweep
    path: str = "two_sines"
    markers: int = 250
    obstacles: int = 10
    noise_std: Optional[float] = None
    gap: Optional[float] = None
    k: float = 2.0
    betas: str = "3,0.1"
    sigmas: str = "3,0.1"
    # bench
    m_list: str = "200,800"
    runs: int = 10
    synthetic_n: int = 1599

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.backend not in ("exact", "svgp"):
            raise ConfigError(f"--backend must be exact or svgp, got {self.backend!r}")
        if self.report not in ("json", "csv"):
            raise ConfigError(f"--report must be json or csv, got {self.report!r}")
        if self.mode is not None and self.mode not in ("classical", "gp_nd"):
            raise ConfigError(f"--mode must be classical or gp_nd, got {self.mode!r}")
        if self.epochs is None:
            self.epochs = DEFAULT_EPOCHS[self.command]
        if self.command == "fit" and not self.data:
            raise ConfigError("fit needs --data")
        if self.command == "predict" and not (self.model and self.query):
            raise ConfigError("predict needs --model and --query")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")

    def train_config(self, mode=None):
        mode = mode or self.mode or ("gp_nd" if self.negatives else "classical")
        return TrainConfig(beta=self.beta, sigma_neg=self.sigma_neg,
                           learning_rate=self.lr, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed, mode=mode,
                           alternation=self.alternation, early_stop=self.early_stop)

    def make_backend(self):
        if self.backend == "svgp":
            return SparseBackend(self.inducing, self.freeze_inducing)
        return ExactBackend()

    def clock(self):
        if self.deterministic:
            return lambda: 0.0
        return time.perf_counter


def _floats(text, name):
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name} must be a comma-separated list of numbers") from None
    if not vals:
        raise ConfigError(f"{name} is empty")
    return vals


def _target(value):
    try:
        return int(value)
    except (TypeError, ValueError):
        return value


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _write_table(out, stem, header, rows, report):
    if report == "csv":
        atomic_write_text(out / f"{stem}.csv", _csv_text(header, rows))
    else:
        dump_json([dict(zip(header, r)) for r in rows], out / f"{stem}.json")


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


# --------------------------------------------------------------------------
# commands


def _parse_negatives(source, data, cfg):
    """``shuffled:m=200`` or ``file:<csv>`` (same column layout as the data)."""
    if source is None:
        return None
    kind, _, rest = source.partition(":")
    if kind == "shuffled":
        opts = dict(kv.split("=", 1) for kv in rest.split(",") if "=" in kv)
        try:
            m = int(opts.get("m", 200))
        except ValueError:
            raise ConfigError(f"bad negatives source {source!r}") from None
        m = min(m, len(data))
        return shuffle_negatives(data, m, seed=cfg.seed, sigma_neg=cfg.sigma_neg)
    if kind == "file" and rest:
        raw = load_csv(rest, _target(cfg.target), cfg.header)
        X, y = raw.X, raw.y
        st = data.standardization
        if st is not None:
            X, y = st.transform_X(X), st.transform_y(y)
        return NegativeSet(X, y, cfg.sigma_neg)
    raise ConfigError(f"--negatives must be shuffled:m=<int> or file:<csv>, got {source!r}")


def cmd_fit(cfg, out):
    raw = load_csv(cfg.data, _target(cfg.target), cfg.header)
    if cfg.standardize:
        st = Standardization.fit(raw.X, raw.y)
        data = Dataset(st.transform_X(raw.X), st.transform_y(raw.y),
                       raw.feature_names, raw.target_name, st)
    else:
        data = raw
    tc = cfg.train_config()
    neg = _parse_negatives(cfg.negatives, data, cfg) if tc.mode == "gp_nd" else None
    if tc.mode == "gp_nd" and neg is None:
        raise ConfigError("mode gp_nd needs --negatives")
    backend = cfg.make_backend()
    report = fit(backend, data, neg, tc, clock=cfg.clock())

    save_model(out / "model.json", backend, report.final_params, data)
    kern = backend.kernel_params(report.final_params)
    pred = backend.predict(report.final_params, data, data.X)
    nll, rmse = metrics(pred, data.y, kern.noise_var)
    summary = {
        "command": "fit",
        "backend": backend.name,
        "mode": tc.mode,
        "n": len(data),
        "d": data.d,
        "dropped_rows": raw.dropped_rows,
        "n_negatives": 0 if neg is None else len(neg),
        "train_nll": nll,
        "train_rmse": rmse,
    }
    if data.standardization is not None:
        summary["train_rmse_original_units"] = metrics(
            pred, data.y, kern.noise_var, True, data.standardization)[1]
    summary.update(report.to_dict())
    if cfg.report == "csv":
        rows = [(i, report.nll_trace[i], report.penalty_trace[i],
                 report.wall_clock_per_epoch[i]) for i in range(report.epochs_run)]
        atomic_write_text(out / "fit_report.csv",
                          _csv_text(("epoch", "nll", "penalty", "seconds"), rows))
    else:
        dump_json(summary, out / "fit_report.json")
    return summary


def cmd_predict(cfg, out):
    model = load_model(cfg.model)
    target = _target(cfg.target) if cfg.target != "-1" or model.target_name is None \
        else model.target_name
    query = _load_query(cfg.query, cfg.header, target, model)
    X = query.X
    pred = model.predict(X)
    st = model.standardization
    means, var = pred.means, pred.variances
    obs = var + model.kernel.noise_var
    if st is not None:
        means, var, obs = st.inverse_y(means), st.inverse_var(var), st.inverse_var(obs)
    rows = [(i, means[i], var[i], obs[i]) for i in range(len(means))]
    atomic_write_text(out / "predictions.csv",
                      _csv_text(("index", "mean", "variance", "obs_variance"), rows))
    summary = {"command": "predict", "backend": model.backend.name, "n": len(means)}
    if query.y is not None:
        y = query.y if st is None else st.transform_y(query.y)
        nll, rmse = metrics(pred, y, model.kernel.noise_var)
        summary.update(nll=nll, rmse=rmse)
        if st is not None:
            nll_o, rmse_o = metrics(pred, y, model.kernel.noise_var, True, st)
            summary.update(nll_original_units=nll_o, rmse_original_units=rmse_o)
    dump_json(summary, out / "predict_report.json")
    return summary


class _Query:
    def __init__(self, X, y):
        self.X, self.y = X, y


def _load_query(path, header, target, model):
    """Query CSVs may omit the target column; if present it is used for metrics."""
    d = len(model.standardization.x_mean) if model.standardization is not None else None
    if d is None and model.train is not None:
        d = model.train.d
    if d is None:
        d = model.params.var.Z.shape[1]
    with open(path, newline="", encoding="utf-8") as fh:
        first = next(csv.reader(fh), None)
    if first is None:
        raise IngestionError(f"{path} is empty")
    if len(first) == d:
        arr = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
        return _Query(arr, None)
    ds = load_csv(path, target, header)
    return _Query(ds.X, ds.y)


def _scene_from(cfg):
    kwargs = dict(path=cfg.path, n_markers=cfg.markers, m_obstacles=cfg.obstacles,
                  noise_std=cfg.noise_std, seed=cfg.seed, sigma_neg=cfg.sigma_neg)
    if cfg.gap is not None:
        kwargs["gap"] = cfg.gap
    return make_scene(**kwargs)


SCENE_COLUMNS = ("model", "beta", "sigma_neg", "min_clearance", "mean_clearance",
                 "collisions", "rmse", "nll", "epochs_run", "seconds")


def cmd_scene(cfg, out):
    scene = _scene_from(cfg)
    backend = cfg.make_backend()
    clock = cfg.clock()
    rows, fits = [], {}
    for mode in ("classical", "gp_nd"):
        tc = cfg.train_config(mode)
        report, avoid, (nll, rmse), secs = run_pair(scene, tc, backend, cfg.k, clock)
        fits[mode] = report
        rows.append((mode, tc.beta, cfg.sigma_neg, avoid.min_clearance,
                     avoid.mean_clearance, avoid.collisions, rmse, nll,
                     report.epochs_run, secs))
    _write_table(out, "scene_report", SCENE_COLUMNS, rows, cfg.report)

    # plot-ready tables
    m = scene.markers
    atomic_write_text(out / "markers.csv", _csv_text(
        ("t", "lateral"), [(m.X[i, 0], m.y[i]) for i in range(len(m))]))
    ob = scene.obstacles
    atomic_write_text(out / "obstacles.csv", _csv_text(
        ("t", "lateral", "sigma_neg"), [(ob.X[i, 0], ob.y[i], cfg.sigma_neg)
                                        for i in range(len(ob))]))
    train, _ = holdout_split(scene)
    grid = np.linspace(0.0, 10.0, 401)
    truth = scene.ground_truth(grid)
    preds = {k: backend.predict(r.final_params, train, grid[:, None]) for k, r in fits.items()}
    atomic_write_text(out / "curves.csv", _csv_text(
        ("t", "truth", "classical_mean", "classical_variance", "gp_nd_mean", "gp_nd_variance"),
        [(grid[i], truth[i], preds["classical"].means[i], preds["classical"].variances[i],
          preds["gp_nd"].means[i], preds["gp_nd"].variances[i]) for i in range(len(grid))]))
    return {"command": "scene", "rows": [dict(zip(SCENE_COLUMNS, r)) for r in rows]}


def cmd_sweep(cfg, out):
    scene = _scene_from(cfg)
    betas = _floats(cfg.betas, "--betas")
    sigmas = _floats(cfg.sigmas, "--sigmas")
    rows = sweep(scene, betas, sigmas, cfg.train_config("gp_nd"), cfg.make_backend(),
                 cfg.k, cfg.jobs, cfg.clock())
    write_sweep_csv(rows, out / "sweep.csv")
    if cfg.report == "json":
        dump_json([{c: _jsonable(r[c]) for c in SWEEP_COLUMNS + ("error",)} for r in rows],
                  out / "sweep.json")
    return {"command": "sweep", "cells": len(rows)}


BENCH_COLUMNS = ("backend", "n", "m", "epochs", "runs", "classical_seconds",
                 "gp_nd_seconds", "delta_t_seconds", "delta_t_per_epoch_seconds")


def synthetic_table(n, d=11, seed=0):
    """Discrete-target table shaped like a small wine-quality set (integer labels 3-8)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    w = rng.standard_normal(d) / np.sqrt(d)
    y = np.clip(np.round(5.6 + 0.8 * (X @ w) + 0.5 * rng.standard_normal(n)), 3, 8)
    return Dataset(X, y)


def bench_pair(backend, data, neg, cfg, clock=time.perf_counter):
    """Mean wall-clock of classical and GP-ND training over ``cfg.runs`` paired runs."""
    tc_c = cfg.train_config("classical")
    tc_n = cfg.train_config("gp_nd")
    t_c, t_n = [], []
    for _ in range(cfg.runs):
        t0 = clock()
        fit(backend, data, None, tc_c, clock=clock)
        t1 = clock()
        fit(backend, data, neg, tc_n, clock=clock)
        t2 = clock()
        t_c.append(t1 - t0)
        t_n.append(t2 - t1)
    return float(np.mean(t_c)), float(np.mean(t_n))


def cmd_bench(cfg, out):
    if cfg.data:
        raw = load_csv(cfg.data, _target(cfg.target), cfg.header)
    else:
        raw = synthetic_table(cfg.synthetic_n, seed=cfg.seed)
    st = Standardization.fit(raw.X, raw.y)
    data = Dataset(st.transform_X(raw.X), st.transform_y(raw.y), standardization=st)
    backend = cfg.make_backend()
    clock = cfg.clock()
    rows = []
    for m in [int(v) for v in _floats(cfg.m_list, "--m-list")]:
        neg = shuffle_negatives(data, min(m, len(data)), cfg.seed, cfg.sigma_neg)
        tc, tn = bench_pair(backend, data, neg, cfg, clock)
        rows.append((backend.name, len(data), m, cfg.epochs, cfg.runs, tc, tn,
                     tn - tc, (tn - tc) / cfg.epochs))
    _write_table(out, "bench", BENCH_COLUMNS, rows, cfg.report)
    return {"command": "bench", "rows": [dict(zip(BENCH_COLUMNS, r)) for r in rows]}


HANDLERS = {"fit": cmd_fit, "predict": cmd_predict, "scene": cmd_scene,
            "sweep": cmd_sweep, "bench": cmd_bench}


# --------------------------------------------------------------------------
# argument handling


def build_parser():
    p = argparse.ArgumentParser(prog="gpnd", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--config", help="JSON file of settings; flags override it")
    a("--backend", choices=("exact", "svgp"))
    a("--mode", choices=("classical", "gp_nd"))
    a("--alternation", choices=("alternating", "joint"))
    a("--beta", type=float)
    a("--sigma-neg", dest="sigma_neg", type=float)
    a("--lr", type=float)
    a("--epochs", type=int)
    a("--batch-size", dest="batch_size", type=int)
    a("--inducing", type=int)
    a("--freeze-inducing", dest="freeze_inducing", action="store_const", const=True)
    a("--negatives", help="shuffled:m=<int> or file:<csv>")
    a("--seed", type=int)
    a("--jobs", type=int)
    a("--report", choices=("json", "csv"))
    a("--out", help="output directory")
    a("--early-stop", dest="early_stop", action="store_const", const=True)
    a("--deterministic", action="store_const", const=True,
      help="record zero wall-clock so reports are byte-reproducible")
    a("-v", "--verbose", action="store_true")

    data_opts = argparse.ArgumentParser(add_help=False)
    b = data_opts.add_argument
    b("--data", help="input CSV")
    b("--target", help="target column name or index (default: last)")
    b("--no-header", dest="header", action="store_const", const=False)

    scene_opts = argparse.ArgumentParser(add_help=False)
    c = scene_opts.add_argument
    c("--path", choices=("two_sines", "s_bend", "wave"))
    c("--markers", type=int)
    c("--obstacles", type=int)
    c("--noise-std", dest="noise_std", type=float)
    c("--gap", type=float)
    c("--k", type=float, help="collision radius in blob standard deviations")

    f = sub.add_parser("fit", parents=[common, data_opts], help="train and save a model")
    f.add_argument("--no-standardize", dest="standardize", action="store_const", const=False)
    pr = sub.add_parser("predict", parents=[common, data_opts], help="predict from a model")
    pr.add_argument("--model")
    pr.add_argument("--query")
    sub.add_parser("scene", parents=[common, scene_opts], help="trajectory experiment")
    sw = sub.add_parser("sweep", parents=[common, scene_opts], help="(beta, sigma_neg) grid")
    sw.add_argument("--betas")
    sw.add_argument("--sigmas")
    be = sub.add_parser("bench", parents=[common, data_opts], help="paired timing")
    be.add_argument("--m-list", dest="m_list")
    be.add_argument("--runs", type=int)
    be.add_argument("--synthetic-n", dest="synthetic_n", type=int)
    return p


def resolve_config(args):
    """Merge defaults <- config file <- explicit flags into a RunConfig."""
    known = {f.name for f in fields(RunConfig)}
    merged = {}
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(file_cfg) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(file_cfg)
    for key, val in vars(args).items():
        if key in known and val is not None:
            merged[key] = val
    merged["command"] = args.command
    if "target" in merged:
        merged["target"] = str(merged["target"])
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _exit_code(exc):
    if isinstance(exc, (ConfigError, InvalidInputError)):
        return EXIT_CONFIG
    if isinstance(exc, IngestionError):
        return EXIT_INGESTION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (TrainingError, GenerationError)):
        return EXIT_TRAINING
    return EXIT_CONFIG


def _error_record(exc, code):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("epoch", "snapshot", "params"):
        val = getattr(exc, attr, None)
        if val is not None:
            rec[attr] = val
    return rec


def run(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return HANDLERS[cfg.command](cfg, out)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = None
    try:
        cfg = resolve_config(args)
        out_dir = Path(cfg.out)
        summary = run(cfg)
    except GPNDError as exc:
        code = _exit_code(exc)
        rec = _error_record(exc, code)
        print(json.dumps(rec), file=sys.stderr)
        target = out_dir if out_dir is not None else (Path(args.out) if args.out else None)
        if target is not None:
            try:
                dump_json(rec, target / "error.json")
            except OSError:
                pass
        return code
    log.info("%s finished: %s", cfg.command, json.dumps(summary, default=str)[:200])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
