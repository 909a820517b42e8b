"""Versioned JSON model files, written atomically."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .data import Dataset, Standardization
from .errors import IngestionError, MissingFileError
from .exact_gp import ExactBackend
from .kernel import KernelParams
from .svgp import SparseBackend, SparseParams, VariationalParams

FORMAT = "gpnd-model"
VERSION = 1


def atomic_write_text(path, text):
    """Write to a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj, path):
    atomic_write_text(path, json.dumps(obj, indent=2, allow_nan=False) + "\n")


def model_record(backend, params, train):
    """Everything needed to reproduce predictions. The exact backend keeps its training set."""
    kern = backend.kernel_params(params)
    st = train.standardization
    rec = {
        "format": FORMAT,
        "version": VERSION,
        "backend": backend.name,
        "kernel": kern.as_dict(),
        "standardization": st.as_dict() if st is not None else None,
        "feature_names": list(train.feature_names) if train.feature_names else None,
        "target_name": train.target_name,
    }
    if backend.name == "exact":
        rec["training"] = {"X": train.X.tolist(), "y": train.y.tolist()}
    else:
        rec["variational"] = params.var.as_dict()
        rec["freeze_inducing"] = backend.freeze_inducing
    return rec


def save_model(path, backend, params, train):
    dump_json(model_record(backend, params, train), path)


class LoadedModel:
    def __init__(self, backend, params, train, standardization, feature_names, target_name):
        self.backend = backend
        self.params = params
        self.train = train
        self.standardization = standardization
        self.feature_names = feature_names
        self.target_name = target_name

    @property
    def kernel(self):
        return self.backend.kernel_params(self.params)

    def predict(self, X, include_noise=False):
        """Predict at raw-unit inputs; results are in the model's (standardized) units."""
        X = np.asarray(X, dtype=float)
        if self.standardization is not None:
            X = self.standardization.transform_X(X)
        return self.backend.predict(self.params, self.train, X, include_noise=include_noise)


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such model file: {path}")
    try:
        rec = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path} is not valid JSON: {exc}") from exc
    if rec.get("format") != FORMAT or rec.get("version") != VERSION:
        raise IngestionError(f"{path} is not a version-{VERSION} {FORMAT} file")
    kern = KernelParams(**rec["kernel"])
    st = rec.get("standardization")
    st = Standardization.from_dict(st) if st is not None else None
    if rec["backend"] == "exact":
        tr = rec["training"]
        X = np.asarray(tr["X"], dtype=float)
        train = Dataset(X.reshape(len(tr["y"]), -1), tr["y"], standardization=st)
        backend, params = ExactBackend(), kern
    elif rec["backend"] == "svgp":
        v = rec["variational"]
        var = VariationalParams(np.asarray(v["Z"]), np.asarray(v["m_vec"]), np.asarray(v["L_S"]))
        backend = SparseBackend(var.M, rec.get("freeze_inducing", False))
        params = SparseParams(kern, var)
        backend.pack(params)
        train = None
    else:
        raise IngestionError(f"unknown backend {rec['backend']!r} in {path}")
    return LoadedModel(backend, params, train, st, rec.get("feature_names"), rec.get("target_name"))
