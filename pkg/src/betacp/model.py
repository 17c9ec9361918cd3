"""Biased nonnegative CP factor model and its persistence format.

A rank-R model holds one nonnegative factor matrix per tensor mode plus
one additive bias vector per mode; the prediction for a cell (i, j, k)
is the rank-R inner product of the three factor rows plus the three
biases. Models serialize to a small versioned JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ModelFormatError

MODEL_FORMAT = "betacp-model"
MODEL_VERSION = 1

# Ranges for fresh factor/bias draws. Factors start strictly positive so
# multiplicative updates can scale them in either direction (a zero factor
# entry is a fixed point); biases start near zero.
INIT_FACTOR_LOW = 0.01
INIT_FACTOR_HIGH = 0.1
INIT_BIAS_LOW = 0.0
INIT_BIAS_HIGH = 0.01


@dataclass
class FactorModel:
    """Factor matrices U, S, T (one row per user/service/time slot) and
    per-mode bias vectors a, b, c."""

    U: np.ndarray
    S: np.ndarray
    T: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.S = np.ascontiguousarray(self.S, dtype=np.float64)
        self.T = np.ascontiguousarray(self.T, dtype=np.float64)
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        for name, mat in (("U", self.U), ("S", self.S), ("T", self.T)):
            if mat.ndim != 2:
                raise ValueError(f"factor matrix {name} must be 2-D, got {mat.ndim}-D")
        rank = self.U.shape[1]
        if self.S.shape[1] != rank or self.T.shape[1] != rank:
            raise ValueError(
                "factor matrices disagree on rank: "
                f"{self.U.shape[1]}, {self.S.shape[1]}, {self.T.shape[1]}"
            )
        for name, vec, rows in (
            ("a", self.a, self.U.shape[0]),
            ("b", self.b, self.S.shape[0]),
            ("c", self.c, self.T.shape[0]),
        ):
            if vec.ndim != 1 or vec.shape[0] != rows:
                raise ValueError(
                    f"bias vector {name} must have shape ({rows},), got {vec.shape}"
                )
        for name, arr in self._fields():
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite values")
            if arr.size and arr.min() < 0:
                raise ValueError(f"{name} contains negative values")

    def _fields(self):
        return (
            ("U", self.U), ("S", self.S), ("T", self.T),
            ("a", self.a), ("b", self.b), ("c", self.c),
        )

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.U.shape[0], self.S.shape[0], self.T.shape[0])

    def copy(self) -> "FactorModel":
        return FactorModel(
            self.U.copy(), self.S.copy(), self.T.copy(),
            self.a.copy(), self.b.copy(), self.c.copy(),
        )

    def predict(self, ii, jj, kk) -> np.ndarray:
        """Predictions for index arrays (or scalars) of equal shape."""
        ii = np.atleast_1d(np.asarray(ii, dtype=np.int64))
        jj = np.atleast_1d(np.asarray(jj, dtype=np.int64))
        kk = np.atleast_1d(np.asarray(kk, dtype=np.int64))
        n_i, n_j, n_k = self.dims
        if ii.size and (ii.min() < 0 or ii.max() >= n_i):
            raise IndexError(f"user index out of range for dims {self.dims}")
        if jj.size and (jj.min() < 0 or jj.max() >= n_j):
            raise IndexError(f"service index out of range for dims {self.dims}")
        if kk.size and (kk.min() < 0 or kk.max() >= n_k):
            raise IndexError(f"time index out of range for dims {self.dims}")
        return kernels.predict_entries(
            self.U, self.S, self.T, self.a, self.b, self.c,
            np.ascontiguousarray(ii), np.ascontiguousarray(jj),
            np.ascontiguousarray(kk),
        )

    def predict_one(self, i: int, j: int, k: int) -> float:
        return float(self.predict([i], [j], [k])[0])


def init_random(dims, rank: int, seed: int) -> FactorModel:
    """Fresh seeded model: factors uniform on [0.01, 0.1), biases on [0, 0.01)."""
    n_i, n_j, n_k = (int(d) for d in dims)
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    rng = np.random.default_rng(seed)
    return FactorModel(
        U=rng.uniform(INIT_FACTOR_LOW, INIT_FACTOR_HIGH, (n_i, rank)),
        S=rng.uniform(INIT_FACTOR_LOW, INIT_FACTOR_HIGH, (n_j, rank)),
        T=rng.uniform(INIT_FACTOR_LOW, INIT_FACTOR_HIGH, (n_k, rank)),
        a=rng.uniform(INIT_BIAS_LOW, INIT_BIAS_HIGH, n_i),
        b=rng.uniform(INIT_BIAS_LOW, INIT_BIAS_HIGH, n_j),
        c=rng.uniform(INIT_BIAS_LOW, INIT_BIAS_HIGH, n_k),
    )


def save_model(model: FactorModel, path, extra: dict | None = None) -> None:
    """Write the model as versioned JSON.

    Floats serialize via repr (shortest round-trip form), so a
    save/load cycle reproduces every array bit-exactly. `extra` lets
    callers attach provenance (training config, seeds) under a
    `meta` key without affecting the model payload.
    """
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "dims": list(model.dims),
        "rank": model.rank,
        "U": model.U.tolist(),
        "S": model.S.tolist(),
        "T": model.T.tolist(),
        "a": model.a.tolist(),
        "b": model.b.tolist(),
        "c": model.c.tolist(),
    }
    if extra:
        doc["meta"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> FactorModel:
    """Read a model written by save_model, checking format and version."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFormatError(f"cannot open {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path}: not a {MODEL_FORMAT} document")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model version {version!r} "
            f"(this build reads version {MODEL_VERSION})"
        )
    missing = [k for k in ("dims", "rank", "U", "S", "T", "a", "b", "c") if k not in doc]
    if missing:
        raise ModelFormatError(f"{path}: missing keys {missing}")
    try:
        model = FactorModel(
            U=np.array(doc["U"], dtype=np.float64),
            S=np.array(doc["S"], dtype=np.float64),
            T=np.array(doc["T"], dtype=np.float64),
            a=np.array(doc["a"], dtype=np.float64),
            c=np.array(doc["c"], dtype=np.float64),
            b=np.array(doc["b"], dtype=np.float64),
        )
    except ValueError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc
    if list(model.dims) != list(doc["dims"]) or model.rank != doc["rank"]:
        raise ModelFormatError(
            f"{path}: declared dims/rank {doc['dims']}/{doc['rank']} do not match "
            f"arrays {list(model.dims)}/{model.rank}"
        )
    return model


def refresh_cache(model: FactorModel, tensor) -> "PredictionCache":
    """Build and fill a cache of model predictions over a tensor's entries."""
    if model.dims != tensor.dims:
        raise ValueError(
            f"model dims {model.dims} do not match tensor dims {tensor.dims}"
        )
    cache = PredictionCache(tensor)
    cache.refresh(model)
    return cache


class PredictionCache:
    """Current-model predictions on one fixed observation set.

    The per-sweep updates revisit the same observed cells many times;
    this holds one prediction per observed entry and is refreshed after
    each parameter-group update rather than per lookup. The observation
    container is anything exposing i_idx/j_idx/k_idx index arrays.
    """

    def __init__(self, tensor):
        self.ii = tensor.i_idx
        self.jj = tensor.j_idx
        self.kk = tensor.k_idx
        self.yhat = np.empty(self.ii.shape[0], dtype=np.float64)

    def refresh(self, model: FactorModel) -> np.ndarray:
        kernels.predict_entries(
            model.U, model.S, model.T, model.a, model.b, model.c,
            self.ii, self.jj, self.kk, out=self.yhat,
        )
        return self.yhat
