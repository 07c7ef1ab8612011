"""Least-squares VAR-style forecaster on flattened lag windows, with an online variant."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg

from .numerics import AdamState, adam_step
from .timebase import WindowBatch

DEFAULT_RIDGE = 1e-6


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass
class LinearModel:
    """``weights`` is (W*F + 1, H); the last row is the bias."""

    weights: np.ndarray
    W: int
    F: int
    H: int
    ridge: float = DEFAULT_RIDGE
    optimizer: AdamState | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.W * self.F + 1, self.H):
            raise ValueError(f"weights shape {self.weights.shape} does not match W={self.W}, F={self.F}, H={self.H}")

    def with_optimizer(self, lr: float) -> "LinearModel":
        return LinearModel(self.weights.copy(), self.W, self.F, self.H, self.ridge, AdamState.for_params([self.weights], lr))


def design(X: np.ndarray) -> np.ndarray:
    """Flatten (N, W, F) windows and append a ones column."""
    X = np.asarray(X, dtype=np.float64)
    flat = X.reshape(X.shape[0], -1)
    return np.hstack([flat, np.ones((flat.shape[0], 1))])


def _spd_solve(G: np.ndarray, B: np.ndarray, ridge: float) -> np.ndarray:
    try:
        c, low = linalg.cho_factor(G, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise SingularSystemError("normal equations are singular; use ridge > 0") from None
    pivots = np.diag(c) ** 2
    if ridge == 0 and pivots.min() <= 1e-10 * max(pivots.max(), 1e-300):
        raise SingularSystemError("normal equations are singular; use ridge > 0")
    return linalg.cho_solve((c, low), B, check_finite=False)


def var_fit(batch: WindowBatch, ridge: float = DEFAULT_RIDGE) -> LinearModel:
    """Minimise ||A w - Y||^2 + ridge ||w||^2 with A = [flatten(X) | 1].

    Uses the primal normal equations when there are at least as many samples
    as unknowns and the equivalent dual system otherwise.
    """
    if ridge < 0:
        raise ValueError("ridge must be >= 0")
    N, W, F = batch.X.shape
    if N < 1:
        raise ValueError("no samples")
    A = design(batch.X)
    Y = np.asarray(batch.Y, dtype=np.float64)
    d = A.shape[1]
    if N >= d:
        G = A.T @ A
        G[np.diag_indices_from(G)] += ridge
        w = _spd_solve(G, A.T @ Y, ridge)
    else:
        if ridge == 0:
            raise SingularSystemError(f"{N} samples for {d} unknowns is rank deficient; use ridge > 0")
        K = A @ A.T
        K[np.diag_indices_from(K)] += ridge
        w = A.T @ _spd_solve(K, Y, ridge)
    return LinearModel(w, W, F, batch.H, ridge)


def var_predict(model: LinearModel, x: np.ndarray) -> np.ndarray:
    """Forecast H values from one (W, F) window, or (N, H) from a stack of windows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.shape[1:] != (model.W, model.F):
        raise ValueError(f"window shape {x.shape[1:]} != ({model.W}, {model.F})")
    out = design(x) @ model.weights
    return out[0] if single else out


def var_online_step(model: LinearModel, x: np.ndarray, y: np.ndarray) -> LinearModel:
    """One Adam step on the MAE of a single (window, target) pair."""
    if model.optimizer is None:
        raise ValueError("model has no optimizer state; call with_optimizer(lr) first")
    a = design(np.asarray(x, dtype=np.float64)[None])[0]
    y = np.asarray(y, dtype=np.float64).reshape(model.H)
    resid = a @ model.weights - y
    g = np.outer(a, np.sign(resid)) / model.H
    (w,), opt = adam_step(model.optimizer, [model.weights], [g])
    return LinearModel(w, model.W, model.F, model.H, model.ridge, opt)


def save(model: LinearModel, path) -> None:
    meta = {"kind": "linear", "W": model.W, "F": model.F, "H": model.H, "ridge": model.ridge}
    arrays = {"weights": model.weights}
    if model.optimizer is not None:
        o = model.optimizer
        meta["adam"] = {"lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps, "t": o.t}
        arrays["adam_m"] = o.m[0]
        arrays["adam_v"] = o.v[0]
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load(path) -> LinearModel:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("kind") != "linear":
            raise ValueError(f"{path} does not hold a linear model")
        opt = None
        if "adam" in meta:
            a = meta["adam"]
            opt = AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["t"], [z["adam_m"].copy()], [z["adam_v"].copy()])
        return LinearModel(z["weights"].copy(), meta["W"], meta["F"], meta["H"], meta["ridge"], opt)
