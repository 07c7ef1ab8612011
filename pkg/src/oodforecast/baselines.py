"""Non-learning univariate baselines: seasonal copies and simple exponential smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

LAGS = {"copy_last_hour": 1, "copy_last_day": 24, "copy_last_week": 168}
ALPHA_GRID = np.round(np.arange(1, 10001) * 1e-4, 4)


def copy_last(history: Sequence[float], lag: int, H: int) -> np.ndarray:
    """Repeat the block of the last ``lag`` observations over ``H`` steps."""
    history = np.asarray(history, dtype=np.float64)
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if history.size < lag:
        raise ValueError(f"history of {history.size} values is shorter than lag {lag}")
    block = history[history.size - lag :]
    return block[np.arange(H) % lag].copy()


@dataclass
class ESModel:
    alpha: float
    state: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")


def es_update(model: ESModel, x: float) -> ESModel:
    if not np.isfinite(x):
        raise ValueError("non-finite observation")
    if model.state is None:
        return ESModel(model.alpha, float(x))
    return ESModel(model.alpha, model.alpha * float(x) + (1.0 - model.alpha) * model.state)


def es_forecast(model: ESModel, H: int) -> np.ndarray:
    if model.state is None:
        raise ValueError("exponential smoothing has seen no observations")
    return np.full(H, model.state)


def es_validation_mae(train: Sequence[float], validation: Sequence[float], alphas: np.ndarray = ALPHA_GRID) -> np.ndarray:
    """One-step MAE on ``validation`` for every alpha, warming the state on ``train``.

    With an empty ``train`` the state starts from the first validation value,
    which is then not scored.
    """
    train = np.asarray(train, dtype=np.float64)
    validation = np.asarray(validation, dtype=np.float64)
    if validation.size == 0:
        raise ValueError("empty validation sequence")
    alphas = np.asarray(alphas, dtype=np.float64)
    series = np.concatenate([train, validation])
    state = np.full(alphas.shape, series[0])
    start = train.size if train.size else 1
    for x in series[1:start]:
        state = alphas * x + (1.0 - alphas) * state
    err = np.zeros(alphas.shape)
    for x in series[start:]:
        err += np.abs(x - state)
        state = alphas * x + (1.0 - alphas) * state
    return err / max(series.size - start, 1)


def es_grid_search(train: Sequence[float], validation: Sequence[float]) -> float:
    """Best alpha on the 1e-4 grid over (0, 1]; ties go to the larger alpha."""
    mae = es_validation_mae(train, validation)
    best = np.flatnonzero(mae == mae.min())
    return float(ALPHA_GRID[best[-1]])
