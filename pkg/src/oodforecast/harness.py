"""Experimental protocol: splits, prequential streaming, clamping, search and replication.

A run trains on the first 90 days (the warm-up), then walks the rest of
the series hour by hour. At each hour the model forecasts the next ``H``
hours, the forecast is clamped and scored, and only then is the hour's
truth revealed to the model (online variants take one gradient step on
the newest fully observed sample).
"""

from __future__ import annotations

import copy
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import baselines, continual, linear, neural
from .dataio import (
    PeriodSchedule,
    ScheduleError,
    SynthConfig,
    align,
    default_melbourne_schedule,
    load_counters_csv,
    load_energy_csv,
    load_schedule,
    load_temperature_csv,
    regime_schedule,
    synth_generate,
)
from .timebase import (
    ENERGY,
    HOUR,
    TEMPERATURE,
    FeatureKind,
    FeatureSpec,
    InsufficientDataError,
    TimeFrame,
    assemble,
    scaler_fit,
    window_arrays,
)

log = logging.getLogger(__name__)

WARMUP_HOURS = 90 * 24
VALIDATION_HOURS = 30 * 24
METHODS = (
    "copy_last_hour",
    "copy_last_day",
    "copy_last_week",
    "es",
    "var",
    "var_ol",
    "net",
    "net_ol",
    "net_cl",
)
ONLINE_METHODS = ("var_ol", "net_ol", "net_cl")
STOCHASTIC_METHODS = ("net", "net_ol", "net_cl")

NET_DEFAULTS = {"lr": 1e-3, "channels": 32, "blocks": 3, "kernel": 3, "epochs": 20, "batch_size": 64}
CL_DEFAULTS = {"gamma": 0.9, "gamma_prime": 0.99, "tau": 0.75, "memory_slots": 32, "compress_dim": 32, "blend": 0.9}
VAR_DEFAULTS = {"ridge": linear.DEFAULT_RIDGE, "lr": 1e-4}


class RunError(RuntimeError):
    pass


class SearchError(RuntimeError):
    pass


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class DataRef:
    """Either CSV paths or a synthetic generator configuration."""

    energy: str | None = None
    counters: str | None = None
    temperature: str | None = None
    synth: SynthConfig | None = None

    def __post_init__(self):
        if (self.energy is None) == (self.synth is None):
            raise ValueError("data needs exactly one of an energy CSV path or a synth section")


@dataclass(frozen=True)
class RunConfig:
    data: DataRef
    method: str
    features: str = "E"
    window: int = 168
    horizon: int = 1
    schedule: str = "melbourne"
    seed: int = 0
    params: dict = field(default_factory=dict)
    name: str = ""
    hpo_budget: int = 0
    replicate_n: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        FeatureKind(self.features)
        if self.window < 1 or self.horizon < 1:
            raise ValueError("window and horizon must be >= 1")
        if self.method.startswith("copy_last") or self.method == "es":
            if self.features != "E":
                raise ValueError(f"{self.method} is univariate; use features = 'E'")
        if self.hpo_budget < 0 or self.replicate_n < 1:
            raise ValueError("hpo.budget must be >= 0 and replicate.n >= 1")

    @property
    def dataset(self) -> str:
        if self.name:
            return self.name
        if self.data.synth is not None:
            return f"synth{self.data.synth.seed}"
        return Path(self.data.energy).stem

    def echo(self) -> dict:
        d = asdict(self)
        d["dataset"] = self.dataset
        return d


def load_frame(data: DataRef) -> TimeFrame:
    if data.synth is not None:
        return synth_generate(data.synth)
    frames = [load_energy_csv(data.energy)]
    if data.counters:
        frames.append(load_counters_csv(data.counters))
    if data.temperature:
        frames.append(load_temperature_csv(data.temperature))
    return align(frames)


def counter_columns(frame: TimeFrame) -> list[str]:
    return [n for n in frame.names if n not in (ENERGY, TEMPERATURE)]


def feature_spec(frame: TimeFrame, kind: str) -> FeatureSpec:
    kind = FeatureKind(kind)
    return FeatureSpec(kind, tuple(counter_columns(frame)) if kind.mobility else ())


# ------------------------------------------------------------------- split


@dataclass(frozen=True)
class Split:
    warmup_end: int
    validation_end: int
    length: int

    @property
    def stream_start(self) -> int:
        return self.warmup_end

    @property
    def stream_hours(self) -> int:
        return self.length - self.warmup_end


def split(frame_or_length) -> Split:
    """Warm-up = first 2160 h, validation = next 720 h, stream = everything after warm-up."""
    L = frame_or_length if isinstance(frame_or_length, int) else len(frame_or_length)
    if L < WARMUP_HOURS + VALIDATION_HOURS:
        raise InsufficientDataError(
            f"need at least {WARMUP_HOURS + VALIDATION_HOURS} hours (3 months warm-up + 1 month validation), have {L}"
        )
    return Split(WARMUP_HOURS, WARMUP_HOURS + VALIDATION_HOURS, L)


def clamp(yhat: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if lo > hi:
        raise ValueError("clamp needs lo <= hi")
    return np.clip(yhat, lo, hi)


def resolve_schedule(config: RunConfig, frame: TimeFrame, sp: Split, base_dir: Path | None = None) -> PeriodSchedule:
    """The period schedule clipped to the evaluation stream; must cover it."""
    start, end = frame.timestamp(sp.stream_start), frame.end
    spec = config.schedule
    if spec == "melbourne":
        sched = default_melbourne_schedule(start, end)
    elif spec == "whole":
        sched = regime_schedule(start, sp.stream_hours, [], ["ALL"])
    elif spec == "regimes":
        if config.data.synth is None:
            raise ScheduleError("schedule 'regimes' needs synthetic data")
        sched = regime_schedule(frame.start, len(frame), config.data.synth.regime_boundaries).clip(start, end)
    else:
        path = Path(spec)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        sched = load_schedule(path).clip(start, end)
    if sched.start != start or sched.end != end:
        raise ScheduleError("schedule does not cover the whole evaluation stream")
    return sched


# ------------------------------------------------------------ forecasters


class _Forecaster:
    """Stream-time model wrapper. Predictions are in kWh."""

    def predict(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def observe(self, t: int) -> None:
        """Hour ``t`` has just been revealed."""


class _CopyLast(_Forecaster):
    def __init__(self, ctx, lag):
        self.ctx, self.lag = ctx, lag

    def predict(self, t):
        return baselines.copy_last(self.ctx.target[:t], self.lag, self.ctx.H)


class _ES(_Forecaster):
    def __init__(self, ctx, params):
        self.ctx = ctx
        target, sp = ctx.target, ctx.split
        alpha = params.get("alpha")
        if alpha is None:
            alpha = baselines.es_grid_search(target[: sp.warmup_end], target[sp.warmup_end : sp.validation_end])
        self.alpha = float(alpha)
        model = baselines.ESModel(self.alpha)
        for x in target[: sp.stream_start]:
            model = baselines.es_update(model, x)
        self.model = model

    def predict(self, t):
        return baselines.es_forecast(self.model, self.ctx.H)

    def observe(self, t):
        self.model = baselines.es_update(self.model, self.ctx.target[t])


class _Linear(_Forecaster):
    def __init__(self, ctx, params, online):
        self.ctx, self.online = ctx, online
        model = linear.var_fit(ctx.warmup_batch(), float(params["ridge"]))
        self.model = model.with_optimizer(float(params["lr"])) if online else model

    def predict(self, t):
        ctx = self.ctx
        return ctx.unscale(linear.var_predict(self.model, ctx.X[t - ctx.W : t]))

    def observe(self, t):
        s = self.ctx.trainable_sample(t)
        if self.online and s is not None:
            x, y = s
            self.model = linear.var_online_step(self.model, x, y)


def _net_config(ctx, params) -> neural.NetConfig:
    return neural.NetConfig(
        W=ctx.W,
        F=ctx.X.shape[1],
        H=ctx.H,
        blocks=int(params["blocks"]),
        channels=int(params["channels"]),
        kernel=int(params["kernel"]),
        seed=ctx.seed,
    )


def warm_net(ctx, params) -> neural.NetState:
    lr = float(params["lr"])
    state = neural.net_init(_net_config(ctx, params), lr)
    return neural.train_offline(state, ctx.warmup_batch(), int(params["epochs"]), int(params["batch_size"]), lr)


class _Net(_Forecaster):
    def __init__(self, ctx, params, online):
        self.ctx, self.online = ctx, online
        self.state = warm_net(ctx, params)

    def predict(self, t):
        ctx = self.ctx
        return ctx.unscale(neural.net_forward(self.state, ctx.X[t - ctx.W : t]))

    def observe(self, t):
        s = self.ctx.trainable_sample(t)
        if self.online and s is not None:
            self.state = neural.net_online_step(self.state, *s)


class _Continual(_Forecaster):
    def __init__(self, ctx, params):
        self.ctx = ctx
        cfg = continual.ContinualConfig(
            gamma=float(params["gamma"]),
            gamma_prime=float(params["gamma_prime"]),
            tau=float(params["tau"]),
            memory_slots=int(params["memory_slots"]),
            compress_dim=int(params["compress_dim"]),
            blend=float(params["blend"]),
        )
        self.learner = continual.continual_init(warm_net(ctx, params), cfg)

    def predict(self, t):
        ctx = self.ctx
        return ctx.unscale(continual.adapted_forward(self.learner, ctx.X[t - ctx.W : t]))

    def observe(self, t):
        s = self.ctx.trainable_sample(t)
        if s is not None:
            self.learner = continual.continual_step(self.learner, *s)


@dataclass
class _Context:
    X: np.ndarray  # scaled features (L, F)
    y: np.ndarray  # scaled target (L,)
    target: np.ndarray  # raw target, kWh
    mean: float
    std: float
    W: int
    H: int
    split: Split
    seed: int

    def warmup_batch(self):
        end = self.split.warmup_end
        return window_arrays(self.X[:end], self.y[:end], self.W, self.H)

    def unscale(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v) * self.std + self.mean

    def trainable_sample(self, t: int):
        """The newest sample whose target ends at hour ``t``, if it lies in the stream."""
        s = t - self.H + 1
        if s < self.split.stream_start or s < self.W:
            return None
        return self.X[s - self.W : s], self.y[s : s + self.H]


def resolved_params(method: str, params: dict) -> dict:
    if method in ("var", "var_ol"):
        base = dict(VAR_DEFAULTS)
    elif method in ("net", "net_ol"):
        base = dict(NET_DEFAULTS)
    elif method == "net_cl":
        base = {**NET_DEFAULTS, **CL_DEFAULTS}
    else:
        base = {}
    base.update(params)
    return base


def _make_forecaster(method: str, ctx: _Context, params: dict) -> _Forecaster:
    if method in baselines.LAGS:
        return _CopyLast(ctx, baselines.LAGS[method])
    if method == "es":
        return _ES(ctx, params)
    if method in ("var", "var_ol"):
        return _Linear(ctx, params, online=method == "var_ol")
    if method in ("net", "net_ol"):
        return _Net(ctx, params, online=method == "net_ol")
    if method == "net_cl":
        return _Continual(ctx, params)
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------- run


@dataclass
class PeriodMetrics:
    name: str
    n_samples: int
    mae: float
    rmse: float


@dataclass
class RunResult:
    dataset: str
    method: str
    features: str
    seed: int
    periods: list[PeriodMetrics]
    runtime: float
    config: dict
    params: dict
    predictions: np.ndarray | None = None

    def period(self, name: str) -> PeriodMetrics:
        for p in self.periods:
            if p.name == name:
                return p
        raise KeyError(name)

    def maes(self) -> dict[str, float]:
        return {p.name: p.mae for p in self.periods}


def run(
    config: RunConfig,
    frame: TimeFrame | None = None,
    progress: Callable[[int, int], None] | None = None,
    record_predictions: bool = False,
    base_dir: Path | None = None,
) -> RunResult:
    """Train on the warm-up, then stream the remainder test-then-train."""
    t_start = time.perf_counter()
    if frame is None:
        frame = load_frame(config.data)
    sp = split(frame)
    sched = resolve_schedule(config, frame, sp, base_dir)
    feats = assemble(frame, feature_spec(frame, config.features))
    values = feats.values()
    target = frame[ENERGY]
    scaler = scaler_fit(values, slice(0, sp.warmup_end))
    ctx = _Context(
        X=scaler.apply(values),
        y=(target - scaler.mean[0]) / scaler.std[0],
        target=target,
        mean=float(scaler.mean[0]),
        std=float(scaler.std[0]),
        W=config.window,
        H=config.horizon,
        split=sp,
        seed=config.seed,
    )
    if config.window > sp.warmup_end - config.horizon:
        raise InsufficientDataError(f"window {config.window} leaves no warm-up samples")
    params = resolved_params(config.method, config.params)
    model = _make_forecaster(config.method, ctx, params)
    if isinstance(model, _ES):
        params = {**params, "alpha": model.alpha}

    H = config.horizon
    n_periods = len(sched.periods)
    edges = [sp.stream_start + int((p.end - frame.timestamp(sp.stream_start)) / HOUR) for p in sched.periods]
    abs_sum = np.zeros(n_periods)
    sq_sum = np.zeros(n_periods)
    counts = np.zeros(n_periods, dtype=np.int64)
    last = len(frame) - H
    preds = np.zeros((max(last - sp.stream_start + 1, 0), H)) if record_predictions else None
    period = 0
    # running bounds of revealed truth: within the current period, and over all history
    seen_lo = seen_hi = math.nan
    hist_lo, hist_hi = float(target[: sp.stream_start].min()), float(target[: sp.stream_start].max())
    for t in range(sp.stream_start, last + 1):
        while t >= edges[period]:
            period += 1
            seen_lo = seen_hi = math.nan
        yhat = np.asarray(model.predict(t), dtype=np.float64)
        if yhat.shape != (H,) or not np.all(np.isfinite(yhat)):
            raise RunError(
                f"{config.method}: non-finite or malformed forecast at {frame.timestamp(t).isoformat()} (hour {t}): {yhat}"
            )
        if math.isnan(seen_lo):
            yhat = clamp(yhat, hist_lo, hist_hi)
        else:
            yhat = clamp(yhat, seen_lo, seen_hi)
        if preds is not None:
            preds[t - sp.stream_start] = yhat
        err = target[t : t + H] - yhat
        abs_sum[period] += np.abs(err).sum()
        sq_sum[period] += (err * err).sum()
        counts[period] += 1
        obs = float(target[t])
        seen_lo = obs if math.isnan(seen_lo) else min(seen_lo, obs)
        seen_hi = obs if math.isnan(seen_hi) else max(seen_hi, obs)
        hist_lo, hist_hi = min(hist_lo, obs), max(hist_hi, obs)
        model.observe(t)
        if progress is not None and (t - sp.stream_start + 1) % 1000 == 0:
            progress(t - sp.stream_start + 1, last - sp.stream_start + 1)

    periods = []
    for i, p in enumerate(sched.periods):
        n = int(counts[i])
        mae = abs_sum[i] / (n * H) if n else math.nan
        rmse = math.sqrt(sq_sum[i] / (n * H)) if n else math.nan
        periods.append(PeriodMetrics(p.name, n, float(mae), float(rmse)))
    return RunResult(
        dataset=config.dataset,
        method=config.method,
        features=config.features,
        seed=config.seed,
        periods=periods,
        runtime=time.perf_counter() - t_start,
        config=config.echo(),
        params=params,
        predictions=preds,
    )


# ------------------------------------------------------------------ search


@dataclass(frozen=True)
class Dim:
    name: str
    dist: str  # "uniform" | "log-uniform" | "int"
    low: float
    high: float

    def __post_init__(self):
        if self.dist not in ("uniform", "log-uniform", "int"):
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.low > self.high:
            raise ValueError(f"{self.name}: lower bound above upper bound")
        if self.dist == "log-uniform" and self.low <= 0:
            raise ValueError(f"{self.name}: log-uniform bounds must be positive")

    def sample(self, rng: np.random.Generator):
        if self.low == self.high:
            return int(self.low) if self.dist == "int" else float(self.low)
        if self.dist == "int":
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.dist == "log-uniform":
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))


SearchSpace = tuple[Dim, ...]

SEARCH_SPACES: dict[str, SearchSpace] = {
    "net": (Dim("channels", "int", 8, 128), Dim("lr", "log-uniform", 1e-10, 1e-2)),
    "net_ol": (Dim("channels", "int", 8, 128), Dim("lr", "log-uniform", 1e-10, 1e-2)),
    "var_ol": (Dim("lr", "log-uniform", 1e-6, 5e-2),),
    "net_cl": (
        Dim("gamma", "uniform", 0.0, 1.0),
        Dim("gamma_prime", "uniform", 0.0, 1.0),
        Dim("tau", "uniform", 0.0, 1.0),
        Dim("lr", "log-uniform", 1e-10, 1e-2),
    ),
}


@dataclass
class SearchResult:
    best: dict
    best_value: float
    trials: list[tuple[dict, float]]


def sample_space(space: Sequence[Dim], rng: np.random.Generator) -> dict:
    return {d.name: d.sample(rng) for d in space}


def random_search(
    space: Sequence[Dim],
    budget: int = 20,
    base_seed: int = 0,
    objective: Callable[[dict], float] | None = None,
) -> SearchResult:
    """Evaluate ``budget`` i.i.d. draws and keep the lowest objective (earliest wins ties).

    A draw whose objective raises or returns a non-finite value counts as failed.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if objective is None:
        raise ValueError("an objective is required")
    rng = np.random.default_rng(base_seed)
    draws = [sample_space(space, rng) for _ in range(budget)]
    trials = []
    best, best_value = None, math.inf
    for params in draws:
        try:
            value = float(objective(params))
        except Exception as exc:  # noqa: BLE001 - a failed trial must not end the search
            log.warning("trial %s failed: %s", params, exc)
            value = math.inf
        if not math.isfinite(value):
            value = math.inf
        trials.append((params, value))
        if value < best_value:
            best, best_value = params, value
    if best is None:
        raise SearchError(f"all {budget} trials failed")
    return SearchResult(best, best_value, trials)


def validation_objective(config: RunConfig, frame: TimeFrame, base_dir: Path | None = None) -> Callable[[dict], float]:
    """MAE over the validation month, streaming only warm-up + validation."""
    sp = split(frame)
    short = frame.slice(0, sp.validation_end)

    def objective(params: dict) -> float:
        cfg = replace(config, params={**config.params, **params}, schedule="whole")
        return run(cfg, short, base_dir=base_dir).periods[0].mae

    return objective


def tune(
    config: RunConfig,
    frame: TimeFrame | None = None,
    budget: int | None = None,
    base_dir: Path | None = None,
    space: SearchSpace | None = None,
) -> tuple[RunConfig, SearchResult | None]:
    """Random-search ``space`` (default: the method's preset); returns the config with the best params merged in."""
    budget = config.hpo_budget if budget is None else budget
    space = SEARCH_SPACES.get(config.method) if space is None else space
    if not budget or space is None:
        return config, None
    if frame is None:
        frame = load_frame(config.data)
    result = random_search(space, budget, config.seed, validation_objective(config, frame, base_dir))
    return replace(config, params={**config.params, **result.best}), result


# ------------------------------------------------------------- replication


@dataclass
class PeriodSummary:
    name: str
    n_samples: int
    mae_mean: float
    mae_std: float
    rmse_mean: float
    rmse_std: float


@dataclass
class ReplicateResult:
    periods: list[PeriodSummary]
    runs: list[RunResult]

    def period(self, name: str) -> PeriodSummary:
        for p in self.periods:
            if p.name == name:
                return p
        raise KeyError(name)


def summarize(runs: Sequence[RunResult]) -> ReplicateResult:
    periods = []
    for i, p in enumerate(runs[0].periods):
        maes = np.array([r.periods[i].mae for r in runs])
        rmses = np.array([r.periods[i].rmse for r in runs])
        periods.append(PeriodSummary(p.name, p.n_samples, float(maes.mean()), float(maes.std()), float(rmses.mean()), float(rmses.std())))
    return ReplicateResult(periods, list(runs))


def replicate(config: RunConfig, n_seeds: int | None = None, frame: TimeFrame | None = None, workers: int = 1, base_dir: Path | None = None) -> ReplicateResult:
    """Run seeds ``config.seed + 0 .. n-1`` and aggregate per period (population std)."""
    n = config.replicate_n if n_seeds is None else n_seeds
    if n < 1:
        raise ValueError("need at least one seed")
    configs = [replace(config, seed=config.seed + i) for i in range(n)]
    return summarize(run_many(configs, frame, workers, base_dir))


def _run_job(args):
    config, frame, base_dir = args
    return run(config, frame, base_dir=base_dir)


def run_many(configs: Sequence[RunConfig], frame: TimeFrame | None = None, workers: int = 1, base_dir: Path | None = None) -> list[RunResult]:
    """Run configs, optionally on a process pool; results come back in input order."""
    jobs = [(c, frame, base_dir) for c in configs]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


# ------------------------------------------------------------- config file


def _parse_value(text: str):
    from ._toml import toml_loads

    try:
        return toml_loads(f"v = {text}")["v"]
    except Exception:  # noqa: BLE001 - bare words become strings
        return text


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Patch a raw config mapping with ``dotted.key=value`` strings."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = raw
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {key!r} descends into a non-table")
        node[parts[-1]] = _parse_value(value.strip())
    return raw


CONFIG_KEYS = {"name", "data", "method", "features", "window", "horizon", "schedule", "seed", "params", "hpo", "replicate", "sweep"}


def config_from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    unknown = set(raw) - CONFIG_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "data" not in raw or "method" not in raw:
        raise ValueError("config needs 'data' and 'method'")
    data = dict(raw["data"])
    if "synth" in data:
        synth = SynthConfig(**data.pop("synth"))
        if data:
            raise ValueError("synthetic data takes no CSV paths")
        ref = DataRef(synth=synth)
    else:
        def resolve(p):
            if p is None:
                return None
            p = Path(p)
            return str(p if p.is_absolute() or base_dir is None else base_dir / p)

        extra = set(data) - {"energy", "counters", "temperature"}
        if extra:
            raise ValueError(f"unknown data keys: {', '.join(sorted(extra))}")
        ref = DataRef(resolve(data.get("energy")), resolve(data.get("counters")), resolve(data.get("temperature")))
    schedule = str(raw.get("schedule", "melbourne"))
    if schedule not in ("melbourne", "whole", "regimes") and base_dir is not None and not Path(schedule).is_absolute():
        schedule = str(base_dir / schedule)
    return RunConfig(
        data=ref,
        method=raw["method"],
        features=str(raw.get("features", "E")),
        window=int(raw.get("window", 168)),
        horizon=int(raw.get("horizon", 1)),
        schedule=schedule,
        seed=int(raw.get("seed", 0)),
        params=dict(raw.get("params", {})),
        name=str(raw.get("name", "")),
        hpo_budget=int(raw.get("hpo", {}).get("budget", 0)),
        replicate_n=int(raw.get("replicate", {}).get("n", 1)),
    )


def read_config(path, overrides: Sequence[str] = ()) -> tuple[RunConfig, dict]:
    """Load a TOML run config; returns the parsed config and the raw (patched) mapping."""
    from ._toml import toml_loads

    path = Path(path)
    raw = apply_overrides(toml_loads(path.read_text(encoding="utf-8")), overrides)
    return config_from_dict(raw, path.parent), raw
