"""Compact dilated causal convolution forecaster and its training regimes.

The same backbone serves the frozen (offline only), online and continual
variants. Block ``b`` is a causal convolution with dilation ``2**b``
followed by the activation; a linear head maps the channel vector at the
last time step to the ``H`` outputs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx
from .numerics import AdamState, Tensor
from .timebase import WindowBatch

ACTIVATIONS = {"relu": nx.relu, "tanh": nx.tanh, "linear": lambda t: t}
CLIP_NORM = 1.0


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetConfig:
    W: int
    F: int
    H: int = 1
    blocks: int = 3
    channels: int = 32
    kernel: int = 3
    seed: int = 0
    activation: str = "relu"

    @property
    def dilations(self) -> list[int]:
        return [2**b for b in range(self.blocks)]

    @property
    def receptive_field(self) -> int:
        return 1 + (self.kernel - 1) * sum(self.dilations)

    def validate(self) -> None:
        for name in ("W", "F", "H", "blocks", "channels", "kernel"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.receptive_field > self.W:
            raise ConfigError(f"receptive field {self.receptive_field} exceeds window W={self.W}")

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        cin = self.F
        for b in range(self.blocks):
            shapes[f"conv{b}_w"] = (self.kernel, cin, self.channels)
            shapes[f"conv{b}_b"] = (self.channels,)
            cin = self.channels
        shapes["head_w"] = (self.channels, self.H)
        shapes["head_b"] = (self.H,)
        return shapes


@dataclass
class NetState:
    config: NetConfig
    params: dict[str, np.ndarray]
    optimizer: AdamState

    @property
    def names(self) -> list[str]:
        return list(self.config.param_shapes())

    def param_list(self) -> list[np.ndarray]:
        return [self.params[n] for n in self.names]


def net_init(config: NetConfig, lr: float = 1e-3) -> NetState:
    """Uniform(+-1/sqrt(fan_in)) weights drawn from ``default_rng(config.seed)``."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in config.param_shapes().items():
        if name.startswith("conv"):
            fan_in = config.kernel * (config.F if name.startswith("conv0") else config.channels)
        else:
            fan_in = config.channels
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    state = NetState(config, params, AdamState(lr))
    state.optimizer = AdamState.for_params(state.param_list(), lr)
    return state


def forward_graph(
    config: NetConfig,
    params: dict[str, Tensor],
    x: np.ndarray,
    adapt: Sequence[tuple[Tensor, Tensor]] | None = None,
) -> Tensor:
    """Build the forward graph for a (B, W, F) batch; returns (B, H).

    ``adapt`` optionally gives, per block, a (weight_scale, feature_shift)
    pair of shape (channels,) each: the block's weights are multiplied per
    output channel by the scale and the shift is added to its pre-activation
    output.

    Only the last ``receptive_field`` rows can reach the output, so the
    input is cropped to them; the result is unchanged.
    """
    act = ACTIVATIONS[config.activation]
    h = Tensor(x[:, x.shape[1] - config.receptive_field :, :])
    for b, dilation in enumerate(config.dilations):
        w = params[f"conv{b}_w"]
        if adapt is not None:
            w = w * adapt[b][0]
        z = nx.conv1d(h, w, dilation) + params[f"conv{b}_b"]
        if adapt is not None:
            z = z + adapt[b][1]
        h = act(z)
    last = h[:, -1, :]
    return last @ params["head_w"] + params["head_b"]


def _as_batch(config: NetConfig, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (config.W, config.F):
        raise ValueError(f"input shape {x.shape} does not match (W={config.W}, F={config.F})")
    return x, single


def net_forward(state: NetState, x: np.ndarray) -> np.ndarray:
    """Forecast from one (W, F) window -> (H,), or a (B, W, F) stack -> (B, H)."""
    x, single = _as_batch(state.config, x)
    params = {n: Tensor(p) for n, p in state.params.items()}
    out = forward_graph(state.config, params, x).data
    return out[0] if single else out


def mae_loss(pred: Tensor, y: np.ndarray) -> Tensor:
    return nx.mean(nx.absolute(pred - y))


def loss_and_grads(state: NetState, X: np.ndarray, Y: np.ndarray) -> tuple[float, list[np.ndarray]]:
    X, _ = _as_batch(state.config, X)
    Y = np.asarray(Y, dtype=np.float64).reshape(X.shape[0], state.config.H)
    names = state.names
    params = {n: Tensor(state.params[n]) for n in names}
    loss = mae_loss(forward_graph(state.config, params, X), Y)
    return float(loss.data), nx.grad(loss, [params[n] for n in names])


def apply_update(state: NetState, grads: list[np.ndarray], lr: float | None = None) -> NetState:
    opt = state.optimizer if lr is None else replace(state.optimizer, lr=lr)
    grads = nx.clip_l2(grads, CLIP_NORM)
    new, opt = nx.adam_step(opt, state.param_list(), grads)
    return NetState(state.config, dict(zip(state.names, new)), opt)


def train_offline(
    state: NetState,
    batch: WindowBatch,
    epochs: int = 20,
    batch_size: int = 64,
    lr: float | None = None,
) -> NetState:
    """Mini-batch Adam on MAE with L2 clipping at 1.

    Each epoch visits a seeded permutation in ``len(batch) // batch_size``
    full mini-batches; the remainder is dropped.
    """
    if epochs < 0 or batch_size < 1:
        raise ValueError("epochs must be >= 0 and batch_size >= 1")
    if len(batch) < 1:
        raise ValueError("no training samples")
    if lr is not None:
        state = NetState(state.config, state.params, replace(state.optimizer, lr=lr))
    rng = np.random.default_rng([state.config.seed, 1])
    steps = len(batch) // batch_size
    for _ in range(epochs):
        order = rng.permutation(len(batch))
        for k in range(steps):
            idx = order[k * batch_size : (k + 1) * batch_size]
            _, grads = loss_and_grads(state, batch.X[idx], batch.Y[idx])
            state = apply_update(state, grads)
    return state


def net_online_step(state: NetState, x: np.ndarray, y: np.ndarray, lr: float | None = None) -> NetState:
    """Single-sample forward, MAE, backward, clip at 1, Adam."""
    _, grads = loss_and_grads(state, np.asarray(x)[None], np.asarray(y)[None])
    return apply_update(state, grads, lr)


def state_arrays(state: NetState, prefix: str = "") -> dict[str, np.ndarray]:
    arrays = {f"{prefix}param_{n}": p for n, p in state.params.items()}
    for i, (m, v) in enumerate(zip(state.optimizer.m, state.optimizer.v)):
        arrays[f"{prefix}adam_m_{i}"] = m
        arrays[f"{prefix}adam_v_{i}"] = v
    return arrays


def state_meta(state: NetState) -> dict:
    o = state.optimizer
    return {
        "config": asdict(state.config),
        "adam": {"lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps, "t": o.t},
    }


def state_from(meta: dict, z, prefix: str = "") -> NetState:
    config = NetConfig(**meta["config"])
    names = list(config.param_shapes())
    params = {n: z[f"{prefix}param_{n}"].copy() for n in names}
    a = meta["adam"]
    m = [z[f"{prefix}adam_m_{i}"].copy() for i in range(len(names))]
    v = [z[f"{prefix}adam_v_{i}"].copy() for i in range(len(names))]
    return NetState(config, params, AdamState(a["lr"], a["beta1"], a["beta2"], a["eps"], a["t"], m, v))


def save(state: NetState, path) -> None:
    meta = {"kind": "neural", **state_meta(state)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **state_arrays(state))


def load(path) -> NetState:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("kind") != "neural":
            raise ValueError(f"{path} does not hold a neural model")
        return state_from(meta, z)
