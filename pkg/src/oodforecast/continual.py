"""Fast/slow continual learning on top of the convolutional forecaster.

Every convolution block gets an adapter. The block's weight gradient is
compressed by a fixed random projection and tracked by two exponential
moving averages (``g_fast`` with coefficient gamma, ``g_slow`` with
gamma'). A linear calibrator, trained jointly with the backbone, maps
``g_fast`` to a per-channel weight scale and feature shift. When the two
averages point in opposing directions (cosine below ``-tau``) the block
consults a small associative memory of past adapter states, blends the
recalled state into its own and writes the result back.

Calibrators start at zero and memories empty, so a fresh learner behaves
exactly like the plain online network.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neural
from . import numerics as nx
from .numerics import AdamState, Tensor


@dataclass(frozen=True)
class ContinualConfig:
    gamma: float = 0.9
    gamma_prime: float = 0.99
    tau: float = 0.75
    memory_slots: int = 32
    compress_dim: int = 32
    blend: float = 0.9

    def validate(self) -> None:
        for name in ("gamma", "gamma_prime", "blend"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")
        # tau = 1 is allowed: the trigger can then never fire
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.memory_slots < 1 or self.compress_dim < 1:
            raise ValueError("memory_slots and compress_dim must be >= 1")


@dataclass
class AssocMemory:
    capacity: int
    keys: list[np.ndarray] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)
    hits: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def full(self) -> bool:
        return len(self.keys) >= self.capacity


@dataclass
class BlockAdapter:
    channels: int
    projection: np.ndarray  # (compress_dim, raw gradient size)
    calibrator: np.ndarray  # (compress_dim, 2 * channels)
    g_fast: np.ndarray
    g_slow: np.ndarray
    u: np.ndarray  # current (weight_scale, feature_shift), detached
    recall: np.ndarray | None = None  # memory read blended into the next forward

    @property
    def identity(self) -> np.ndarray:
        return identity_value(self.channels)

    @property
    def weight_scale(self) -> np.ndarray:
        return self.u[: self.channels]

    @property
    def feature_shift(self) -> np.ndarray:
        return self.u[self.channels :]


def identity_value(channels: int) -> np.ndarray:
    return np.concatenate([np.ones(channels), np.zeros(channels)])


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n >= 1e-12 else np.zeros_like(v)


def attention(memory: AssocMemory, query: np.ndarray) -> np.ndarray:
    """Softmax over key . query with temperature 1/sqrt(dim)."""
    keys = np.vstack(memory.keys)
    logits = keys @ query * np.sqrt(query.size)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def memory_read(memory: AssocMemory, query: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Attention-weighted mix of stored adapter values (identity when empty)."""
    if len(memory) == 0:
        if channels is None:
            raise ValueError("empty memory needs the channel count to build the identity value")
        return identity_value(channels)
    w = attention(memory, np.asarray(query, dtype=np.float64))
    return w @ np.vstack(memory.values)


def memory_write(memory: AssocMemory, key: np.ndarray, value: np.ndarray, slot: int | None = None, blend: float = 0.9) -> None:
    """Merge into ``slot``, or append (evicting the least-hit slot when full)."""
    key = _unit(np.asarray(key, dtype=np.float64))
    value = np.asarray(value, dtype=np.float64)
    if slot is not None:
        memory.values[slot] = blend * memory.values[slot] + (1.0 - blend) * value
        memory.keys[slot] = _unit(0.5 * (memory.keys[slot] + key))
        return
    if memory.full:
        victim = int(np.argmin(memory.hits))
        memory.keys[victim], memory.values[victim], memory.hits[victim] = key, value.copy(), 0
        return
    memory.keys.append(key)
    memory.values.append(value.copy())
    memory.hits.append(0)


@dataclass
class ContinualLearner:
    net: neural.NetState
    adapters: list[BlockAdapter]
    memories: list[AssocMemory]
    config: ContinualConfig
    cal_optimizer: AdamState
    triggers: int = 0


def continual_init(net: neural.NetState, config: ContinualConfig) -> ContinualLearner:
    config.validate()
    shapes = net.config.param_shapes()
    C = net.config.channels
    adapters, memories = [], []
    for b in range(net.config.blocks):
        raw = int(np.prod(shapes[f"conv{b}_w"]))
        rng = np.random.default_rng([net.config.seed, 2, b])
        adapters.append(
            BlockAdapter(
                channels=C,
                projection=rng.standard_normal((config.compress_dim, raw)) / np.sqrt(config.compress_dim),
                calibrator=np.zeros((config.compress_dim, 2 * C)),
                g_fast=np.zeros(config.compress_dim),
                g_slow=np.zeros(config.compress_dim),
                u=identity_value(C),
            )
        )
        memories.append(AssocMemory(config.memory_slots))
    cal_opt = AdamState.for_params([a.calibrator for a in adapters], net.optimizer.lr)
    return ContinualLearner(net, adapters, memories, config, cal_opt)


def _adapter_graph(adapter: BlockAdapter, calibrator: Tensor, blend: float) -> tuple[Tensor, Tensor]:
    u = nx.matmul(Tensor(adapter.g_fast[None, :]), calibrator) + adapter.identity
    if adapter.recall is not None:
        u = u * blend + adapter.recall * (1.0 - blend)
    C = adapter.channels
    return u[0, :C], u[0, C:]


def adapted_forward(learner: ContinualLearner, x: np.ndarray) -> np.ndarray:
    """Forecast with the adapters applied; (W, F) -> (H,) or (B, W, F) -> (B, H)."""
    net = learner.net
    x, single = neural._as_batch(net.config, x)
    params = {n: Tensor(p) for n, p in net.params.items()}
    adapt = [_adapter_graph(a, Tensor(a.calibrator), learner.config.blend) for a in learner.adapters]
    out = neural.forward_graph(net.config, params, x, adapt).data
    return out[0] if single else out


def continual_step(learner: ContinualLearner, x: np.ndarray, y: np.ndarray, lr: float | None = None) -> ContinualLearner:
    """Predict-loss-update on one revealed sample.

    Updates the backbone and calibrators by one clipped Adam step, then the
    gradient averages, the adapter state and (on interference) the memory.
    """
    net, cfg = learner.net, learner.config
    X, _ = neural._as_batch(net.config, np.asarray(x)[None])
    Y = np.asarray(y, dtype=np.float64).reshape(1, net.config.H)
    names = net.names
    params = {n: Tensor(net.params[n]) for n in names}
    cals = [Tensor(a.calibrator) for a in learner.adapters]
    adapt = [_adapter_graph(a, c, cfg.blend) for a, c in zip(learner.adapters, cals)]
    loss = neural.mae_loss(neural.forward_graph(net.config, params, X, adapt), Y)
    grads = nx.grad(loss, [params[n] for n in names] + cals)

    raw_block = [grads[names.index(f"conv{b}_w")] for b in range(net.config.blocks)]
    clipped = nx.clip_l2(grads, neural.CLIP_NORM)
    n = len(names)
    base_opt = net.optimizer if lr is None else replace(net.optimizer, lr=lr)
    new_params, base_opt = nx.adam_step(base_opt, net.param_list(), clipped[:n])
    cal_opt = learner.cal_optimizer if lr is None else replace(learner.cal_optimizer, lr=lr)
    new_cals, cal_opt = nx.adam_step(cal_opt, [a.calibrator for a in learner.adapters], clipped[n:])

    new_net = neural.NetState(net.config, dict(zip(names, new_params)), base_opt)
    adapters, memories = [], []
    triggers = learner.triggers
    for b, (adapter, memory) in enumerate(zip(learner.adapters, learner.memories)):
        g_hat = adapter.projection @ raw_block[b].ravel()
        g_fast = cfg.gamma * adapter.g_fast + (1.0 - cfg.gamma) * g_hat
        g_slow = cfg.gamma_prime * adapter.g_slow + (1.0 - cfg.gamma_prime) * g_hat
        u = adapter.identity + g_fast @ new_cals[b]
        recall = None
        memory = AssocMemory(memory.capacity, list(memory.keys), list(memory.values), list(memory.hits))
        if nx.cosine(g_fast, g_slow) < -cfg.tau:
            triggers += 1
            query = _unit(g_slow)
            recall = memory_read(memory, query, adapter.channels)
            u = cfg.blend * u + (1.0 - cfg.blend) * recall
            if memory.full:
                slot = int(np.argmax(attention(memory, query)))
                memory.hits[slot] += 1
                memory_write(memory, query, u, slot=slot, blend=cfg.blend)
            else:
                memory_write(memory, query, u)
        adapters.append(replace(adapter, calibrator=new_cals[b], g_fast=g_fast, g_slow=g_slow, u=u, recall=recall))
        memories.append(memory)
    return ContinualLearner(new_net, adapters, memories, cfg, cal_opt, triggers)


def save(learner: ContinualLearner, path) -> None:
    arrays = neural.state_arrays(learner.net, "net_")
    for b, a in enumerate(learner.adapters):
        for attr in ("projection", "calibrator", "g_fast", "g_slow", "u"):
            arrays[f"ad{b}_{attr}"] = getattr(a, attr)
        if a.recall is not None:
            arrays[f"ad{b}_recall"] = a.recall
        mem = learner.memories[b]
        if len(mem):
            arrays[f"mem{b}_keys"] = np.vstack(mem.keys)
            arrays[f"mem{b}_values"] = np.vstack(mem.values)
            arrays[f"mem{b}_hits"] = np.asarray(mem.hits, dtype=np.int64)
    for i, (m, v) in enumerate(zip(learner.cal_optimizer.m, learner.cal_optimizer.v)):
        arrays[f"cal_m_{i}"] = m
        arrays[f"cal_v_{i}"] = v
    o = learner.cal_optimizer
    meta = {
        "kind": "continual",
        "net": neural.state_meta(learner.net),
        "config": asdict(learner.config),
        "cal_adam": {"lr": o.lr, "beta1": o.beta1, "beta2": o.beta2, "eps": o.eps, "t": o.t},
        "triggers": learner.triggers,
        "memory_sizes": [len(m) for m in learner.memories],
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), **arrays)


def load(path) -> ContinualLearner:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("kind") != "continual":
            raise ValueError(f"{path} does not hold a continual learner")
        net = neural.state_from(meta["net"], z, "net_")
        cfg = ContinualConfig(**meta["config"])
        adapters, memories = [], []
        for b in range(net.config.blocks):
            recall = z[f"ad{b}_recall"].copy() if f"ad{b}_recall" in z.files else None
            adapters.append(
                BlockAdapter(
                    channels=net.config.channels,
                    projection=z[f"ad{b}_projection"].copy(),
                    calibrator=z[f"ad{b}_calibrator"].copy(),
                    g_fast=z[f"ad{b}_g_fast"].copy(),
                    g_slow=z[f"ad{b}_g_slow"].copy(),
                    u=z[f"ad{b}_u"].copy(),
                    recall=recall,
                )
            )
            mem = AssocMemory(cfg.memory_slots)
            if meta["memory_sizes"][b]:
                mem.keys = list(z[f"mem{b}_keys"].copy())
                mem.values = list(z[f"mem{b}_values"].copy())
                mem.hits = [int(h) for h in z[f"mem{b}_hits"]]
            memories.append(mem)
        a = meta["cal_adam"]
        k = net.config.blocks
        cal_opt = AdamState(
            a["lr"], a["beta1"], a["beta2"], a["eps"], a["t"],
            [z[f"cal_m_{i}"].copy() for i in range(k)],
            [z[f"cal_v_{i}"].copy() for i in range(k)],
        )
        return ContinualLearner(net, adapters, memories, cfg, cal_opt, meta["triggers"])
