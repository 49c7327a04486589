"""Small numpy MLP Q-network with hand-written gradients and Adam.

Hidden layers are ``linear -> [layer norm] -> relu``.  When layer norm is
enabled its gain and bias are shared by every hidden layer of the same
width, so gradients from all those layers accumulate into one parameter
pair.  Heads are either a single linear layer (plain) or separate value and
advantage layers combined as ``Q = V + A - mean(A)`` (dueling).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import InputError

CHECKPOINT_VERSION = 1
NORM_EPS = 1e-5


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = (32,)
    head: str = "plain"
    normalization: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_layers):
            raise InputError("network dimensions must be positive")
        if self.head not in ("plain", "dueling"):
            raise InputError(f"head must be 'plain' or 'dueling', got {self.head!r}")
        if self.head == "dueling" and not self.hidden_layers:
            raise InputError("a dueling head needs at least one hidden layer")


Params = dict[str, np.ndarray]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: MlpConfig) -> Params:
    rng = np.random.default_rng(config.seed)
    params: Params = {}
    width_in = config.input_dim
    for i, width in enumerate(config.hidden_layers):
        params[f"W{i}"] = _glorot(rng, width_in, width)
        params[f"b{i}"] = np.zeros(width)
        if config.normalization and f"g{width}" not in params:
            params[f"g{width}"] = np.ones(width)
            params[f"beta{width}"] = np.zeros(width)
        width_in = width
    if config.head == "plain":
        params["Wq"] = _glorot(rng, width_in, config.output_dim)
        params["bq"] = np.zeros(config.output_dim)
    else:
        params["Wv"] = _glorot(rng, width_in, 1)
        params["bv"] = np.zeros(1)
        params["Wa"] = _glorot(rng, width_in, config.output_dim)
        params["ba"] = np.zeros(config.output_dim)
    return params


@dataclass
class QNetwork:
    config: MlpConfig
    params: Params = field(default_factory=dict)

    @classmethod
    def create(cls, config: MlpConfig) -> "QNetwork":
        return cls(config, init_params(config))

    def copy(self) -> "QNetwork":
        return QNetwork(self.config, {k: v.copy() for k, v in self.params.items()})

    def load_from(self, other: "QNetwork") -> None:
        for k, v in other.params.items():
            np.copyto(self.params[k], v)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self, x)


def _as_batch(net: QNetwork, x: np.ndarray) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.config.input_dim:
        raise InputError(f"expected input width {net.config.input_dim}, got shape {arr.shape}")
    return arr


def _forward(net: QNetwork, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None, list[tuple]]:
    p, cfg = net.params, net.config
    h = x
    cache = []
    for i, width in enumerate(cfg.hidden_layers):
        z = h @ p[f"W{i}"] + p[f"b{i}"]
        if cfg.normalization:
            mu = z.mean(axis=1, keepdims=True)
            inv_std = 1.0 / np.sqrt(z.var(axis=1, keepdims=True) + NORM_EPS)
            xhat = (z - mu) * inv_std
            a = xhat * p[f"g{width}"] + p[f"beta{width}"]
        else:
            xhat = inv_std = None
            a = z
        cache.append((h, xhat, inv_std, a))
        h = np.maximum(a, 0.0)
    if cfg.head == "plain":
        return h @ p["Wq"] + p["bq"], None, cache + [h]
    value = h @ p["Wv"] + p["bv"]
    adv = h @ p["Wa"] + p["ba"]
    q = value + adv - adv.mean(axis=1, keepdims=True)
    return q, value, cache + [h]


def forward(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Q-values, shape ``(batch, n)``; a 1-D input yields a 1-D output."""
    squeeze = np.ndim(x) == 1
    q, _, _ = _forward(net, _as_batch(net, x))
    return q[0] if squeeze else q


def state_value(net: QNetwork, x: np.ndarray) -> np.ndarray:
    """Value-stream output of a dueling network, shape ``(batch,)``."""
    if net.config.head != "dueling":
        raise InputError("state_value needs a dueling head")
    _, value, _ = _forward(net, _as_batch(net, x))
    return value[:, 0]


def loss_and_grads(
    net: QNetwork, states: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, Params]:
    """Mean squared error between ``targets`` and Q at the taken actions, with gradients."""
    x = _as_batch(net, states)
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    batch = x.shape[0]
    if batch == 0 or actions.shape[0] != batch or y.shape[0] != batch:
        raise InputError("states, actions and targets must share a nonzero batch size")
    if not np.all(np.isfinite(y)):
        raise InputError("targets must be finite")

    p, cfg = net.params, net.config
    q, _, cache = _forward(net, x)
    rows = np.arange(batch)
    err = q[rows, actions] - y
    loss = float(np.mean(err**2))

    grads: Params = {k: np.zeros_like(v) for k, v in p.items()}
    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / batch
    h = cache[-1]
    if cfg.head == "plain":
        grads["Wq"] = h.T @ dq
        grads["bq"] = dq.sum(axis=0)
        dh = dq @ p["Wq"].T
    else:
        dv = dq.sum(axis=1, keepdims=True)
        dadv = dq - dq.mean(axis=1, keepdims=True)
        grads["Wv"] = h.T @ dv
        grads["bv"] = dv.sum(axis=0)
        grads["Wa"] = h.T @ dadv
        grads["ba"] = dadv.sum(axis=0)
        dh = dv @ p["Wv"].T + dadv @ p["Wa"].T

    for i in reversed(range(len(cfg.hidden_layers))):
        width = cfg.hidden_layers[i]
        h_prev, xhat, inv_std, a = cache[i]
        da = dh * (a > 0)
        if cfg.normalization:
            grads[f"g{width}"] += (da * xhat).sum(axis=0)
            grads[f"beta{width}"] += da.sum(axis=0)
            dxhat = da * p[f"g{width}"]
            dz = inv_std * (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            )
        else:
            dz = da
        grads[f"W{i}"] = h_prev.T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ p[f"W{i}"].T
    return loss, grads


@dataclass
class AdamState:
    m: Params
    v: Params
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Params) -> "AdamState":
        return cls({k: np.zeros_like(x) for k, x in params.items()}, {k: np.zeros_like(x) for k, x in params.items()})


def adam_step(net: QNetwork, grads: Params, state: AdamState, learning_rate: float) -> None:
    """Bias-corrected Adam update, in place."""
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for k, g in grads.items():
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        net.params[k] -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def save_network(net: QNetwork, path: str | Path, meta: dict[str, Any] | None = None) -> None:
    """Write config, metadata and all parameter arrays to an ``.npz`` file."""
    header = {"version": CHECKPOINT_VERSION, "config": asdict(net.config), "meta": meta or {}}
    arrays = {f"param__{k}": v for k, v in net.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_network(path: str | Path) -> tuple[QNetwork, dict[str, Any]]:
    with np.load(path) as data:
        header = json.loads(data["header"].tobytes().decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise InputError(f"unsupported checkpoint version {header.get('version')}")
        params = {k[len("param__"):]: data[k].copy() for k in data.files if k.startswith("param__")}
    cfg = header["config"]
    cfg["hidden_layers"] = tuple(cfg["hidden_layers"])
    config = MlpConfig(**cfg)
    expected = init_params(config)
    if set(expected) != set(params) or any(expected[k].shape != params[k].shape for k in expected):
        raise InputError(f"{path}: parameter shapes do not match the stored config")
    return QNetwork(config, params), header["meta"]
