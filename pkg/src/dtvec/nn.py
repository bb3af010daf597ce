"""Dense multilayer perceptrons in numpy, an Adam optimizer and the dueling critic.

Weights are stored as ``(fan_in, fan_out)`` matrices so that a batch of row
vectors maps as ``x @ W + b``. Hidden layers use ReLU; the output head is either
the identity or the logistic function.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ACTIVATIONS = ("identity", "sigmoid")
CHECKPOINT_MAGIC = b"DTVECNN1"


class DimensionError(ValueError):
    pass


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = "identity"

    def __post_init__(self):
        if self.output not in ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise DimensionError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and self.weights[k - 1].shape[1] != w.shape[0]:
                raise DimensionError(f"layer {k}: input {w.shape[0]} != previous output {self.weights[k - 1].shape[1]}")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def arrays(self) -> list[np.ndarray]:
        """Parameters in a fixed order (W0, b0, W1, b1, ...); the arrays are live views."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)

    def assign(self, other: "MlpParams") -> None:
        mine, theirs = self.arrays(), other.arrays()
        if len(mine) != len(theirs) or any(a.shape != b.shape for a, b in zip(mine, theirs)):
            raise DimensionError("cannot assign parameters of a differently shaped network")
        for dst, src in zip(mine, theirs):
            dst[...] = src


def init_mlp(sizes: Sequence[int], output: str, rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization for ``sizes = [in, h1, ..., out]``."""
    if len(sizes) < 2:
        raise ValueError("sizes needs an input and an output dimension")
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(rng.uniform(-lim, lim, size=fan_out))
    return MlpParams(ws, bs, output)


_TINY = np.finfo(float).tiny
_BELOW_ONE = np.nextafter(1.0, 0.0)


def _sigmoid(z):
    # split on sign to avoid overflow in exp
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # saturated values are kept strictly inside (0, 1)
    return np.clip(out, _TINY, _BELOW_ONE, out=out)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input of every layer
    pre: list[np.ndarray]  # pre-activations
    output: np.ndarray
    squeeze: bool


def mlp_forward(params: MlpParams, x) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.shape[-1] != params.in_dim:
        raise DimensionError(f"input has {x.shape[-1]} features, network expects {params.in_dim}")
    inputs, pre = [], []
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        if k < last:
            h = np.maximum(z, 0.0)
        elif params.output == "sigmoid":
            h = _sigmoid(z)
        else:
            h = z
    out = h[0] if squeeze else h
    return out, ForwardCache(inputs, pre, h, squeeze)


def mlp_backward(params: MlpParams, cache: ForwardCache, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of ``sum(grad_out * output)`` w.r.t. the parameters (``arrays()`` order) and the input."""
    g = np.asarray(grad_out, dtype=float)
    if cache.squeeze:
        g = g[None, :]
    last = len(params.weights) - 1
    if params.output == "sigmoid":
        y = cache.output
        g = g * y * (1.0 - y)
    grads: list[np.ndarray] = [None] * (2 * len(params.weights))  # type: ignore[list-item]
    for k in range(last, -1, -1):
        if k < last:
            g = g * (cache.pre[k] > 0)
        grads[2 * k] = cache.inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ params.weights[k].T
    grad_in = g[0] if cache.squeeze else g
    return grads, grad_in


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, arrays: Sequence[np.ndarray], lr: float = 1e-4, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays], **kw)


def optimizer_step(state: AdamState, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
    """One bias-corrected Adam descent step, applied in place to ``arrays``."""
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise DimensionError("parameter, gradient and moment lists differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def soft_update(target: MlpParams, source: MlpParams, rate: float) -> None:
    """target <- rate * source + (1 - rate) * target, elementwise."""
    for t, s in zip(target.arrays(), source.arrays()):
        t *= 1.0 - rate
        t += rate * s


# ------------------------------------------------------------------ critic


@dataclass
class DuelingCritic:
    """Q(o, a, others, w) = V(o, w) + A(o, a, others, w) - mean_n A(o, a_n, others, w).

    With ``value=None`` the critic is monolithic: Q is the single net's output and
    no random-action baseline is used.
    """

    advantage: MlpParams
    value: MlpParams | None = None

    @property
    def dueling(self) -> bool:
        return self.value is not None

    def nets(self) -> list[MlpParams]:
        return [self.advantage] + ([self.value] if self.value is not None else [])

    def arrays(self) -> list[np.ndarray]:
        out = []
        for net in self.nets():
            out.extend(net.arrays())
        return out

    def copy(self) -> "DuelingCritic":
        return DuelingCritic(self.advantage.copy(), None if self.value is None else self.value.copy())

    def assign(self, other: "DuelingCritic") -> None:
        for a, b in zip(self.nets(), other.nets()):
            a.assign(b)


def init_critic(
    obs_dim: int, action_dim: int, others_dim: int, hidden: Sequence[int], rng: np.random.Generator, dueling=True
) -> DuelingCritic:
    adv = init_mlp([obs_dim + action_dim + others_dim + 2, *hidden, 1], "identity", rng)
    val = init_mlp([obs_dim + 2, *hidden, 1], "identity", rng) if dueling else None
    return DuelingCritic(adv, val)


def _rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[None, :] if x.ndim == 1 else x


@dataclass
class CriticCache:
    adv: ForwardCache
    val: ForwardCache | None
    base: ForwardCache | None
    n_random: int
    action_slice: slice


def critic_forward(critic: DuelingCritic, obs, action, others, weights, random_actions=None):
    """Batched Q values, shape (B,). ``random_actions`` (N, action_dim) are shared by every row."""
    obs, action, others, weights = _rows(obs), _rows(action), _rows(others), _rows(weights)
    B = obs.shape[0]
    if others.shape[0] == 1 and B > 1:
        others = np.repeat(others, B, axis=0)
    if others.shape[1] == 0:
        others = np.zeros((B, 0))
    adv_in = np.concatenate([obs, action, others, weights], axis=1)
    a_out, a_cache = mlp_forward(critic.advantage, adv_in)
    q = a_out[:, 0].copy()
    sl = slice(obs.shape[1], obs.shape[1] + action.shape[1])
    v_cache = b_cache = None
    n = 0
    if critic.value is not None:
        v_out, v_cache = mlp_forward(critic.value, np.concatenate([obs, weights], axis=1))
        if random_actions is None:
            raise ValueError("a dueling critic needs random actions for its baseline")
        ra = _rows(random_actions)
        n = ra.shape[0]
        if n < 1:
            raise ValueError("need at least one random action")
        tiled = np.repeat(adv_in, n, axis=0)
        tiled[:, sl] = np.tile(ra, (B, 1))
        b_out, b_cache = mlp_forward(critic.advantage, tiled)
        # centre per random action so a constant advantage cancels exactly
        q = v_out[:, 0] + (a_out[:, :1] - b_out[:, 0].reshape(B, n)).mean(axis=1)
    return q, CriticCache(a_cache, v_cache, b_cache, n, sl)


def critic_backward(critic: DuelingCritic, cache: CriticCache, grad_q) -> tuple[list[np.ndarray], np.ndarray]:
    """Parameter gradients (``critic.arrays()`` order) and dQ/d(action) treating the baseline as constant."""
    g = np.asarray(grad_q, dtype=float).reshape(-1, 1)
    ga, gin = mlp_backward(critic.advantage, cache.adv, g)
    dq_da = gin[:, cache.action_slice]
    grads = ga
    if critic.value is not None:
        gb, _ = mlp_backward(critic.advantage, cache.base, -np.repeat(g, cache.n_random, axis=0) / cache.n_random)
        grads = [x + y for x, y in zip(ga, gb)]
        gv, _ = mlp_backward(critic.value, cache.val, g)
        grads = grads + gv
    return grads, dq_da


def critic_action_gradient(critic: DuelingCritic, obs, action, others, weights) -> tuple[np.ndarray, np.ndarray]:
    """Advantage values and dQ/d(action); V and the random-action baseline do not depend on the action."""
    obs, action, others, weights = _rows(obs), _rows(action), _rows(others), _rows(weights)
    B = obs.shape[0]
    if others.shape[0] == 1 and B > 1:
        others = np.repeat(others, B, axis=0)
    adv_in = np.concatenate([obs, action, others, weights], axis=1)
    a_out, cache = mlp_forward(critic.advantage, adv_in)
    _, gin = mlp_backward(critic.advantage, cache, np.ones((B, 1)))
    return a_out[:, 0], gin[:, obs.shape[1] : obs.shape[1] + action.shape[1]]


def dueling_q(critic: DuelingCritic, observation, action, others_actions, weights, n_random: int, rng) -> float:
    """Single-sample Q with ``n_random`` fresh uniform actions for the baseline."""
    action = np.asarray(action, dtype=float)
    ra = rng.uniform(size=(n_random, action.shape[-1])) if critic.dueling else None
    q, _ = critic_forward(critic, observation, action, others_actions, weights, ra)
    return float(q[0])


# -------------------------------------------------------------- checkpoints


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Layout: magic, uint32 LE header length, UTF-8 JSON header, float64 LE data in header order."""
    names = list(arrays)
    header = {
        "arrays": [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names],
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(hb)))
        fh.write(hb)
        for k in names:
            fh.write(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    pos = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack("<I", data[pos : pos + 4])
    pos += 4
    header = json.loads(data[pos : pos + hlen].decode("utf-8"))
    pos += hlen
    out = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if pos + nbytes > len(data):
            raise ValueError(f"{path}: truncated data for {spec['name']}")
        out[spec["name"]] = np.frombuffer(data[pos : pos + nbytes], dtype="<f8").reshape(shape).astype(float)
        pos += nbytes
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return out, header["meta"]


def mlp_to_arrays(prefix: str, params: MlpParams) -> dict[str, np.ndarray]:
    out = {}
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{prefix}.W{k}"] = w
        out[f"{prefix}.b{k}"] = b
    return out


def mlp_from_arrays(prefix: str, arrays: dict[str, np.ndarray], output: str) -> MlpParams:
    ws, bs = [], []
    k = 0
    while f"{prefix}.W{k}" in arrays:
        ws.append(arrays[f"{prefix}.W{k}"].copy())
        bs.append(arrays[f"{prefix}.b{k}"].copy())
        k += 1
    if not ws:
        raise KeyError(f"no layers named {prefix}.W*")
    return MlpParams(ws, bs, output)
