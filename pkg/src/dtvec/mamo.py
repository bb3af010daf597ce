"""Multi-agent multi-objective actor-learner training.

Vehicles share one policy/critic pair and the edge node has its own. Policies
take the objective weight vector as part of their observation, so a single
trained policy covers the quality/profit tradeoff. Vehicle critics are trained
on difference rewards, the edge critic on the min-max normalized edge reward;
both are scalarized with the transition's own weight vector only when targets
are formed.
"""

from __future__ import annotations

import json
import math
import queue
import threading
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .env import Environment, StepResult, World, sample_weight_vector
from .metrics import TwinRecord, summarize
from .nn import (
    AdamState,
    MlpParams,
    critic_action_gradient,
    critic_backward,
    critic_forward,
    init_critic,
    init_mlp,
    load_arrays,
    mlp_backward,
    mlp_forward,
    mlp_from_arrays,
    mlp_to_arrays,
    optimizer_step,
    save_arrays,
    soft_update as soft_update_net,
)


@dataclass(frozen=True)
class TrainingConfig:
    gamma: float = 0.996
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    lr_policy: float = 1e-4
    lr_critic: float = 1e-4
    soft_rate_vehicle: float = 1e-3
    soft_rate_edge: float = 1e-3
    target_period: int = 100
    actor_sync_period: int = 500
    actors: int = 4
    noise_start: float = 0.3
    noise_end: float = 0.05
    n_random: int = 16
    policy_hidden: tuple[int, ...] = (256, 128)
    critic_hidden: tuple[int, ...] = (512, 256)
    iterations: int = 1000
    learner_steps_per_iteration: int = 20
    warmup_transitions: int = 0  # defaults to one batch when 0
    dueling: bool = True
    sync_from_targets: bool = True
    fixed_weights: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        for name in ("soft_rate_vehicle", "soft_rate_edge"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")
        for name in ("batch_size", "buffer_capacity", "target_period", "actor_sync_period", "actors", "n_random"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.iterations < 0 or self.learner_steps_per_iteration < 0:
            raise ValueError("iterations and learner steps must be >= 0")
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size exceeds buffer_capacity")
        if self.fixed_weights is not None:
            w = self.fixed_weights
            if len(w) != 2 or min(w) < 0 or not math.isclose(sum(w), 1.0, abs_tol=1e-9):
                raise ValueError("fixed_weights must be two non-negative numbers summing to 1")

    @classmethod
    def desk(cls, **overrides) -> "TrainingConfig":
        """Settings that fit a single CPU core; see the README for the rationale."""
        base = dict(
            batch_size=64,
            buffer_capacity=100_000,
            lr_policy=3e-4,
            lr_critic=1e-3,
            soft_rate_vehicle=0.01,
            soft_rate_edge=0.01,
            target_period=1,
            actor_sync_period=20,
            actors=1,
            n_random=8,
            policy_hidden=(64, 32),
            critic_hidden=(128, 64),
            iterations=500,
            learner_steps_per_iteration=20,
        )
        base.update(overrides)
        return cls(**base)

    @property
    def warmup(self) -> int:
        return self.warmup_transitions or self.batch_size

    def noise_at(self, iteration: int) -> float:
        if self.iterations <= 1:
            return self.noise_end
        frac = min(iteration / (self.iterations - 1), 1.0)
        return self.noise_start + frac * (self.noise_end - self.noise_start)


# ------------------------------------------------------------------ replay


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored column-wise; appends and samples are atomic."""

    def __init__(self, capacity: int, shapes: dict[str, tuple[int, ...]]):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._data = {k: np.zeros((capacity, *s)) for k, s in shapes.items()}
        self._next = 0
        self._size = 0
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return self._size

    @property
    def fields(self) -> tuple[str, ...]:
        return tuple(self._data)

    def append(self, **items) -> None:
        if set(items) != set(self._data):
            raise KeyError(f"transition fields {sorted(items)} != {sorted(self._data)}")
        with self._lock:
            i = self._next
            for k, v in items.items():
                self._data[k][i] = v
            self._next = (i + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        with self._lock:
            if batch_size > self._size:
                raise ValueError(f"cannot sample {batch_size} from {self._size} transitions")
            idx = rng.choice(self._size, size=batch_size, replace=False)
            return {k: v[idx].copy() for k, v in self._data.items()}


# ------------------------------------------------------------------ agents


def compute_target(reward, weights, gamma: float, q_next, done) -> np.ndarray:
    """y = r.w + gamma * Q'(next) with the bootstrap dropped on terminal transitions."""
    r = np.asarray(reward, dtype=float)
    w = np.asarray(weights, dtype=float)
    scal = np.sum(r * w, axis=-1)
    return scal + gamma * (1.0 - np.asarray(done, dtype=float)) * np.asarray(q_next, dtype=float)


class Agent:
    """Local and target policy/critic networks with their optimizers."""

    def __init__(
        self,
        policy_in: int,
        obs_dim: int,
        action_dim: int,
        others_dim: int,
        cfg: TrainingConfig,
        rng: np.random.Generator,
        soft_rate: float,
    ):
        self.action_dim = action_dim
        self.soft_rate = soft_rate
        self.policy = init_mlp([policy_in, *cfg.policy_hidden, action_dim], "sigmoid", rng)
        self.critic = init_critic(obs_dim, action_dim, others_dim, cfg.critic_hidden, rng, cfg.dueling)
        self.policy_target = self.policy.copy()
        self.critic_target = self.critic.copy()
        self.policy_opt = AdamState.for_params(self.policy.arrays(), lr=cfg.lr_policy)
        self.critic_opt = AdamState.for_params(self.critic.arrays(), lr=cfg.lr_critic)

    def act(self, policy_input, noise: float = 0.0, rng: np.random.Generator | None = None, target=False):
        net = self.policy_target if target else self.policy
        out, _ = mlp_forward(net, policy_input)
        if noise > 0:
            out = out + noise * rng.standard_normal(out.shape)
        return np.clip(out, 0.0, 1.0)

    def critic_step(self, obs, action, others, weights, y, random_actions) -> float:
        q, cache = critic_forward(self.critic, obs, action, others, weights, random_actions)
        diff = q - y
        loss = float(np.mean(diff**2))
        grads, _ = critic_backward(self.critic, cache, 2.0 * diff / len(diff))
        optimizer_step(self.critic_opt, self.critic.arrays(), grads)
        return loss

    def policy_step(self, policy_input, obs, others, weights) -> float:
        """Ascend the critic along the deterministic policy gradient; returns the mean advantage."""
        a, pcache = mlp_forward(self.policy, policy_input)
        adv, dq_da = critic_action_gradient(self.critic, obs, a, others, weights)
        grads, _ = mlp_backward(self.policy, pcache, -dq_da / len(adv))
        optimizer_step(self.policy_opt, self.policy.arrays(), grads)
        return float(adv.mean())

    def soft_update(self) -> None:
        soft_update_net(self.policy_target, self.policy, self.soft_rate)
        for t, s in zip(self.critic_target.nets(), self.critic.nets()):
            soft_update_net(t, s, self.soft_rate)

    def to_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        out.update(mlp_to_arrays(f"{prefix}.policy", self.policy))
        out.update(mlp_to_arrays(f"{prefix}.policy_target", self.policy_target))
        for tag, critic in (("critic", self.critic), ("critic_target", self.critic_target)):
            out.update(mlp_to_arrays(f"{prefix}.{tag}.adv", critic.advantage))
            if critic.value is not None:
                out.update(mlp_to_arrays(f"{prefix}.{tag}.val", critic.value))
        return out

    def load_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        self.policy.assign(mlp_from_arrays(f"{prefix}.policy", arrays, "sigmoid"))
        self.policy_target.assign(mlp_from_arrays(f"{prefix}.policy_target", arrays, "sigmoid"))
        for tag, critic in (("critic", self.critic), ("critic_target", self.critic_target)):
            critic.advantage.assign(mlp_from_arrays(f"{prefix}.{tag}.adv", arrays, "identity"))
            if critic.value is not None:
                critic.value.assign(mlp_from_arrays(f"{prefix}.{tag}.val", arrays, "identity"))


def soft_update(learner: "MamoLearner") -> None:
    learner.vehicle.soft_update()
    learner.edge.soft_update()


def sync_actors(learner: "MamoLearner", actors: Sequence["ActorPolicies"]) -> None:
    src_v = learner.vehicle.policy_target if learner.cfg.sync_from_targets else learner.vehicle.policy
    src_e = learner.edge.policy_target if learner.cfg.sync_from_targets else learner.edge.policy
    for actor in actors:
        actor.update(src_v, src_e)


@dataclass
class ActorPolicies:
    """Read-only snapshot of the policies an actor explores with."""

    vehicle: MlpParams
    edge: MlpParams
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def update(self, vehicle: MlpParams, edge: MlpParams) -> None:
        with self.lock:
            self.vehicle = vehicle.copy()
            self.edge = edge.copy()

    def snapshot(self) -> tuple[MlpParams, MlpParams]:
        with self.lock:
            return self.vehicle, self.edge


def act_vehicle(policy: MlpParams, observation, noise_scale: float, rng: np.random.Generator) -> np.ndarray:
    out, _ = mlp_forward(policy, observation)
    if noise_scale > 0:
        out = out + noise_scale * rng.standard_normal(out.shape)
    return np.clip(out, 0.0, 1.0)


def act_edge(policy: MlpParams, observation, vehicle_actions, noise_scale: float, rng: np.random.Generator):
    va = np.asarray(vehicle_actions, dtype=float)
    obs = np.asarray(observation, dtype=float)
    if obs.ndim == 1:
        x = np.concatenate([obs, va.ravel()])
    else:
        x = np.concatenate([obs, va.reshape(len(obs), -1)], axis=1)
    return act_vehicle(policy, x, noise_scale, rng)


class MamoLearner:
    def __init__(self, env: Environment, cfg: TrainingConfig, rng: np.random.Generator):
        self.env = env
        self.cfg = cfg
        S = env.n_vehicles
        dv, de = env.vehicle_action_dim, env.edge_action_dim
        self.S = S
        self.vehicle = Agent(env.vehicle_obs_dim, env.vehicle_obs_dim, dv, (S - 1) * dv, cfg, rng, cfg.soft_rate_vehicle)
        self.edge = Agent(env.edge_obs_dim + S * dv, env.edge_obs_dim, de, S * dv, cfg, rng, cfg.soft_rate_edge)
        self.steps = 0
        self._others = np.array([[j for j in range(S) if j != s] for s in range(S)], dtype=int).reshape(S, S - 1)

    def replay_shapes(self) -> dict[str, tuple[int, ...]]:
        env, S = self.env, self.S
        return {
            "obs_v": (S, env.vehicle_obs_dim),
            "obs_e": (env.edge_obs_dim,),
            "w": (2,),
            "act_v": (S, env.vehicle_action_dim),
            "act_e": (env.edge_action_dim,),
            "rew_v": (S, 2),
            "rew_e": (2,),
            "next_obs_v": (S, env.vehicle_obs_dim),
            "next_obs_e": (env.edge_obs_dim,),
            "next_w": (2,),
            "done": (),
        }

    def others_of(self, act_v: np.ndarray) -> np.ndarray:
        """(B, S, dv) -> (B, S, (S-1)*dv): for each vehicle, the other vehicles' actions in index order."""
        B = act_v.shape[0]
        return act_v[:, self._others].reshape(B, self.S, -1)

    def vehicle_targets(self, batch, ra_v) -> np.ndarray:
        """(B, S) targets for the vehicle critic."""
        B, S = batch["obs_v"].shape[:2]
        nxt = batch["next_obs_v"].reshape(B * S, -1)
        a_next = self.vehicle.act(nxt, target=True).reshape(B, S, -1)
        others = self.others_of(a_next).reshape(B * S, -1)
        w_next = np.repeat(batch["next_w"], S, axis=0)
        q_next, _ = critic_forward(self.vehicle.critic_target, nxt, a_next.reshape(B * S, -1), others, w_next, ra_v)
        done = np.repeat(batch["done"], S)
        w = np.repeat(batch["w"], S, axis=0)
        return compute_target(batch["rew_v"].reshape(B * S, 2), w, self.cfg.gamma, q_next, done).reshape(B, S)

    def edge_targets(self, batch, ra_e) -> np.ndarray:
        B, S = batch["obs_v"].shape[:2]
        a_next_v = self.vehicle.act(batch["next_obs_v"].reshape(B * S, -1), target=True).reshape(B, -1)
        pin = np.concatenate([batch["next_obs_e"], a_next_v], axis=1)
        a_next_e = self.edge.act(pin, target=True)
        q_next, _ = critic_forward(
            self.edge.critic_target, batch["next_obs_e"], a_next_e, a_next_v, batch["next_w"], ra_e
        )
        return compute_target(batch["rew_e"], batch["w"], self.cfg.gamma, q_next, batch["done"])

    def random_actions(self, rng: np.random.Generator):
        if not self.cfg.dueling:
            return None, None
        n = self.cfg.n_random
        return rng.uniform(size=(n, self.env.vehicle_action_dim)), rng.uniform(size=(n, self.env.edge_action_dim))


def critic_update(batch: dict, learner: MamoLearner, ra_v=None, ra_e=None) -> tuple[float, float]:
    """One squared-TD step on each critic; returns (vehicle loss, edge loss)."""
    B, S = batch["obs_v"].shape[:2]
    y_v = learner.vehicle_targets(batch, ra_v).reshape(B * S)
    y_e = learner.edge_targets(batch, ra_e)
    obs = batch["obs_v"].reshape(B * S, -1)
    act = batch["act_v"].reshape(B * S, -1)
    others = learner.others_of(batch["act_v"]).reshape(B * S, -1)
    w = np.repeat(batch["w"], S, axis=0)
    lv = learner.vehicle.critic_step(obs, act, others, w, y_v, ra_v)
    le = learner.edge.critic_step(
        batch["obs_e"], batch["act_e"], batch["act_v"].reshape(B, -1), batch["w"], y_e, ra_e
    )
    return lv, le


def policy_update(batch: dict, learner: MamoLearner) -> tuple[float, float]:
    """Deterministic policy-gradient step for the shared vehicle policy and the edge policy."""
    B, S = batch["obs_v"].shape[:2]
    obs = batch["obs_v"].reshape(B * S, -1)
    others = learner.others_of(batch["act_v"]).reshape(B * S, -1)
    w = np.repeat(batch["w"], S, axis=0)
    qv = learner.vehicle.policy_step(obs, obs, others, w)
    av = batch["act_v"].reshape(B, -1)
    pin = np.concatenate([batch["obs_e"], av], axis=1)
    qe = learner.edge.policy_step(pin, batch["obs_e"], av, batch["w"])
    return qv, qe


# ---------------------------------------------------------------- episodes


@dataclass
class EpisodeResult:
    seed: int
    weights: np.ndarray
    rewards: np.ndarray  # (T, 2) system reward per slot
    records: list[TwinRecord]
    trace: list[dict] = field(default_factory=list)

    @property
    def scalarized_return(self) -> float:
        return float(np.sum(self.rewards @ self.weights))


ActFn = Callable[[World], tuple[np.ndarray, np.ndarray]]


def run_episode(
    env: Environment,
    act: ActFn,
    weights,
    seed: int,
    credit: bool = False,
    on_step: Callable[[World, np.ndarray, np.ndarray, StepResult], None] | None = None,
    trace: bool = False,
) -> EpisodeResult:
    world = env.reset(seed, weights)
    rewards, records, rows = [], [], []
    while world.t < env.T:
        vraws, eraw = act(world)
        res = env.transition(world, vraws, eraw, credit=credit)
        if on_step is not None:
            on_step(world, vraws, eraw, res)
        if trace:
            rows.extend(env.trace_rows(world, res.joint, res.outcome))
        rewards.append(res.outcome.reward)
        records.extend(res.outcome.records)
        world = res.world
    return EpisodeResult(seed, np.asarray(weights, dtype=float), np.array(rewards).reshape(-1, 2), records, rows)


def policy_act_fn(env: Environment, vehicle: MlpParams, edge: MlpParams, noise: float = 0.0, rng=None) -> ActFn:
    def act(world: World):
        obs_v = np.stack([env.observe_vehicle(world, s) for s in range(env.n_vehicles)])
        av = act_vehicle(vehicle, obs_v, noise, rng)
        ae = act_edge(edge, env.observe_edge(world), av, noise, rng)
        return av, ae

    return act


def random_act_fn(env: Environment, rng: np.random.Generator) -> ActFn:
    def act(world: World):
        return rng.uniform(size=(env.n_vehicles, env.vehicle_action_dim)), rng.uniform(size=env.edge_action_dim)

    return act


# ------------------------------------------------------------- algorithms


class Algorithm:
    """What the training loop needs from a method: acting, storing, learning, checkpointing."""

    name = "base"
    uses_credit = False

    def actor_fn(self, env, actor_index: int, noise: float, rng) -> ActFn:
        raise NotImplementedError

    def store(self, world: World, vraws, eraw, res: StepResult) -> None:
        pass

    def learn(self, steps: int, rng) -> dict:
        return {"critic_loss_vehicle": None, "critic_loss_edge": None, "learner_steps": 0, "buffer_size": 0}

    def greedy_fn(self, env) -> ActFn:
        return self.actor_fn(env, 0, 0.0, None)

    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_checkpoint_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class MamoAlgorithm(Algorithm):
    name = "mamo"
    uses_credit = True

    def __init__(self, env: Environment, cfg: TrainingConfig, rng: np.random.Generator):
        self.env = env
        self.cfg = cfg
        self.learner = MamoLearner(env, cfg, rng)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.learner.replay_shapes())
        src = (self.learner.vehicle.policy_target, self.learner.edge.policy_target)
        self.actors = [ActorPolicies(src[0].copy(), src[1].copy()) for _ in range(cfg.actors)]

    def actor_fn(self, env, actor_index, noise, rng):
        v, e = self.actors[actor_index].snapshot()
        return policy_act_fn(env, v, e, noise, rng)

    def greedy_fn(self, env):
        return policy_act_fn(env, self.learner.vehicle.policy, self.learner.edge.policy)

    def store(self, world, vraws, eraw, res):
        env = self.env
        S = env.n_vehicles
        nxt = res.world
        if res.done:
            next_v = np.zeros((S, env.vehicle_obs_dim))
            next_e = np.zeros(env.edge_obs_dim)
        else:
            next_v = np.stack([env.observe_vehicle(nxt, s) for s in range(S)])
            next_e = env.observe_edge(nxt)
        self.buffer.append(
            obs_v=np.stack([env.observe_vehicle(world, s) for s in range(S)]),
            obs_e=env.observe_edge(world),
            w=world.weights,
            act_v=vraws,
            act_e=eraw,
            rew_v=res.vehicle_rewards,
            rew_e=res.edge_reward,
            next_obs_v=next_v,
            next_obs_e=next_e,
            next_w=nxt.weights,
            done=float(res.done),
        )

    def learn(self, steps, rng):
        cfg = self.cfg
        lv, le = [], []
        for _ in range(steps):
            if len(self.buffer) < max(cfg.warmup, cfg.batch_size):
                break
            batch = self.buffer.sample(cfg.batch_size, rng)
            ra_v, ra_e = self.learner.random_actions(rng)
            a, b = critic_update(batch, self.learner, ra_v, ra_e)
            policy_update(batch, self.learner)
            lv.append(a)
            le.append(b)
            self.learner.steps += 1
            if self.learner.steps % cfg.target_period == 0:
                soft_update(self.learner)
            if self.learner.steps % cfg.actor_sync_period == 0:
                sync_actors(self.learner, self.actors)
        return {
            "critic_loss_vehicle": float(np.mean(lv)) if lv else None,
            "critic_loss_edge": float(np.mean(le)) if le else None,
            "learner_steps": self.learner.steps,
            "buffer_size": len(self.buffer),
        }

    def checkpoint_arrays(self):
        out = self.learner.vehicle.to_arrays("vehicle")
        out.update(self.learner.edge.to_arrays("edge"))
        return out

    def load_checkpoint_arrays(self, arrays):
        self.learner.vehicle.load_arrays("vehicle", arrays)
        self.learner.edge.load_arrays("edge", arrays)
        sync_actors(self.learner, self.actors)


class RandomAlgorithm(Algorithm):
    name = "random"

    def actor_fn(self, env, actor_index, noise, rng):
        return random_act_fn(env, rng)

    def greedy_fn(self, env):
        return random_act_fn(env, np.random.default_rng(0))


# --------------------------------------------------------------- training


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def episode_log(iteration: int, ep: EpisodeResult, noise: float, extra: dict) -> dict:
    s = summarize(ep.records)
    mean_r = ep.rewards.mean(axis=0) if len(ep.rewards) else np.zeros(2)
    row = {
        "iteration": iteration,
        "episode_seed": ep.seed,
        "w1": float(ep.weights[0]),
        "w2": float(ep.weights[1]),
        "noise": noise,
        "reward_quality": float(mean_r[0]),
        "reward_profit": float(mean_r[1]),
        "scalarized_return": ep.scalarized_return,
        "quality": _finite(s.quality),
        "cost": _finite(s.cost),
        "profit": _finite(s.profit),
        "qpuc": _finite(s.qpuc),
        "ppuq": _finite(s.ppuq),
        "twins": s.twins,
    }
    row.update({k: _finite(v) if isinstance(v, float) else v for k, v in extra.items()})
    return row


@dataclass
class TrainResult:
    algorithm: Algorithm
    history: list[dict]


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    init, weights, noise, sample, episodes = ss.spawn(5)
    return (
        np.random.default_rng(init),
        np.random.default_rng(weights),
        np.random.default_rng(noise),
        np.random.default_rng(sample),
        np.random.default_rng(episodes),
    )


def make_algorithm(env: Environment, cfg: TrainingConfig, mode: str = "mamo") -> tuple[Algorithm, tuple]:
    streams = _streams(cfg.seed)
    if mode == "mamo":
        return MamoAlgorithm(env, cfg, streams[0]), streams
    if mode == "multiagent-fixed":
        fixed = replace(cfg, dueling=False, fixed_weights=cfg.fixed_weights or (0.5, 0.5))
        return MamoAlgorithm(env, fixed, streams[0]), streams
    if mode == "random":
        return RandomAlgorithm(), streams
    if mode == "centralized":
        from .baselines import CentralizedAlgorithm

        fixed = replace(cfg, dueling=False, fixed_weights=cfg.fixed_weights or (0.5, 0.5))
        return CentralizedAlgorithm(env, fixed, streams[0]), streams
    raise ValueError(f"unknown mode {mode!r}")


def train(
    env: Environment,
    cfg: TrainingConfig,
    mode: str = "mamo",
    single_thread: bool = True,
    log_path: str | Path | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Run ``cfg.iterations`` episodes, each followed by learner steps; one log row per iteration."""
    algo, (_, w_rng, noise_rng, sample_rng, ep_rng) = make_algorithm(env, cfg, mode)
    fixed = getattr(algo, "cfg", cfg).fixed_weights
    log_fh = Path(log_path).open("w", encoding="utf-8") if log_path else None
    history: list[dict] = []

    def emit(row):
        history.append(row)
        if log_fh:
            log_fh.write(json.dumps(row, sort_keys=True) + "\n")
            log_fh.flush()
        if progress:
            progress(row)

    def plan(i):
        w = np.array(fixed, dtype=float) if fixed is not None else sample_weight_vector(w_rng)
        return w, int(ep_rng.integers(2**31 - 1)), cfg.noise_at(i)

    try:
        if single_thread or cfg.actors == 1:
            for i in range(cfg.iterations):
                w, seed, noise = plan(i)
                ep = run_episode(
                    env, algo.actor_fn(env, 0, noise, noise_rng), w, seed, algo.uses_credit, algo.store
                )
                stats = algo.learn(cfg.learner_steps_per_iteration, sample_rng)
                emit(episode_log(i, ep, noise, stats))
        else:
            _train_threaded(env, cfg, algo, plan, sample_rng, emit)
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(algo, history)


def _train_threaded(env, cfg, algo, plan, sample_rng, emit):
    """K actor threads generate episodes while the main thread learns."""
    plan_lock = threading.Lock()
    done_q: queue.Queue = queue.Queue()
    counter = {"next": 0}
    errors: list[BaseException] = []

    def actor(k):
        rng = np.random.default_rng([cfg.seed, 1000 + k])
        try:
            while True:
                with plan_lock:
                    i = counter["next"]
                    if i >= cfg.iterations:
                        return
                    counter["next"] += 1
                    w, seed, noise = plan(i)
                ep = run_episode(env, algo.actor_fn(env, k, noise, rng), w, seed, algo.uses_credit, algo.store)
                done_q.put((i, ep, noise))
        except BaseException as exc:  # surfaced by the learner loop
            errors.append(exc)
            done_q.put(None)

    threads = [threading.Thread(target=actor, args=(k,), daemon=True) for k in range(cfg.actors)]
    for th in threads:
        th.start()
    for _ in range(cfg.iterations):
        item = done_q.get()
        if item is None:
            break
        i, ep, noise = item
        stats = algo.learn(cfg.learner_steps_per_iteration, sample_rng)
        emit(episode_log(i, ep, noise, stats))
    for th in threads:
        th.join()
    if errors:
        raise errors[0]


# ------------------------------------------------------------- evaluation


@dataclass
class EvaluationResult:
    weights: tuple[float, float]
    returns: list[float]
    episodes: list[EpisodeResult]

    def per_episode(self, key: str) -> np.ndarray:
        return np.array([getattr(summarize(ep.records), key) for ep in self.episodes], dtype=float)

    @staticmethod
    def mean_se(values) -> tuple[float, float]:
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        if len(v) == 0:
            return float("nan"), float("nan")
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
        return float(v.mean()), se

    def pooled(self):
        recs = [r for ep in self.episodes for r in ep.records]
        return summarize(recs)

    def summary(self) -> dict:
        out = {"w1": self.weights[0], "w2": self.weights[1], "episodes": len(self.episodes)}
        m, se = self.mean_se(self.returns)
        out["scalarized_return"] = m
        out["scalarized_return_se"] = se
        for key in ("quality", "cost", "profit", "qpuc", "ppuq", "at", "ar", "asc", "atc"):
            m, se = self.mean_se(self.per_episode(key))
            out[key] = _finite(m)
            out[f"{key}_se"] = _finite(se)
        return out


EVAL_SEED_BASE = 1_000_003


def evaluate(env: Environment, act: ActFn, weights, episodes: int = 20, seed: int = 0) -> EvaluationResult:
    """Greedy roll-outs at a fixed weight vector on held-out episode seeds."""
    w = np.asarray(weights, dtype=float)
    eps = [run_episode(env, act, w, EVAL_SEED_BASE + 7919 * seed + k) for k in range(episodes)]
    return EvaluationResult((float(w[0]), float(w[1])), [e.scalarized_return for e in eps], eps)


def save_checkpoint(path: str | Path, algo: Algorithm, meta: dict) -> None:
    save_arrays(path, algo.checkpoint_arrays(), meta)


def load_checkpoint(path: str | Path, algo: Algorithm) -> dict:
    arrays, meta = load_arrays(path)
    algo.load_checkpoint_arrays(arrays)
    return meta


def config_dict(cfg: TrainingConfig) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
