"""Comparison methods: uniform random actions and fixed-weight learned variants.

The learned variants reuse the MAMO machinery. ``multiagent-fixed`` keeps the
multi-agent topology with a monolithic critic and frozen weights (0.5, 0.5);
``centralized`` trains one agent that sees every observation and emits the
whole joint action, rewarded with the system reward.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .env import Environment, World
from .mamo import (
    Agent,
    Algorithm,
    ReplayBuffer,
    TrainingConfig,
    TrainResult,
    act_vehicle,
    compute_target,
    train,
)
from .nn import critic_forward

MODES = ("random", "centralized", "multiagent-fixed")
FIXED_WEIGHTS = (0.5, 0.5)


def ra_action(env: Environment, world: World, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Uniform draw over the raw action cube for every vehicle and the edge."""
    del world  # the draw ignores the state by design
    return rng.uniform(size=(env.n_vehicles, env.vehicle_action_dim)), rng.uniform(size=env.edge_action_dim)


def centralized_observation(env: Environment, world: World) -> np.ndarray:
    parts = [env.observe_vehicle(world, s) for s in range(env.n_vehicles)]
    parts.append(env.observe_edge(world))
    return np.concatenate(parts)


def centralized_action_dim(env: Environment) -> int:
    return env.n_vehicles * env.vehicle_action_dim + env.edge_action_dim


def split_joint_raw(env: Environment, raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    k = env.n_vehicles * env.vehicle_action_dim
    return raw[:k].reshape(env.n_vehicles, env.vehicle_action_dim), raw[k:]


class CentralizedAlgorithm(Algorithm):
    name = "centralized"
    uses_credit = False

    def __init__(self, env: Environment, cfg: TrainingConfig, rng: np.random.Generator):
        self.env = env
        self.cfg = cfg
        obs_dim = env.n_vehicles * env.vehicle_obs_dim + env.edge_obs_dim
        act_dim = centralized_action_dim(env)
        self.agent = Agent(obs_dim, obs_dim, act_dim, 0, cfg, rng, cfg.soft_rate_vehicle)
        self.buffer = ReplayBuffer(
            cfg.buffer_capacity,
            {
                "obs": (obs_dim,),
                "act": (act_dim,),
                "rew": (2,),
                "w": (2,),
                "next_obs": (obs_dim,),
                "next_w": (2,),
                "done": (),
            },
        )
        self.actor = self.agent.policy_target.copy()
        self.steps = 0

    def _fn(self, env, policy, noise, rng):
        def act(world):
            return split_joint_raw(env, act_vehicle(policy, centralized_observation(env, world), noise, rng))

        return act

    def actor_fn(self, env, actor_index, noise, rng):
        return self._fn(env, self.actor, noise, rng)

    def greedy_fn(self, env):
        return self._fn(env, self.agent.policy, 0.0, None)

    def store(self, world, vraws, eraw, res):
        env = self.env
        nxt = res.world
        dim = env.n_vehicles * env.vehicle_obs_dim + env.edge_obs_dim
        self.buffer.append(
            obs=centralized_observation(env, world),
            act=np.concatenate([np.asarray(vraws).ravel(), eraw]),
            rew=res.outcome.reward,
            w=world.weights,
            next_obs=np.zeros(dim) if res.done else centralized_observation(env, nxt),
            next_w=nxt.weights,
            done=float(res.done),
        )

    def learn(self, steps, rng):
        cfg = self.cfg
        losses = []
        empty = np.zeros((cfg.batch_size, 0))
        for _ in range(steps):
            if len(self.buffer) < max(cfg.warmup, cfg.batch_size):
                break
            b = self.buffer.sample(cfg.batch_size, rng)
            a_next = self.agent.act(b["next_obs"], target=True)
            q_next, _ = critic_forward(self.agent.critic_target, b["next_obs"], a_next, empty, b["next_w"], None)
            y = compute_target(b["rew"], b["w"], cfg.gamma, q_next, b["done"])
            losses.append(self.agent.critic_step(b["obs"], b["act"], empty, b["w"], y, None))
            self.agent.policy_step(b["obs"], b["obs"], empty, b["w"])
            self.steps += 1
            if self.steps % cfg.target_period == 0:
                self.agent.soft_update()
            if self.steps % cfg.actor_sync_period == 0:
                src = self.agent.policy_target if cfg.sync_from_targets else self.agent.policy
                self.actor = src.copy()
        return {
            "critic_loss_vehicle": float(np.mean(losses)) if losses else None,
            "critic_loss_edge": None,
            "learner_steps": self.steps,
            "buffer_size": len(self.buffer),
        }

    def checkpoint_arrays(self):
        return self.agent.to_arrays("central")

    def load_checkpoint_arrays(self, arrays):
        self.agent.load_arrays("central", arrays)
        self.actor = self.agent.policy_target.copy()


def run_baseline(mode: str, env: Environment, cfg: TrainingConfig, **kw) -> TrainResult:
    """Train (or, for ``random``, just roll out) a baseline with the shared training loop and exporter."""
    if mode not in MODES:
        raise ValueError(f"unknown baseline mode {mode!r}; expected one of {MODES}")
    if mode != "random":
        cfg = replace(cfg, dueling=False, fixed_weights=FIXED_WEIGHTS)
    else:
        cfg = replace(cfg, fixed_weights=cfg.fixed_weights or FIXED_WEIGHTS)
    return train(env, cfg, mode=mode, **kw)
