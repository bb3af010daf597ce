"""Discrete-time multi-agent environment for cooperative sensing and V2I uploading.

Vehicles choose what to sense, at which frequency and priority, and with which
transmission power; the edge node splits its bandwidth among in-range vehicles.
A slot is evaluated quasi-statically: every sensed item gets an arrival and
updating moment, a queuing time from the priority-queue model and a transfer
time from the channel model. Delivered items feed the twins' quality, sensed
items (delivered or not) feed their cost.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import channel as ch
from .metrics import (
    DeliveredInfo,
    MetricWeights,
    NormalizationState,
    TwinRecord,
    TwinSnapshot,
    score_slot,
)
from .queueing import QueueEntry, pk_queuing_time, upload_time_model, arrival_moment, updating_moment
from .scenario import Scenario, VehicleSpec, required_info_summary

AGE_SCALE = 10.0  # seconds; cached-info ages are divided by this and clipped to 1
MIN_DISTANCE = 1.0  # metres; keeps the path-loss term finite at the edge location


@dataclass(frozen=True)
class EnvConfig:
    upload_cv: float = 0.3
    stability_margin: float = 0.95
    edge_random_candidates: int = 8
    transfer_horizon: int = 10  # slots an upload may spill over the episode end
    norm_epsilon: float = 1e-3


@dataclass(frozen=True)
class VehicleAction:
    index: int
    sensed: tuple[int, ...] = ()  # info ids
    frequencies: tuple[float, ...] = ()
    priorities: tuple[int, ...] = ()  # larger rank is served first
    power: float = 0.0
    uploads: bool = False

    @property
    def is_null(self) -> bool:
        return not self.sensed


@dataclass(frozen=True)
class EdgeAction:
    bandwidth: tuple[float, ...]  # per vehicle index, 0 for out-of-range vehicles


@dataclass(frozen=True)
class JointAction:
    vehicles: tuple[VehicleAction, ...]
    edge: EdgeAction


@dataclass
class World:
    t: int
    weights: np.ndarray
    cache: np.ndarray  # newest cached updating moment per info, NaN when absent
    norm: NormalizationState
    fading: np.ndarray  # (T, S) gains drawn once per episode
    seed: int


@dataclass
class SlotOutcome:
    snapshots: list[TwinSnapshot]
    records: list[TwinRecord]
    reward: np.ndarray  # (quality, profit)
    norm: NormalizationState
    delivered: list[DeliveredInfo]
    dropped: list[DeliveredInfo]


@dataclass
class StepResult:
    world: "World"
    outcome: SlotOutcome
    joint: JointAction
    done: bool
    vehicle_rewards: np.ndarray | None = None  # (S, 2) difference rewards
    edge_reward: np.ndarray | None = None  # (2,)
    trace: list[dict] = field(default_factory=list)


def sample_weight_vector(rng: np.random.Generator) -> np.ndarray:
    w1 = rng.uniform(0.0, 1.0)
    return np.array([w1, 1.0 - w1])


def decode_edge_action(raw: Sequence[float], in_range: Sequence[bool], bandwidth: float) -> EdgeAction:
    """Proportional split of ``bandwidth`` among in-range vehicles; uniform when all shares are zero."""
    raw = np.clip(np.asarray(raw, dtype=float), 0.0, None)
    mask = np.asarray(in_range, dtype=bool)
    out = np.zeros(len(mask))
    n = int(mask.sum())
    if n == 0:
        return EdgeAction(tuple(out.tolist()))
    total = raw[mask].sum()
    if total > 0:
        out[mask] = raw[mask] / total * bandwidth
    else:
        out[mask] = bandwidth / n
    return EdgeAction(tuple(out.tolist()))


def vehicle_action_dim(n_infos: int) -> int:
    return 3 * n_infos + 1


def decode_vehicle_raw(
    raw: Sequence[float],
    index: int,
    vehicle: VehicleSpec,
    scenario: Scenario,
    in_range: bool,
    min_power: float,
) -> VehicleAction:
    """Map a raw vector in [0,1]^(3n+1) to sensing decisions, frequencies, priorities and power.

    Layout per information (scenario order): gate, frequency knob, priority score;
    the last entry is the power knob. Frequencies are not yet repaired for queue
    stability (that needs the bandwidth, see :meth:`Environment.repair`).
    """
    raw = np.clip(np.asarray(raw, dtype=float), 0.0, 1.0)
    n = len(scenario.infos)
    if raw.shape != (3 * n + 1,):
        raise ValueError(f"vehicle raw action must have length {3 * n + 1}, got {raw.shape}")
    if not in_range:
        return VehicleAction(index)
    picked: dict[int, tuple[float, int]] = {}  # type_tag -> (gate, info position)
    for i, info in enumerate(scenario.infos):
        gate = raw[3 * i]
        if gate < 0.5 or vehicle.capability(info.id) is None:
            continue
        best = picked.get(info.type_tag)
        if best is None or gate > best[0]:
            picked[info.type_tag] = (gate, i)
    chosen = sorted(i for _, i in picked.values())
    if not chosen:
        return VehicleAction(index)
    ids, freqs, scores = [], [], []
    for i in chosen:
        info = scenario.infos[i]
        cap = vehicle.capability(info.id)
        ids.append(info.id)
        freqs.append(cap.freq_min + raw[3 * i + 1] * (cap.freq_max - cap.freq_min))
        scores.append(raw[3 * i + 2])
    order = sorted(range(len(ids)), key=lambda k: (-scores[k], ids[k]))
    ranks = [0] * len(ids)
    for pos, k in enumerate(order):
        ranks[k] = len(ids) - pos
    power = float(raw[-1]) * vehicle.power_cap
    uploads = power > 0 and power >= min_power
    return VehicleAction(index, tuple(ids), tuple(float(f) for f in freqs), tuple(ranks), power, uploads)


class Environment:
    def __init__(
        self,
        scenario: Scenario,
        channel: ch.ChannelParams | None = None,
        weights: MetricWeights | None = None,
        config: EnvConfig | None = None,
    ):
        self.scenario = scenario
        self.channel = channel or ch.ChannelParams()
        self.metric_weights = weights or MetricWeights()
        self.config = config or EnvConfig()
        sc = scenario
        self.n_vehicles = len(sc.vehicles)
        self.n_infos = len(sc.infos)
        self.T = sc.slot_count
        self._info_by_id = {d.id: d for d in sc.infos}
        h = self.config.transfer_horizon
        ext = np.empty((self.T + h, self.n_vehicles))
        ext[: self.T] = sc.distances
        for j in range(self.n_vehicles):
            for k in range(self.T, self.T + h):
                ext[k, j] = sc.distance_at(j, k)
        self._dist = np.maximum(ext, MIN_DISTANCE)
        self._in_range = ext <= sc.edge.range
        self._min_power = np.array(
            [[ch.min_power_for_reliability(d, self.channel) for d in row] for row in self._dist[: self.T]]
        )
        caps = np.zeros((self.n_vehicles, self.n_infos))
        costs = np.zeros((self.n_vehicles, self.n_infos))
        for j, veh in enumerate(sc.vehicles):
            for cap in veh.capabilities:
                caps[j, sc.info_index[cap.info_id]] = 1.0
                costs[j, sc.info_index[cap.info_id]] = cap.sensing_cost
        self._caps = caps
        self._costs = costs / max(costs.max(), 1e-12)
        self._required = required_info_summary(sc.entities, self.n_infos, sc.info_index)

    # ------------------------------------------------------------------ setup

    @property
    def vehicle_action_dim(self) -> int:
        return vehicle_action_dim(self.n_infos)

    @property
    def edge_action_dim(self) -> int:
        return self.n_vehicles

    @property
    def vehicle_obs_dim(self) -> int:
        return 8 + 5 * self.n_infos

    @property
    def edge_obs_dim(self) -> int:
        return 1 + 2 * self.n_vehicles + self.n_vehicles * self.n_infos + 3 * self.n_infos + 2

    def reset(self, seed: int, weights: Sequence[float]) -> World:
        rng = np.random.default_rng([seed, 1])
        fading = ch.sample_fading(rng, (self.T, self.n_vehicles), self.channel)
        return World(
            t=0,
            weights=np.asarray(weights, dtype=float).copy(),
            cache=np.full(self.n_infos, np.nan),
            norm=NormalizationState(self.config.norm_epsilon),
            fading=fading,
            seed=seed,
        )

    def in_range(self, t: int) -> np.ndarray:
        return self._in_range[t]

    # ------------------------------------------------------------ observation

    def _cache_block(self, world: World) -> np.ndarray:
        now = world.t * self.scenario.slot_duration
        present = ~np.isnan(world.cache)
        age = np.ones(self.n_infos)
        age[present] = np.minimum((now - world.cache[present]) / AGE_SCALE, 1.0)
        return np.concatenate([present.astype(float), age])

    def observe_vehicle(self, world: World, s: int) -> np.ndarray:
        sc = self.scenario
        t = world.t
        x, y = sc.positions[t, s]
        head = [
            t / self.T,
            s / max(self.n_vehicles - 1, 1),
            x / sc.area[0],
            y / sc.area[1],
            float(self._in_range[t, s]),
            min(self._dist[t, s] / sc.edge.range, 2.0),
        ]
        return np.concatenate(
            [head, self._caps[s], self._costs[s], self._cache_block(world), self._required, world.weights]
        )

    def observe_edge(self, world: World) -> np.ndarray:
        sc = self.scenario
        t = world.t
        mask = self._in_range[t].astype(float)
        dist = np.where(mask > 0, self._dist[t] / sc.edge.range, 0.0)
        return np.concatenate(
            [[t / self.T], dist, mask, self._caps.ravel(), self._cache_block(world), self._required, world.weights]
        )

    # ---------------------------------------------------------------- actions

    def decode_vehicle_action(self, world: World, s: int, raw: Sequence[float]) -> VehicleAction:
        t = world.t
        return decode_vehicle_raw(
            raw, s, self.scenario.vehicles[s], self.scenario, bool(self._in_range[t, s]), self._min_power[t, s]
        )

    def decode_edge_action(self, world: World, raw: Sequence[float]) -> EdgeAction:
        return decode_edge_action(raw, self._in_range[world.t], self.scenario.edge.bandwidth)

    def mean_rate(self, world: World, action: VehicleAction, bandwidth: float) -> float:
        d = self._dist[world.t, action.index]
        return ch.shannon_rate(bandwidth, ch.snr(d, action.power, self.channel.fading_mean, self.channel))

    def upload_models(self, world: World, action: VehicleAction, bandwidth: float):
        zbar = self.mean_rate(world, action, bandwidth)
        return [upload_time_model(self._info_by_id[d].size, zbar, self.config.upload_cv) for d in action.sensed]

    def repair(self, world: World, action: VehicleAction, bandwidth: float) -> VehicleAction:
        """Scale frequencies down until the vehicle's queue workload is below the stability margin.

        Frequencies never go below their sensing floor; if the floor alone is
        too heavy, the lowest-priority item is dropped and the repair restarts.
        """
        if action.is_null or not action.uploads or bandwidth <= 0:
            return action
        margin = self.config.stability_margin
        veh = self.scenario.vehicles[action.index]
        models = self.upload_models(world, action, bandwidth)
        keep = list(range(len(action.sensed)))
        while keep:
            freqs = [action.frequencies[k] for k in keep]
            alphas = [models[k].mean for k in keep]
            rho = sum(f * a for f, a in zip(freqs, alphas))
            if rho >= margin:
                scale = margin / rho
                floors = [veh.capability(action.sensed[k]).freq_min for k in keep]
                freqs = [max(f * scale, lo) for f, lo in zip(freqs, floors)]
                rho = sum(f * a for f, a in zip(freqs, alphas))
            if rho < 1.0:
                ranks = [action.priorities[k] for k in keep]
                # re-rank densely so that dropped items leave no gaps
                order = sorted(range(len(keep)), key=lambda i: -ranks[i])
                dense = [0] * len(keep)
                for pos, i in enumerate(order):
                    dense[i] = len(keep) - pos
                if len(keep) == len(action.sensed):
                    dense = ranks
                return replace(
                    action,
                    sensed=tuple(action.sensed[k] for k in keep),
                    frequencies=tuple(freqs),
                    priorities=tuple(dense),
                )
            lowest = min(keep, key=lambda k: action.priorities[k])
            keep.remove(lowest)
        return VehicleAction(action.index)

    def assemble(self, world: World, vehicle_actions: Sequence[VehicleAction], edge: EdgeAction) -> JointAction:
        repaired = tuple(self.repair(world, va, edge.bandwidth[va.index]) for va in vehicle_actions)
        return JointAction(repaired, edge)

    def decode_joint_action(self, world: World, vehicle_raws: Sequence[Sequence[float]], edge_raw: Sequence[float]):
        """Returns (joint action after repair, unrepaired vehicle actions)."""
        vas = tuple(self.decode_vehicle_action(world, s, r) for s, r in enumerate(vehicle_raws))
        edge = self.decode_edge_action(world, edge_raw)
        return self.assemble(world, vas, edge), vas

    # ------------------------------------------------------------- evaluation

    def _vehicle_items(self, world: World, va: VehicleAction, bandwidth: float):
        """Delivered and dropped items of one vehicle in the current slot."""
        sc = self.scenario
        t = world.t
        dt = sc.slot_duration
        now = t * dt
        veh = sc.vehicles[va.index]
        delivered, dropped = [], []
        if va.is_null:
            return delivered, dropped
        active = va.uploads and bandwidth > 0
        if active:
            models = self.upload_models(world, va, bandwidth)
            entries = [
                QueueEntry(d, f, p, m) for d, f, p, m in zip(va.sensed, va.frequencies, va.priorities, models)
            ]
            # rate profile from slot t until the vehicle leaves coverage
            cover = self._in_range[t:, va.index]
            stop = int(np.argmin(cover)) if not cover.all() else len(cover)
            dist = self._dist[t : t + stop, va.index]
            ch_ = self.channel
            gain = world.fading[t, va.index]
            snrs = gain * ch_.antenna_const * dist ** (-ch_.pathloss_exp) * va.power / ch_.noise_power
            rates = (bandwidth * np.log2(1.0 + snrs)).tolist()
        for k, d in enumerate(va.sensed):
            info = self._info_by_id[d]
            a = arrival_moment(now, va.frequencies[k])
            u = updating_moment(a, info.update_interval)
            phi = veh.capability(d).sensing_cost
            if not active:
                dropped.append(DeliveredInfo(d, veh.id, a, u, 0.0, 0.0, 0.0, phi))
                continue
            q = pk_queuing_time(entries[k], entries)
            g = ch.transmission_duration(info.size, rates, q, dt)
            if g is None:
                sent = max(0.0, len(rates) * dt - q)
                dropped.append(DeliveredInfo(d, veh.id, a, u, q, 0.0, ch.transmission_energy(va.power, sent), phi))
            else:
                delivered.append(DeliveredInfo(d, veh.id, a, u, q, g, ch.transmission_energy(va.power, g), phi))
        return delivered, dropped

    def evaluate(self, world: World, joint: JointAction) -> SlotOutcome:
        """Score one slot for a (repaired) joint action without advancing the world."""
        delivered, dropped = [], []
        for va in joint.vehicles:
            dl, dr = self._vehicle_items(world, va, joint.edge.bandwidth[va.index])
            delivered.extend(dl)
            dropped.extend(dr)
        snapshots = []
        for ent in self.scenario.entities:
            req = ent.required_info
            snapshots.append(
                TwinSnapshot(
                    ent.entity_id,
                    tuple(e for e in delivered if e.info_id in req),
                    tuple(e for e in dropped if e.info_id in req),
                )
            )
        norm = world.norm.copy()
        records = score_slot(world.t, snapshots, self.metric_weights, norm)
        if records:
            reward = np.array(
                [sum(r.qdt for r in records) / len(records), sum(r.pdt for r in records) / len(records)]
            )
        else:
            reward = np.zeros(2)
        return SlotOutcome(snapshots, records, reward, norm, delivered, dropped)

    def advance(self, world: World, outcome: SlotOutcome) -> World:
        cache = world.cache.copy()
        for e in outcome.delivered:
            i = self.scenario.info_index[e.info_id]
            if np.isnan(cache[i]) or e.updating > cache[i]:
                cache[i] = e.updating
        return World(world.t + 1, world.weights, cache, outcome.norm, world.fading, world.seed)

    def step(self, world: World, joint: JointAction) -> tuple[World, SlotOutcome]:
        outcome = self.evaluate(world, joint)
        return self.advance(world, outcome), outcome

    # ----------------------------------------------------------- credit

    def difference_reward(
        self, world: World, joint: JointAction, s: int, full_reward: np.ndarray | None = None
    ) -> np.ndarray:
        """System reward minus the reward with vehicle ``s`` replaced by the null action."""
        if full_reward is None:
            full_reward = self.evaluate(world, joint).reward
        if joint.vehicles[s].is_null:
            return full_reward - full_reward
        vehicles = list(joint.vehicles)
        vehicles[s] = VehicleAction(s)
        without = self.evaluate(world, JointAction(tuple(vehicles), joint.edge)).reward
        return full_reward - without

    def edge_candidates(self, world: World, vehicle_actions: Sequence[VehicleAction], actual: EdgeAction):
        mask = self._in_range[world.t]
        b = self.scenario.edge.bandwidth
        cands = [actual, decode_edge_action(np.ones(self.n_vehicles), mask, b)]
        sizes = np.array([len(va.sensed) for va in vehicle_actions], dtype=float)
        cands.append(decode_edge_action(sizes, mask, b))
        rng = np.random.default_rng([world.seed, world.t, 7])
        for _ in range(self.config.edge_random_candidates):
            cands.append(decode_edge_action(rng.uniform(size=self.n_vehicles), mask, b))
        return cands

    def edge_normalized_reward(
        self,
        world: World,
        vehicle_actions: Sequence[VehicleAction],
        edge: EdgeAction,
        actual_reward: np.ndarray | None = None,
    ) -> np.ndarray:
        """Min-max position of the actual edge reward among alternative allocations."""
        rewards = []
        for k, cand in enumerate(self.edge_candidates(world, vehicle_actions, edge)):
            if k == 0 and actual_reward is not None:
                rewards.append(actual_reward)
                continue
            rewards.append(self.evaluate(world, self.assemble(world, vehicle_actions, cand)).reward)
        rewards = np.array(rewards)
        lo, hi = rewards.min(axis=0), rewards.max(axis=0)
        span = hi - lo
        out = np.ones(2)
        nz = span > 0
        out[nz] = (rewards[0][nz] - lo[nz]) / span[nz]
        return out

    def transition(
        self,
        world: World,
        vehicle_raws: Sequence[Sequence[float]],
        edge_raw: Sequence[float],
        credit: bool = True,
    ) -> StepResult:
        """Decode, step, and (optionally) assign difference and edge rewards."""
        joint, unrepaired = self.decode_joint_action(world, vehicle_raws, edge_raw)
        outcome = self.evaluate(world, joint)
        vr = er = None
        if credit:
            vr = np.stack([self.difference_reward(world, joint, s, outcome.reward) for s in range(self.n_vehicles)])
            er = self.edge_normalized_reward(world, unrepaired, joint.edge, outcome.reward)
        nxt = self.advance(world, outcome)
        return StepResult(nxt, outcome, joint, nxt.t >= self.T, vr, er)

    # ---------------------------------------------------------------- checks

    def validate(self, world: World, joint: JointAction) -> list[str]:
        """Constraint violations of a decoded joint action (empty when feasible)."""
        sc = self.scenario
        problems = []
        b = np.asarray(joint.edge.bandwidth)
        if np.any(b < 0) or np.any(b > sc.edge.bandwidth * (1 + 1e-12)):
            problems.append("per-vehicle bandwidth outside [0, b_e]")
        if b.sum() > sc.edge.bandwidth * (1 + 1e-12):
            problems.append(f"total bandwidth {b.sum()} exceeds {sc.edge.bandwidth}")
        for va in joint.vehicles:
            veh = sc.vehicles[va.index]
            tags = [self._info_by_id[d].type_tag for d in va.sensed]
            if len(set(tags)) != len(tags):
                problems.append(f"vehicle {va.index}: duplicate information types")
            if len(set(va.priorities)) != len(va.priorities):
                problems.append(f"vehicle {va.index}: priorities not distinct")
            if not 0 <= va.power <= veh.power_cap:
                problems.append(f"vehicle {va.index}: power {va.power} outside [0, {veh.power_cap}]")
            if va.sensed and not self._in_range[world.t, va.index]:
                problems.append(f"vehicle {va.index}: senses while out of coverage")
            for d, f in zip(va.sensed, va.frequencies):
                cap = veh.capability(d)
                if cap is None:
                    problems.append(f"vehicle {va.index}: cannot sense info {d}")
                elif not cap.freq_min - 1e-12 <= f <= cap.freq_max + 1e-12:
                    problems.append(f"vehicle {va.index}: frequency {f} of info {d} outside its range")
            if va.uploads:
                if va.power < self._min_power[world.t, va.index]:
                    problems.append(f"vehicle {va.index}: uploads below reliability power")
                if va.sensed and b[va.index] > 0:
                    models = self.upload_models(world, va, b[va.index])
                    rho = sum(f * m.mean for f, m in zip(va.frequencies, models))
                    if not rho < 1.0:
                        problems.append(f"vehicle {va.index}: workload {rho} >= 1")
        return problems

    def trace_rows(self, world: World, joint: JointAction, outcome: SlotOutcome) -> list[dict]:
        rows = []
        got = {(e.vehicle_id, e.info_id) for e in outcome.delivered}
        for va in joint.vehicles:
            vid = self.scenario.vehicles[va.index].id
            rows.append(
                {
                    "slot": world.t,
                    "vehicle": vid,
                    "sensed": " ".join(str(d) for d in va.sensed),
                    "frequencies": " ".join(f"{f:.6g}" for f in va.frequencies),
                    "priorities": " ".join(str(p) for p in va.priorities),
                    "power": va.power,
                    "bandwidth": joint.edge.bandwidth[va.index],
                    "uploads": int(va.uploads),
                    "delivered": " ".join(str(d) for d in va.sensed if (vid, d) in got),
                    "dropped": " ".join(str(d) for d in va.sensed if (vid, d) not in got),
                }
            )
        return rows


TRACE_COLUMNS = (
    "slot",
    "vehicle",
    "sensed",
    "frequencies",
    "priorities",
    "power",
    "bandwidth",
    "uploads",
    "delivered",
    "dropped",
)


def write_trace(path: str | Path, rows: Sequence[dict]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS)
        w.writeheader()
        w.writerows(rows)
