"""Static world description: information, vehicles, the edge node and physical entities.

Trajectories are either read from a CSV file (``vehicle_id,time_s,x_m,y_m``) or
generated with a random-waypoint model. Vehicle positions per slot are linearly
interpolated between samples and clamped to the endpoints outside the sampled span.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TRAJECTORY_HEADER = ("vehicle_id", "time_s", "x_m", "y_m")


class ScenarioError(ValueError):
    """Raised when a scenario violates one of its invariants."""


class TrajectoryFormatError(ValueError):
    """Raised for malformed trajectory files; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class InfoSpec:
    id: int
    type_tag: int
    update_interval: float  # seconds
    size: float  # bits

    def __post_init__(self):
        if self.update_interval <= 0:
            raise ScenarioError(f"info {self.id}: update_interval must be > 0")
        if self.size <= 0:
            raise ScenarioError(f"info {self.id}: size must be > 0")


@dataclass(frozen=True)
class SensingCapability:
    info_id: int
    freq_min: float  # Hz
    freq_max: float  # Hz
    sensing_cost: float  # J per slot while sensing

    def __post_init__(self):
        if not 0 < self.freq_min <= self.freq_max:
            raise ScenarioError(f"capability for info {self.info_id}: need 0 < freq_min <= freq_max")
        if self.sensing_cost < 0:
            raise ScenarioError(f"capability for info {self.info_id}: negative sensing cost")


@dataclass(frozen=True, eq=False)
class VehicleSpec:
    id: int
    trajectory: np.ndarray  # (k, 3) rows of (time_s, x_m, y_m)
    capabilities: tuple[SensingCapability, ...]
    power_cap: float  # W

    def __post_init__(self):
        traj = np.asarray(self.trajectory, dtype=float)
        if traj.ndim != 2 or traj.shape[1] != 3 or len(traj) == 0:
            raise ScenarioError(f"vehicle {self.id}: trajectory must be a non-empty (k, 3) array")
        if np.any(np.diff(traj[:, 0]) <= 0):
            raise ScenarioError(f"vehicle {self.id}: trajectory times must be strictly increasing")
        if self.power_cap <= 0:
            raise ScenarioError(f"vehicle {self.id}: power_cap must be > 0")
        ids = [c.info_id for c in self.capabilities]
        if len(ids) != len(set(ids)):
            raise ScenarioError(f"vehicle {self.id}: more than one capability for the same info")
        traj.setflags(write=False)
        object.__setattr__(self, "trajectory", traj)
        object.__setattr__(self, "capabilities", tuple(self.capabilities))

    def capability(self, info_id: int) -> SensingCapability | None:
        for cap in self.capabilities:
            if cap.info_id == info_id:
                return cap
        return None

    def position(self, time: float) -> tuple[float, float]:
        """Linear interpolation, clamped to the first/last sample."""
        traj = self.trajectory
        x = float(np.interp(time, traj[:, 0], traj[:, 1]))
        y = float(np.interp(time, traj[:, 0], traj[:, 2]))
        return x, y


@dataclass(frozen=True)
class EdgeSpec:
    location: tuple[float, float]
    range: float  # m
    bandwidth: float  # Hz

    def __post_init__(self):
        if self.range <= 0:
            raise ScenarioError("edge range must be > 0")
        if self.bandwidth <= 0:
            raise ScenarioError("edge bandwidth must be > 0")


@dataclass(frozen=True)
class EntityAssociation:
    entity_id: int
    required_info: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "required_info", frozenset(self.required_info))
        if len(self.required_info) < 1:
            raise ScenarioError(f"entity {self.entity_id} requires no information")


@dataclass(frozen=True)
class Scenario:
    slot_count: int
    slot_duration: float
    infos: tuple[InfoSpec, ...]
    vehicles: tuple[VehicleSpec, ...]
    edge: EdgeSpec
    entities: tuple[EntityAssociation, ...]
    seed: int = 0
    area: tuple[float, float] = (1000.0, 1000.0)

    def __post_init__(self):
        for name in ("infos", "vehicles", "entities"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.slot_count < 1:
            raise ScenarioError("slot_count must be >= 1")
        if self.slot_duration <= 0:
            raise ScenarioError("slot_duration must be > 0")
        ids = [d.id for d in self.infos]
        if len(ids) != len(set(ids)):
            raise ScenarioError("info ids must be unique")
        known = set(ids)
        for ent in self.entities:
            missing = ent.required_info - known
            if missing:
                raise ScenarioError(f"entity {ent.entity_id} requires unknown info {sorted(missing)}")
        for veh in self.vehicles:
            for cap in veh.capabilities:
                if cap.info_id not in known:
                    raise ScenarioError(f"vehicle {veh.id} can sense unknown info {cap.info_id}")

    @cached_property
    def info_index(self) -> dict[int, int]:
        return {d.id: i for i, d in enumerate(self.infos)}

    @cached_property
    def positions(self) -> np.ndarray:
        """(T, S, 2) vehicle positions at each slot start."""
        out = np.zeros((self.slot_count, len(self.vehicles), 2))
        times = np.arange(self.slot_count) * self.slot_duration
        for j, veh in enumerate(self.vehicles):
            traj = veh.trajectory
            out[:, j, 0] = np.interp(times, traj[:, 0], traj[:, 1])
            out[:, j, 1] = np.interp(times, traj[:, 0], traj[:, 2])
        out.setflags(write=False)
        return out

    @cached_property
    def distances(self) -> np.ndarray:
        """(T, S) vehicle-to-edge distances."""
        edge = np.asarray(self.edge.location, dtype=float)
        gap = self.positions - edge
        d = np.hypot(gap[..., 0], gap[..., 1])
        d.setflags(write=False)
        return d

    def position(self, vehicle_index: int, t: int) -> tuple[float, float]:
        p = self.positions[t, vehicle_index]
        return float(p[0]), float(p[1])

    def distance_at(self, vehicle_index: int, slot: int) -> float:
        """Distance at any slot index; slots past the horizon use the clamped trajectory."""
        if 0 <= slot < self.slot_count:
            return float(self.distances[slot, vehicle_index])
        pos = self.vehicles[vehicle_index].position(slot * self.slot_duration)
        return distance(pos, self.edge.location)

    def in_range_mask(self, t: int) -> np.ndarray:
        return self.distances[t] <= self.edge.range

    def with_edge(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, edge=replace(self.edge, **changes))

    def with_entities(self, entities: Sequence[EntityAssociation]) -> "Scenario":
        from dataclasses import replace

        return replace(self, entities=tuple(entities))


def distance(l1: Sequence[float], l2: Sequence[float]) -> float:
    return math.hypot(l1[0] - l2[0], l1[1] - l2[1])


def vehicles_in_range(scenario: Scenario, t: int) -> set[int]:
    """Ids of vehicles within the edge's radio coverage at slot ``t``."""
    if not 0 <= t < scenario.slot_count:
        raise IndexError(f"slot {t} outside [0, {scenario.slot_count})")
    mask = scenario.in_range_mask(t)
    return {veh.id for veh, inside in zip(scenario.vehicles, mask) if inside}


def load_trajectories(path: str | Path, delimiter: str = ",") -> dict[int, np.ndarray]:
    """Read a ``vehicle_id,time_s,x_m,y_m`` CSV into per-vehicle (k, 3) arrays.

    Rows of a vehicle must appear with strictly increasing time; a violation is
    reported with the vehicle id and the line number of the offending row.
    """
    path = Path(path)
    rows: dict[int, list[tuple[float, float, float]]] = {}
    last_time: dict[int, tuple[float, int]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader, None)
        if header is None:
            raise TrajectoryFormatError(f"{path} is empty")
        if tuple(h.strip() for h in header) != TRAJECTORY_HEADER:
            raise TrajectoryFormatError(f"expected header {','.join(TRAJECTORY_HEADER)}, got {header}", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 4:
                raise TrajectoryFormatError(f"expected 4 fields, got {len(rec)}", line=lineno)
            try:
                vid = int(rec[0])
                t, x, y = (float(v) for v in rec[1:])
            except ValueError as exc:
                raise TrajectoryFormatError(str(exc), line=lineno) from None
            if not all(map(math.isfinite, (t, x, y))):
                raise TrajectoryFormatError("non-finite value", line=lineno)
            prev = last_time.get(vid)
            if prev is not None and t <= prev[0]:
                raise TrajectoryFormatError(
                    f"vehicle {vid}: time {t} does not increase after {prev[0]} (line {prev[1]})",
                    line=lineno,
                )
            last_time[vid] = (t, lineno)
            rows.setdefault(vid, []).append((t, x, y))
    if not rows:
        raise TrajectoryFormatError(f"{path} contains no trajectory rows")
    return {vid: np.asarray(pts, dtype=float) for vid, pts in sorted(rows.items())}


def write_trajectories(path: str | Path, trajectories: Mapping[int, np.ndarray]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_HEADER)
        for vid, traj in sorted(trajectories.items()):
            for t, x, y in traj:
                w.writerow([vid, repr(float(t)), repr(float(x)), repr(float(y))])


def generate_synthetic_trajectories(
    seed: int,
    n_vehicles: int,
    area: tuple[float, float] = (1000.0, 1000.0),
    duration: float = 300.0,
    speed_range: tuple[float, float] = (5.0, 15.0),
    sample_interval: float = 1.0,
) -> dict[int, np.ndarray]:
    """Random-waypoint paths sampled every ``sample_interval`` seconds."""
    if n_vehicles < 1:
        raise ValueError("n_vehicles must be >= 1")
    rng = np.random.default_rng(seed)
    width, height = area
    times = np.arange(0.0, duration + 1e-9, sample_interval)
    out = {}
    for vid in range(n_vehicles):
        pos = rng.uniform((0, 0), (width, height))
        target = rng.uniform((0, 0), (width, height))
        speed = rng.uniform(*speed_range)
        pts = np.empty((len(times), 3))
        pts[0] = (times[0], *pos)
        for k in range(1, len(times)):
            budget = speed * sample_interval
            while budget > 0:
                gap = target - pos
                dist = float(np.hypot(*gap))
                if dist <= budget:
                    pos = target
                    budget -= dist
                    target = rng.uniform((0, 0), (width, height))
                    speed = rng.uniform(*speed_range)
                    if speed <= 0:
                        break
                else:
                    pos = pos + gap * (budget / dist)
                    budget = 0.0
            pts[k] = (times[k], *np.clip(pos, (0, 0), (width, height)))
        out[vid] = pts
    return out


@dataclass
class DeskScenarioParams:
    """Knobs of the synthetic desk-scale scenario."""

    n_vehicles: int = 5
    n_infos: int = 10
    n_entities: int = 6
    required_per_entity: int = 5
    capabilities_per_vehicle: int = 6
    slot_count: int = 60
    slot_duration: float = 1.0
    area: tuple[float, float] = (1000.0, 1000.0)
    edge_range: float = 500.0
    edge_bandwidth: float = 2e6
    power_cap: float = 0.1
    speed_range: tuple[float, float] = (5.0, 15.0)
    size_range: tuple[float, float] = (2e5, 1e6)
    update_interval_range: tuple[float, float] = (1.0, 5.0)
    freq_min_range: tuple[float, float] = (0.1, 0.5)
    freq_max_range: tuple[float, float] = (1.0, 3.0)
    sensing_cost_range: tuple[float, float] = (0.05, 0.5)
    trajectory_csv: str | None = None
    seed: int = 0


def nested_requirements(n_infos: int, n_entities: int, required: int, seed: int) -> list[EntityAssociation]:
    """Entity requirements; for a fixed seed the sets grow by inclusion as ``required`` grows."""
    if not 1 <= required <= n_infos:
        raise ScenarioError(f"required_per_entity must be in [1, {n_infos}]")
    rng = np.random.default_rng([seed, 17])
    out = []
    for e in range(n_entities):
        order = rng.permutation(n_infos)
        out.append(EntityAssociation(e, frozenset(int(i) for i in order[:required])))
    return out


def build_desk_scenario(params: DeskScenarioParams | None = None) -> Scenario:
    p = params or DeskScenarioParams()
    rng = np.random.default_rng([p.seed, 3])
    infos = tuple(
        InfoSpec(
            id=i,
            type_tag=i,
            update_interval=float(rng.uniform(*p.update_interval_range)),
            size=float(rng.uniform(*p.size_range)),
        )
        for i in range(p.n_infos)
    )
    duration = p.slot_count * p.slot_duration
    if p.trajectory_csv:
        trajs = load_trajectories(p.trajectory_csv)
        if len(trajs) < p.n_vehicles:
            raise ScenarioError(f"{p.trajectory_csv} has {len(trajs)} vehicles, need {p.n_vehicles}")
        trajs = dict(list(trajs.items())[: p.n_vehicles])
    else:
        trajs = generate_synthetic_trajectories(p.seed, p.n_vehicles, p.area, duration, p.speed_range)
    vehicles = []
    for j, (vid, traj) in enumerate(trajs.items()):
        k = min(p.capabilities_per_vehicle, p.n_infos)
        sensed = sorted(int(i) for i in rng.choice(p.n_infos, size=k, replace=False))
        caps = []
        for i in sensed:
            fmin = float(rng.uniform(*p.freq_min_range))
            fmax = max(fmin, float(rng.uniform(*p.freq_max_range)))
            caps.append(SensingCapability(i, fmin, fmax, float(rng.uniform(*p.sensing_cost_range))))
        vehicles.append(VehicleSpec(int(vid), traj, tuple(caps), p.power_cap))
    edge = EdgeSpec((p.area[0] / 2, p.area[1] / 2), p.edge_range, p.edge_bandwidth)
    entities = nested_requirements(p.n_infos, p.n_entities, p.required_per_entity, p.seed)
    return Scenario(p.slot_count, p.slot_duration, infos, tuple(vehicles), edge, tuple(entities), p.seed, p.area)


def required_info_summary(entities: Iterable[EntityAssociation], n_infos: int, index: Mapping[int, int]) -> np.ndarray:
    """Fraction of entities requiring each information."""
    ents = list(entities)
    out = np.zeros(n_infos)
    for ent in ents:
        for d in ent.required_info:
            out[index[d]] += 1
    return out / max(len(ents), 1)
