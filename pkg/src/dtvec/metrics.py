"""Quality and cost of digital twins, their system aggregates and the evaluation metrics.

Raw per-twin quantities are timeliness (Θ), consistency (Ψ), redundancy (Ξ),
sensing cost (Φ) and transmission cost (Ω). They are min-max normalized against
running per-episode bounds before being combined into QDT/CDT/PDT.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

RAW_KEYS = ("theta", "psi", "xi", "phi", "omega")


class NoTwinsError(ValueError):
    """An average was requested over zero digital twins."""


class ZeroDenominatorError(ValueError):
    pass


@dataclass(frozen=True)
class DeliveredInfo:
    info_id: int
    vehicle_id: int
    arrival: float
    updating: float
    queuing: float
    duration: float
    energy: float
    sensing_cost: float


@dataclass(frozen=True)
class TwinSnapshot:
    """Information gathered for one twin in one slot.

    ``delivered`` holds copies received by the edge; ``dropped`` holds copies that
    were sensed (and possibly partly transmitted) but never arrived. Dropped copies
    only contribute to the sensing and transmission costs.
    """

    entity_id: int
    delivered: tuple[DeliveredInfo, ...]
    dropped: tuple[DeliveredInfo, ...] = ()

    @property
    def counted(self) -> bool:
        return len(self.delivered) > 0


@dataclass(frozen=True)
class MetricWeights:
    w1: float = 0.6
    w2: float = 0.4
    w3: float = 0.2
    w4: float = 0.4
    w5: float = 0.4

    def __post_init__(self):
        ws = (self.w1, self.w2, self.w3, self.w4, self.w5)
        if any(not 0.0 <= w <= 1.0 for w in ws):
            raise ValueError("metric weights must lie in [0, 1]")
        if not math.isclose(self.w1 + self.w2, 1.0, abs_tol=1e-9):
            raise ValueError("w1 + w2 must equal 1")
        if not math.isclose(self.w3 + self.w4 + self.w5, 1.0, abs_tol=1e-9):
            raise ValueError("w3 + w4 + w5 must equal 1")


@dataclass
class NormalizationState:
    """Running per-episode min/max of each raw metric, shared by all twins."""

    epsilon: float = 1e-3
    lo: dict = field(default_factory=dict)
    hi: dict = field(default_factory=dict)

    def update(self, key: str, value: float) -> None:
        if key in self.lo:
            if value < self.lo[key]:
                self.lo[key] = value
            if value > self.hi[key]:
                self.hi[key] = value
        else:
            self.lo[key] = value
            self.hi[key] = value

    def observe(self, raw: "RawTwinMetrics") -> None:
        for key in RAW_KEYS:
            self.update(key, getattr(raw, key))

    def normalize(self, key: str, value: float) -> float:
        """Min-max rescale clamped into [eps, 1-eps]; a zero range maps to the lower clamp."""
        lo = self.lo.get(key, value)
        hi = self.hi.get(key, value)
        span = hi - lo
        x = (value - lo) / span if span > 0 else 0.0
        return min(max(x, self.epsilon), 1.0 - self.epsilon)

    def copy(self) -> "NormalizationState":
        return NormalizationState(self.epsilon, dict(self.lo), dict(self.hi))


@dataclass(frozen=True)
class RawTwinMetrics:
    theta: float
    psi: float
    xi: float
    phi: float
    omega: float


@dataclass(frozen=True)
class TwinRecord:
    """Everything computed for one twin in one slot."""

    slot: int
    entity_id: int
    raw: RawTwinMetrics
    normalized: RawTwinMetrics
    qdt: float
    cdt: float
    pdt: float


def info_timeliness(entry: DeliveredInfo) -> float:
    return entry.arrival + entry.queuing + entry.duration - entry.updating


def twin_timeliness(snapshot: TwinSnapshot) -> float:
    """Sum over contributing vehicles of the stalest delivered information."""
    if not snapshot.delivered:
        raise NoTwinsError(f"twin {snapshot.entity_id} has no delivered information")
    worst: dict[int, float] = {}
    for e in snapshot.delivered:
        th = info_timeliness(e)
        if e.vehicle_id not in worst or th > worst[e.vehicle_id]:
            worst[e.vehicle_id] = th
    return sum(worst[v] for v in sorted(worst))


def twin_consistency(snapshot: TwinSnapshot) -> float:
    if not snapshot.delivered:
        raise NoTwinsError(f"twin {snapshot.entity_id} has no delivered information")
    ups = [e.updating for e in snapshot.delivered]
    return max(ups) - min(ups)


def twin_redundancy(snapshot: TwinSnapshot) -> int:
    copies: dict[int, int] = {}
    for e in snapshot.delivered:
        copies[e.info_id] = copies.get(e.info_id, 0) + 1
    return sum(n - 1 for n in copies.values())


def twin_sensing_cost(snapshot: TwinSnapshot) -> float:
    return sum(e.sensing_cost for e in snapshot.delivered) + sum(e.sensing_cost for e in snapshot.dropped)


def twin_transmission_cost(snapshot: TwinSnapshot) -> float:
    return sum(e.energy for e in snapshot.delivered) + sum(e.energy for e in snapshot.dropped)


def raw_metrics(snapshot: TwinSnapshot) -> RawTwinMetrics:
    return RawTwinMetrics(
        theta=twin_timeliness(snapshot),
        psi=twin_consistency(snapshot),
        xi=float(twin_redundancy(snapshot)),
        phi=twin_sensing_cost(snapshot),
        omega=twin_transmission_cost(snapshot),
    )


def normalize_raw(raw: RawTwinMetrics, norm: NormalizationState) -> RawTwinMetrics:
    return RawTwinMetrics(*(norm.normalize(k, getattr(raw, k)) for k in RAW_KEYS))


def quality_from_normalized(theta_hat: float, psi_hat: float, weights: MetricWeights) -> float:
    return weights.w1 * (1.0 - theta_hat) + weights.w2 * (1.0 - psi_hat)


def cost_from_normalized(xi_hat: float, phi_hat: float, omega_hat: float, weights: MetricWeights) -> float:
    return weights.w3 * xi_hat + weights.w4 * phi_hat + weights.w5 * omega_hat


def qdt(snapshot: TwinSnapshot, weights: MetricWeights, norm: NormalizationState) -> float:
    return quality_from_normalized(
        norm.normalize("theta", twin_timeliness(snapshot)), norm.normalize("psi", twin_consistency(snapshot)), weights
    )


def cdt(snapshot: TwinSnapshot, weights: MetricWeights, norm: NormalizationState) -> float:
    return cost_from_normalized(
        norm.normalize("xi", float(twin_redundancy(snapshot))),
        norm.normalize("phi", twin_sensing_cost(snapshot)),
        norm.normalize("omega", twin_transmission_cost(snapshot)),
        weights,
    )


def pdt(cdt_value: float) -> float:
    return 1.0 - cdt_value


def score_slot(
    slot: int, snapshots: Sequence[TwinSnapshot], weights: MetricWeights, norm: NormalizationState
) -> list[TwinRecord]:
    """Update ``norm`` with this slot's counted twins, then score each of them."""
    counted = [s for s in snapshots if s.counted]
    raws = [raw_metrics(s) for s in counted]
    for r in raws:
        norm.observe(r)
    out = []
    for snap, raw in zip(counted, raws):
        n = normalize_raw(raw, norm)
        q = quality_from_normalized(n.theta, n.psi, weights)
        c = cost_from_normalized(n.xi, n.phi, n.omega, weights)
        out.append(TwinRecord(slot, snap.entity_id, raw, n, q, c, pdt(c)))
    return out


def system_aggregates(records: Iterable[TwinRecord]) -> tuple[float, float, float]:
    """Mean QDT, CDT and PDT over all (slot, twin) pairs."""
    recs = list(records)
    if not recs:
        raise NoTwinsError("no digital twins were counted")
    n = len(recs)
    return (
        sum(r.qdt for r in recs) / n,
        sum(r.cdt for r in recs) / n,
        sum(r.pdt for r in recs) / n,
    )


def qpuc(qdt_values: Iterable[float], cdt_values: Iterable[float]) -> float:
    """Quality per unit cost: sum of QDT over sum of CDT."""
    num, den = sum(qdt_values), sum(cdt_values)
    if den <= 0:
        raise ZeroDenominatorError("sum of CDT is zero")
    return num / den


def ppuq(pdt_values: Iterable[float], qdt_values: Iterable[float]) -> float:
    """Profit per unit quality: sum of PDT over sum of QDT."""
    num, den = sum(pdt_values), sum(qdt_values)
    if den <= 0:
        raise ZeroDenominatorError("sum of QDT is zero")
    return num / den


@dataclass(frozen=True)
class AuxiliaryMetrics:
    at: float
    ar: float
    asc: float
    atc: float


def auxiliary_metrics(records: Iterable[TwinRecord]) -> AuxiliaryMetrics:
    """Per-twin means of raw timeliness, redundancy, sensing cost and transmission cost."""
    recs = list(records)
    if not recs:
        raise NoTwinsError("no digital twins were counted")
    n = len(recs)
    return AuxiliaryMetrics(
        at=sum(r.raw.theta for r in recs) / n,
        ar=sum(r.raw.xi for r in recs) / n,
        asc=sum(r.raw.phi for r in recs) / n,
        atc=sum(r.raw.omega for r in recs) / n,
    )


@dataclass(frozen=True)
class EpisodeSummary:
    quality: float
    cost: float
    profit: float
    qpuc: float
    ppuq: float
    at: float
    ar: float
    asc: float
    atc: float
    twins: int

    FIELDS = ("quality", "cost", "profit", "qpuc", "ppuq", "at", "ar", "asc", "atc", "twins")


def summarize(records: Iterable[TwinRecord]) -> EpisodeSummary:
    """Aggregates for a set of twin records; NaN everywhere when no twin was counted."""
    recs = list(records)
    if not recs:
        nan = float("nan")
        return EpisodeSummary(nan, nan, nan, nan, nan, nan, nan, nan, nan, 0)
    q, c, p = system_aggregates(recs)
    aux = auxiliary_metrics(recs)
    qd = [r.qdt for r in recs]
    return EpisodeSummary(
        quality=q,
        cost=c,
        profit=p,
        qpuc=qpuc(qd, [r.cdt for r in recs]),
        ppuq=ppuq([r.pdt for r in recs], qd),
        at=aux.at,
        ar=aux.ar,
        asc=aux.asc,
        atc=aux.atc,
        twins=len(recs),
    )


HISTORY_COLUMNS = (
    "episode",
    "slot",
    "twin",
    *RAW_KEYS,
    *(f"{k}_hat" for k in RAW_KEYS),
    "qdt",
    "cdt",
    "pdt",
)


def history_rows(episode: int, records: Iterable[TwinRecord]) -> list[list]:
    rows = []
    for r in records:
        rows.append(
            [episode, r.slot, r.entity_id]
            + [getattr(r.raw, k) for k in RAW_KEYS]
            + [getattr(r.normalized, k) for k in RAW_KEYS]
            + [r.qdt, r.cdt, r.pdt]
        )
    return rows


def write_metric_history(path: str | Path, rows: Iterable[Sequence]) -> None:
    """One CSV row per (episode, slot, twin) with raw and normalized components."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def write_summary(path: str | Path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def summary_dict(s: EpisodeSummary) -> dict:
    d = asdict(s)
    return d
