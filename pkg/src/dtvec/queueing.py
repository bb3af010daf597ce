"""Per-vehicle sensing and priority uploading queues.

Information sensed by a vehicle waits in a multi-class priority queue before it
is transmitted to the edge node. Larger priority ranks are served first. The
closed-form waiting time below is evaluated quasi-statically per slot; the
discrete-event simulator is an independent check on the queueing side.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class UnstableQueueError(ValueError):
    """The offered workload makes the queue non-stationary."""


@dataclass(frozen=True)
class UploadTimeModel:
    mean: float  # seconds
    variance: float  # seconds^2

    def __post_init__(self):
        if not self.mean > 0:
            raise ValueError("upload time mean must be > 0")
        if self.variance < 0:
            raise ValueError("upload time variance must be >= 0")


@dataclass(frozen=True)
class QueueEntry:
    info_id: int
    frequency: float  # Hz
    priority: int
    upload_time: UploadTimeModel

    @property
    def load(self) -> float:
        return self.frequency * self.upload_time.mean


def upload_time_model(size: float, mean_rate: float, cv: float = 0.3) -> UploadTimeModel:
    """Mean upload time ``size / rate`` and variance ``(cv * mean)**2``."""
    mean = size / mean_rate
    return UploadTimeModel(mean, (cv * mean) ** 2)


def arrival_moment(t: float, freq: float) -> float:
    """Latest sampling instant at or before ``t`` for a sensor running at ``freq``."""
    if freq <= 0:
        raise ValueError("frequency must be > 0")
    return math.floor(t * freq) / freq


def updating_moment(arrival: float, update_interval: float) -> float:
    """Latest update of the underlying status at or before ``arrival``."""
    if update_interval <= 0:
        raise ValueError("update interval must be > 0")
    return math.floor(arrival / update_interval) * update_interval


def total_workload(entries: Iterable[QueueEntry]) -> float:
    return sum(e.frequency * e.upload_time.mean for e in entries)


def _ahead(entry: QueueEntry, entries: Iterable[QueueEntry]) -> list[QueueEntry]:
    return [e for e in entries if e.priority > entry.priority]


def workload_ahead(entry: QueueEntry, entries: Iterable[QueueEntry]) -> float:
    return sum(e.frequency * e.upload_time.mean for e in _ahead(entry, entries))


def pk_queuing_time(entry: QueueEntry, entries: Iterable[QueueEntry]) -> float:
    """Queuing time of ``entry`` behind the higher-priority classes in ``entries``.

    ``q = (alpha + (lam*beta + sum_ahead lam*beta) / (2 (1 - rho_ahead - lam*alpha))) / (1 - rho_ahead) - alpha``
    """
    ahead = _ahead(entry, entries)
    rho_ahead = sum(e.frequency * e.upload_time.mean for e in ahead)
    lam, alpha, beta = entry.frequency, entry.upload_time.mean, entry.upload_time.variance
    own = lam * alpha
    if not (rho_ahead + own < 1.0):
        raise UnstableQueueError(f"info {entry.info_id}: rho_ahead + lambda*alpha = {rho_ahead + own:.4f} >= 1")
    spread = lam * beta + sum(e.frequency * e.upload_time.variance for e in ahead)
    q = (alpha + spread / (2.0 * (1.0 - rho_ahead - own))) / (1.0 - rho_ahead) - alpha
    return max(q, 0.0)


def cobham_waiting_time(entry: QueueEntry, entries: Sequence[QueueEntry]) -> float:
    """Exact mean wait of a non-preemptive M/G/1 priority class (Cobham's formula).

    Used to cross-check the discrete-event simulator; every class contributes
    residual service, higher classes (inclusive) contribute congestion.
    """
    residual = sum(e.frequency * (e.upload_time.variance + e.upload_time.mean**2) for e in entries) / 2.0
    sigma_hi = sum(e.load for e in entries if e.priority > entry.priority)
    sigma_incl = sigma_hi + entry.load
    if sigma_incl >= 1.0:
        raise UnstableQueueError(f"info {entry.info_id}: cumulative load {sigma_incl:.4f} >= 1")
    return residual / ((1.0 - sigma_hi) * (1.0 - sigma_incl))


def _two_point(mean: float, variance: float) -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of a non-negative two-point law with the given moments."""
    if variance == 0:
        return np.array([mean]), np.array([1.0])
    sd = math.sqrt(variance)
    if sd <= mean:
        return np.array([mean - sd, mean + sd]), np.array([0.5, 0.5])
    second = mean**2 + variance
    return np.array([0.0, second / mean]), np.array([variance / second, mean**2 / second])


def simulate_queue_oracle(entries: Sequence[QueueEntry], n_arrivals: int, seed: int) -> dict[int, float]:
    """Discrete-event non-preemptive priority M/G/1 queue; mean wait per info id.

    Arrivals are Poisson per class; service times follow a two-point law with the
    class's (mean, variance). The wait is the time from arrival to start of service.
    """
    if n_arrivals <= 0:
        raise ValueError("n_arrivals must be positive")
    entries = list(entries)
    if not entries:
        return {}
    if total_workload(entries) >= 1.0:
        raise UnstableQueueError(f"total workload {total_workload(entries):.4f} >= 1")
    prios = [e.priority for e in entries]
    if len(set(prios)) != len(prios):
        raise ValueError("priorities must be distinct")
    # rank 0 is served first
    order = sorted(range(len(entries)), key=lambda i: -entries[i].priority)
    rank_of = {cls: r for r, cls in enumerate(order)}

    rng = np.random.default_rng(seed)
    rates = np.array([e.frequency for e in entries])
    total = rates.sum()
    gaps = rng.exponential(1.0 / total, size=n_arrivals)
    arrivals = np.cumsum(gaps)
    classes = rng.choice(len(entries), size=n_arrivals, p=rates / total)
    service = np.empty(n_arrivals)
    for c, e in enumerate(entries):
        idx = np.flatnonzero(classes == c)
        support, probs = _two_point(e.upload_time.mean, e.upload_time.variance)
        service[idx] = rng.choice(support, size=len(idx), p=probs)

    arr = arrivals.tolist()
    svc = service.tolist()
    rank = [rank_of[c] for c in classes.tolist()]
    queues = [deque() for _ in entries]
    wait_sum = [0.0] * len(entries)
    count = [0] * len(entries)
    clock = 0.0
    nxt = 0
    served = 0
    n_cls = len(entries)
    while served < n_arrivals:
        if nxt < n_arrivals and not any(queues):
            if arr[nxt] > clock:
                clock = arr[nxt]
        while nxt < n_arrivals and arr[nxt] <= clock:
            queues[rank[nxt]].append(nxt)
            nxt += 1
        for r in range(n_cls):
            if queues[r]:
                j = queues[r].popleft()
                break
        wait_sum[r] += clock - arr[j]
        count[r] += 1
        clock += svc[j]
        served += 1
    return {entries[cls].info_id: (wait_sum[r] / count[r] if count[r] else float("nan")) for cls, r in rank_of.items()}
