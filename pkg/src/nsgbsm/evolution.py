"""Space-time birth-death process of clusters.

Clusters are born and die along the time axis and along both array axes.
Along an array the process is a nearest-neighbour chain: walking from
element ``p`` to ``p + 1`` a cluster survives with the one-spacing survival
probability, and new clusters appear with Poisson counts so that the mean
number of clusters seen by any element stays at ``lambda_g / lambda_r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .geometry import ArrayGeometry


@dataclass(frozen=True)
class EvolutionParams:
    """Generation/recombination rates (per meter) and correlation factors (meters)."""

    lambda_g: float = 81.56
    lambda_r: float = 6.79
    dc_array: float = 10.0
    dc_time: float = 30.0

    def __post_init__(self):
        for name in ("lambda_g", "lambda_r", "dc_array", "dc_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @property
    def mean_cluster_count(self) -> float:
        return self.lambda_g / self.lambda_r


@dataclass(frozen=True)
class SideState:
    """Motion of one link end relative to its clusters, plus its array tilt."""

    speed: float = 0.0
    heading: float = 0.0
    tilt_azimuth: float = 0.0
    tilt_elevation: float = 0.0


def _normalized_separation(dt, delta, speed, heading, tilt_az, tilt_el, params):
    e1 = np.asarray(delta, dtype=float) * math.cos(tilt_el) / params.dc_array
    e2 = speed * np.asarray(dt, dtype=float) / params.dc_time
    sq = e1 ** 2 + e2 ** 2 - 2.0 * e1 * e2 * math.cos(heading - tilt_az)
    return np.sqrt(np.maximum(sq, 0.0))


def survival_prob_side(dt, delta, speed, heading, tilt_az, tilt_el,
                       params: EvolutionParams):
    """Probability that a cluster seen at one end survives a time lag and array shift."""
    if np.any(np.asarray(dt) < 0) or np.any(np.asarray(delta) < 0):
        raise ValueError("time lag and element separation must be non-negative")
    p = np.exp(-params.lambda_r * _normalized_separation(dt, delta, speed, heading,
                                                         tilt_az, tilt_el, params))
    return float(p) if np.ndim(p) == 0 else p


def _side(dt, delta, state: SideState, params):
    return survival_prob_side(dt, delta, state.speed, state.heading, state.tilt_azimuth,
                              state.tilt_elevation, params)


def joint_survival(dt, delta_p, delta_q, tx_state: SideState, rx_state: SideState,
                   params: EvolutionParams):
    """Survival probability for a link: product of the Tx- and Rx-side probabilities."""
    return _side(dt, delta_p, tx_state, params) * _side(dt, delta_q, rx_state, params)


def expected_new_clusters(dt, delta_p, delta_q, tx_state: SideState, rx_state: SideState,
                          params: EvolutionParams):
    """Mean number of clusters born over the given lags."""
    sep = (_normalized_separation(dt, delta_p, tx_state.speed, tx_state.heading,
                                  tx_state.tilt_azimuth, tx_state.tilt_elevation, params)
           + _normalized_separation(dt, delta_q, rx_state.speed, rx_state.heading,
                                    rx_state.tilt_azimuth, rx_state.tilt_elevation, params))
    # -expm1 keeps the lambda_r -> 0 limit finite.
    return params.mean_cluster_count * -np.expm1(-params.lambda_r * sep)


def sweep_array(element_count: int, spacing: float, tilt_elevation: float,
                params: EvolutionParams, rng: np.random.Generator,
                initial: Optional[int] = None, intensity: float = 1.0):
    """Run the birth-death chain along an array.

    Returns a list of ``(start, stop)`` element intervals (0-based, stop
    exclusive), one per cluster. ``intensity`` thins the process: the mean
    number of clusters per element is ``intensity * lambda_g / lambda_r``.
    """
    mean = intensity * params.mean_cluster_count
    n0 = int(rng.poisson(mean)) if initial is None else int(initial)
    starts = [0] * n0
    intervals = []
    alive = list(range(n0))
    if element_count > 1:
        step_sep = spacing * math.cos(tilt_elevation) / params.dc_array
        survive = math.exp(-params.lambda_r * step_sep)
        birth_mean = intensity * params.mean_cluster_count * -math.expm1(
            -params.lambda_r * step_sep)
        for k in range(1, element_count):
            keep = rng.random(len(alive)) < survive
            still = []
            for idx, ok in zip(alive, keep):
                if ok:
                    still.append(idx)
                else:
                    intervals.append((starts[idx], k))
            for _ in range(int(rng.poisson(birth_mean))):
                starts.append(k)
                still.append(len(starts) - 1)
            alive = still
    intervals.extend((starts[idx], element_count) for idx in alive)
    intervals.sort()
    return intervals


def grow_interval(element_count: int, spacing: float, tilt_elevation: float,
                  params: EvolutionParams, rng: np.random.Generator):
    """Visibility interval grown from a uniformly drawn element in both directions."""
    start = int(rng.integers(element_count))
    if element_count == 1:
        return 0, 1
    survive = math.exp(-params.lambda_r * spacing * math.cos(tilt_elevation) / params.dc_array)
    lo = start
    while lo > 0 and rng.random() < survive:
        lo -= 1
    hi = start + 1
    while hi < element_count and rng.random() < survive:
        hi += 1
    return lo, hi


def _mask(n, interval):
    m = np.zeros(n, dtype=bool)
    m[interval[0]:interval[1]] = True
    return m


@dataclass
class ClusterRecord:
    id: int
    birth_time: float
    tx_mask: np.ndarray
    rx_mask: np.ndarray
    alive: bool = True
    death_time: float = math.inf
    payload: Any = None

    def visible(self, q: int, p: int) -> bool:
        """Whether the cluster feeds link (q, p) (0-based element indices)."""
        return bool(self.alive and self.tx_mask[p] and self.rx_mask[q])

    def alive_at(self, t: float) -> bool:
        return self.birth_time <= t < self.death_time


Spawner = Callable[[int, float, np.ndarray, np.ndarray, np.random.Generator], Any]


@dataclass
class ClusterLedger:
    """All clusters of one simulation run with their visibility masks."""

    params: EvolutionParams
    tx_array: ArrayGeometry
    rx_array: ArrayGeometry
    clusters: list = field(default_factory=list)
    time: float = 0.0
    spawn: Optional[Spawner] = None

    def _add(self, tx_interval, rx_interval, rng):
        cid = len(self.clusters)
        tx = _mask(self.tx_array.element_count, tx_interval)
        rx = _mask(self.rx_array.element_count, rx_interval)
        payload = self.spawn(cid, self.time, tx, rx, rng) if self.spawn else None
        rec = ClusterRecord(cid, self.time, tx, rx, payload=payload)
        self.clusters.append(rec)
        return rec

    def populate(self, rng: np.random.Generator, initial: Optional[int] = None,
                 intensity: float = 1.0):
        """Add clusters produced by a Tx-array sweep; Rx intervals are grown per cluster."""
        tx, rx = self.tx_array, self.rx_array
        born = []
        for interval in sweep_array(tx.element_count, tx.spacing, tx.tilt_elevation,
                                    self.params, rng, initial=initial, intensity=intensity):
            rx_interval = grow_interval(rx.element_count, rx.spacing, rx.tilt_elevation,
                                        self.params, rng)
            born.append(self._add(interval, rx_interval, rng))
        return born

    @property
    def alive(self) -> list:
        return [c for c in self.clusters if c.alive]

    def count_alive(self, q: Optional[int] = None, p: Optional[int] = None) -> int:
        if q is None and p is None:
            return len(self.alive)
        q = 0 if q is None else q
        p = 0 if p is None else p
        return sum(c.visible(q, p) for c in self.clusters)

    def snapshot(self) -> dict:
        """Plain-data view of the ledger (no payloads)."""
        return {
            "time_s": self.time,
            "clusters": [
                {
                    "id": c.id,
                    "birth_time_s": c.birth_time,
                    "death_time_s": None if math.isinf(c.death_time) else c.death_time,
                    "alive": c.alive,
                    "tx_mask": c.tx_mask.astype(int).tolist(),
                    "rx_mask": c.rx_mask.astype(int).tolist(),
                }
                for c in self.clusters
            ],
        }


def initial_ledger(params: EvolutionParams, tx_array: ArrayGeometry, rx_array: ArrayGeometry,
                   rng: np.random.Generator, initial: Optional[int] = None,
                   spawn: Optional[Spawner] = None) -> ClusterLedger:
    ledger = ClusterLedger(params, tx_array, rx_array, spawn=spawn)
    ledger.populate(rng, initial=initial)
    return ledger


def evolve(ledger: ClusterLedger, dt: float, rng: np.random.Generator,
           tx_state: SideState = SideState(), rx_state: SideState = SideState(),
           delta_tx: float = 0.0, delta_rx: float = 0.0) -> ClusterLedger:
    """Advance the ledger by ``dt`` seconds in place.

    Every alive cluster survives with the joint survival probability; newborn
    clusters are drawn with a thinned array sweep so that each element sees
    on average ``expected_new_clusters`` new ones.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    params = ledger.params
    p_keep = joint_survival(dt, delta_tx, delta_rx, tx_state, rx_state, params)
    ledger.time += dt
    alive = ledger.alive
    if alive and p_keep < 1.0:
        dies = rng.random(len(alive)) >= p_keep
        for c, d in zip(alive, dies):
            if d:
                c.alive = False
                c.death_time = ledger.time
    thin = float(expected_new_clusters(dt, delta_tx, delta_rx, tx_state, rx_state, params)
                 / params.mean_cluster_count)
    if thin > 0:
        ledger.populate(rng, intensity=thin)
    return ledger


def longest_run(mask) -> int:
    best = run = 0
    for v in np.asarray(mask, dtype=bool):
        run = run + 1 if v else 0
        best = max(best, run)
    return best


def visibility_regions(ledger: ClusterLedger, tx_array: Optional[ArrayGeometry] = None):
    """Longest contiguous visible span of each cluster on the Tx array, in meters."""
    arr = tx_array or ledger.tx_array
    return [(c.id, longest_run(c.tx_mask) * arr.spacing) for c in ledger.clusters]
