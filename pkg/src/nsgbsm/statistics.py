"""Channel statistics: correlation functions, spectra, spreads and CDFs."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .evolution import ClusterLedger, EvolutionParams, SideState, joint_survival, longest_run
from .geometry import ArrayGeometry, displacement
from .synthesis import (ClusterState, Scene, log_raw_powers, los_coefficient, los_delays,
                        ray_coefficients, ray_delays)
from .tensorio import ChannelTensor


class ThresholdNotReached(ValueError):
    """The correlation curve never falls to the requested threshold."""

    def __init__(self, span: float, threshold: float):
        super().__init__(f"|CF| stays above {threshold} over the whole sampled span "
                         f"({span:g} m)")
        self.span = span
        self.threshold = threshold


# --------------------------------------------------------------------------
# Reports


@dataclass
class Table:
    """Named columns (with units) of equal length."""

    columns: list
    units: list
    data: np.ndarray

    def __post_init__(self):
        self.data = np.atleast_2d(np.asarray(self.data, dtype=float))
        if self.data.shape[1] != len(self.columns) or len(self.units) != len(self.columns):
            raise ValueError("table columns, units and data width disagree")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("table values must be finite")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


@dataclass
class StatisticsReport:
    tables: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def add(self, name: str, columns: Sequence[tuple], data) -> Table:
        tab = Table([c for c, _ in columns], [u for _, u in columns], data)
        self.tables[name] = tab
        return tab

    def write_csv(self, directory) -> list:
        """One CSV per table; the header row carries ``name [unit]`` labels."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, tab in self.tables.items():
            path = directory / f"{name}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow([f"{c} [{u}]" for c, u in zip(tab.columns, tab.units)])
                for row in tab.data:
                    w.writerow([repr(float(v)) for v in row])
            paths.append(path)
        return paths


def empirical_cdf(values) -> tuple:
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("cannot build a CDF from no samples")
    return x, np.arange(1, x.size + 1) / x.size


# --------------------------------------------------------------------------
# STF correlation function


@dataclass(frozen=True)
class CorrelationQuery:
    """Anchor ``(t, f, p, q)`` and lags ``(dr_tx, dr_rx, dt, df)``.

    ``p`` and ``q`` are 0-based element indices. The second link is Tx
    element ``p + dr_tx/spacing`` and Rx element ``q + dr_rx/spacing``
    sampled at ``t - dt`` and frequency offset ``f - df``.
    """

    t: float = 0.0
    f: float = 0.0
    p: int = 0
    q: int = 0
    dr_tx: float = 0.0
    dr_rx: float = 0.0
    dt: float = 0.0
    df: float = 0.0

    def __post_init__(self):
        for name in ("t", "f", "dr_tx", "dr_rx", "dt", "df"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_lags(self, **lags) -> "CorrelationQuery":
        vals = {k: getattr(self, k) for k in ("t", "f", "p", "q", "dr_tx", "dr_rx", "dt", "df")}
        vals.update(lags)
        return CorrelationQuery(**vals)


def _grid_index(value: float, origin: float, step: float, size: int, what: str) -> int:
    pos = (value - origin) / step
    idx = int(round(pos))
    if abs(pos - idx) > 1e-6 or not 0 <= idx < size:
        raise ValueError(f"{what} {value:g} is not on the tensor grid")
    return idx


def _cf_indices(tensor: ChannelTensor, query: CorrelationQuery):
    shape = tensor.values.shape
    ti = _grid_index(query.t, tensor.origins[2], tensor.steps[2], shape[2], "time")
    fi = _grid_index(query.f, tensor.origins[3], tensor.steps[3], shape[3], "frequency")
    tj = _grid_index(query.t - query.dt, tensor.origins[2], tensor.steps[2], shape[2],
                     "lagged time")
    fj = _grid_index(query.f - query.df, tensor.origins[3], tensor.steps[3], shape[3],
                     "lagged frequency")
    pj = _grid_index(query.p * tensor.steps[1] + query.dr_tx, 0.0, tensor.steps[1], shape[1],
                     "lagged Tx position")
    qj = _grid_index(query.q * tensor.steps[0] + query.dr_rx, 0.0, tensor.steps[0], shape[0],
                     "lagged Rx position")
    return (query.q, query.p, ti, fi), (qj, pj, tj, fj)


def stf_cf_empirical(realizations: Sequence[ChannelTensor], query: CorrelationQuery,
                     return_stderr: bool = False):
    """Ensemble estimate of the normalized local STF correlation function.

    Averages ``H_qp(t, f) H*_q~p~(t - dt, f - df)`` over the realizations and
    divides by the average of ``|H_qp(t, f)|^2``.
    """
    if len(realizations) < 2:
        raise ValueError("need at least two realizations")
    for r in realizations:
        if r.kind != "TRANSFER":
            raise ValueError("empirical STF-CF needs transfer-function tensors")
    a, b = _cf_indices(realizations[0], query)
    x = np.array([r.values[a] for r in realizations])
    y = np.array([r.values[b] for r in realizations])
    prod = x * np.conj(y)
    norm = np.mean(np.abs(x) ** 2)
    if norm == 0:
        raise ValueError("zero power at the anchor")
    value = prod.mean() / norm
    if not return_stderr:
        return complex(value)
    se = np.std(prod, ddof=1) / math.sqrt(len(prod)) / norm
    return complex(value), float(se)


def _link_terms(scene: Scene, clusters: Sequence[ClusterState], t: float, q: int, p: int):
    """Per-cluster ray delays and normalized powers on link (q, p) at time t.

    All given clusters are treated as visible; normalization runs over them.
    """
    taus, logs = [], []
    for c in clusters:
        tau = ray_delays(scene, c, [t])
        taus.append(tau[0, :, q, p])
        logs.append(log_raw_powers(scene, c, tau)[0, :, q, p])
    allp = np.concatenate(logs)
    shift = allp.max()
    total = np.exp(allp - shift).sum()
    return taus, [np.exp(lp - shift) / total for lp in logs]


def _side_state(scene: Scene, cluster: ClusterState, t: float, dt: float, tx: bool):
    motion = scene.tx_motion if tx else scene.rx_motion
    cmotion = cluster.motion_a if tx else cluster.motion_z
    arr = scene.tx_array if tx else scene.rx_array
    t0 = max(t - dt, 0.0)
    if dt > 0:
        rel = (displacement(motion, t0, t) - displacement(cmotion, t0, t)) / dt
    else:
        rel = motion.velocity(t) - cmotion.velocity(t)
    return SideState(float(np.hypot(rel[0], rel[1])), float(np.arctan2(rel[1], rel[0])),
                     arr.tilt_azimuth, arr.tilt_elevation)


def stf_cf_analytic(scene: Scene, clusters: Sequence[ClusterState], query: CorrelationQuery,
                    evolution: Optional[EvolutionParams] = None,
                    frequency_dependent: bool = False, normalize: bool = True) -> complex:
    """Model STF correlation function by exhaustive sum over the given rays.

    The expectation over random ray phases leaves one term per ray. Each
    cluster term is weighted by its joint survival probability over the
    lags when ``evolution`` parameters are given.
    """
    if not clusters and scene.k_factor == 0:
        raise ValueError("no clusters and no LoS")
    fc = scene.carrier_frequency
    k = scene.k_factor
    t1, t2 = query.t, query.t - query.dt
    f1, f2 = query.f, query.f - query.df
    p1, q1 = query.p, query.q
    p2 = int(round(p1 + query.dr_tx / (scene.tx_array.spacing or 1.0)))
    q2 = int(round(q1 + query.dr_rx / (scene.rx_array.spacing or 1.0)))
    if not (0 <= p2 < scene.tx_array.element_count and 0 <= q2 < scene.rx_array.element_count):
        raise ValueError("spatial lag leaves the array")
    if t2 < 0:
        raise ValueError("time lag reaches before t = 0")

    def value(t1, t2, f1, f2, p2, q2):
        total = 0j
        if k > 0:
            g = abs(los_coefficient(scene)) ** 2
            tl1 = los_delays(scene, [t1])[0, q1, p1]
            tl2 = los_delays(scene, [t2])[0, q2, p2]
            total += k / (k + 1.0) * g * np.exp(
                2j * np.pi * ((fc - f1) * tl1 - (fc - f2) * tl2))
        if clusters:
            tau1, pw1 = _link_terms(scene, clusters, t1, q1, p1)
            tau2, pw2 = _link_terms(scene, clusters, t2, q2, p2)
            nlos = 0j
            for c, ta, pa, tb, pb in zip(clusters, tau1, pw1, tau2, pw2):
                a = np.sqrt(pa * pb) * np.abs(ray_coefficients(scene, c)) ** 2
                if frequency_dependent:
                    a = a * (((fc + f1) * (fc + f2)) / fc ** 2) ** c.gamma
                term = np.sum(a * np.exp(2j * np.pi * ((fc - f1) * ta - (fc - f2) * tb)))
                if evolution is not None:
                    dt = abs(t1 - t2)
                    tx_s = _side_state(scene, c, max(t1, t2), dt, True)
                    rx_s = _side_state(scene, c, max(t1, t2), dt, False)
                    term *= joint_survival(dt, abs(p2 - p1) * scene.tx_array.spacing,
                                           abs(q2 - q1) * scene.rx_array.spacing,
                                           tx_s, rx_s, evolution)
                nlos += term
            total += nlos / (k + 1.0)
        return total

    out = value(t1, t2, f1, f2, p2, q2)
    if normalize:
        out /= value(t1, t1, f1, f1, p1, q1)
    return complex(out)


def spatial_cf(scene: Scene, clusters: Sequence[ClusterState], p: int, lags: Sequence[int],
               t: float = 0.0, f: float = 0.0, q: int = 0,
               evolution: Optional[EvolutionParams] = None) -> np.ndarray:
    """Model spatial CF on the Tx array at anchor element ``p`` for element lags ``lags``."""
    sp = scene.tx_array.spacing
    return np.array([stf_cf_analytic(scene, clusters,
                                     CorrelationQuery(t, f, p, q, dr_tx=k * sp),
                                     evolution) for k in lags])


# --------------------------------------------------------------------------
# Spatial-Doppler PSD


def spatial_doppler_psd(cf, lags, wavelength: float, n_fft: int = 1024):
    """Spatial-Doppler PSD from a spatial CF sampled on a uniform lag grid (meters).

    Returns ``(varpi, psd)`` with ``varpi`` covering one period
    ``[-wavelength/(2*step), wavelength/(2*step))``. The PSD is scaled so
    that its integral over ``varpi`` equals the mean of ``|cf|^2`` over the
    window.
    """
    cf = np.asarray(cf, dtype=complex)
    lags = np.asarray(lags, dtype=float)
    if cf.shape != lags.shape or cf.size < 2:
        raise ValueError("cf and lags must be equally long with at least two samples")
    step = lags[1] - lags[0]
    if step <= 0 or not np.allclose(np.diff(lags), step, rtol=1e-9, atol=1e-12):
        raise ValueError("spatial lag grid must be uniform and increasing")
    n_fft = max(int(n_fft), cf.size)
    period = wavelength / step
    varpi = (np.arange(n_fft) - n_fft // 2) * period / n_fft
    # Kernel exp(-j 2 pi varpi dr / lambda), dr = lags.
    kernel = np.exp(-2j * np.pi * np.outer(varpi, lags) / wavelength)
    spec = kernel @ cf
    psd = np.abs(spec) ** 2 / (cf.size * period)
    return varpi, psd


def psd_peak(varpi, psd) -> float:
    return float(varpi[int(np.argmax(psd))])


# --------------------------------------------------------------------------
# Doppler


def instantaneous_doppler(d_t: float, cos_vt: float, cos_wt: float, delta_p: float,
                          v_t: float, d_r: float, cos_vr: float, cos_wr: float,
                          delta_q: float, v_r: float, wavelength: float, t: float) -> float:
    """Instantaneous Doppler frequency (Hz) of one ray.

    ``cos_vt``/``cos_vr`` are the cosines between the ray and each array,
    ``cos_wt``/``cos_wr`` those between the relative motion of each end and
    the ray seen from its element, ``v_t``/``v_r`` the relative speeds.
    """
    out = -(v_t * cos_wt + v_r * cos_wr) / wavelength
    if t != 0:
        den_t = d_t - cos_vt * delta_p
        den_r = d_r - cos_vr * delta_q
        if den_t == 0 or den_r == 0:
            raise ZeroDivisionError("zero denominator in the non-stationary Doppler term")
        out += ((1.0 - cos_wt ** 2) * v_t ** 2 * t / den_t
                + (1.0 - cos_wr ** 2) * v_r ** 2 * t / den_r) / wavelength
    return float(out)


def _rel_motion(scene: Scene, cluster: ClusterState, t: float, tx: bool):
    motion = scene.tx_motion if tx else scene.rx_motion
    cmotion = cluster.motion_a if tx else cluster.motion_z
    return motion.velocity(t) - cmotion.velocity(t)


def ray_dopplers(scene: Scene, cluster: ClusterState, t: float, q: int = 0,
                 p: int = 0) -> np.ndarray:
    """Instantaneous Doppler of every ray of ``cluster`` on link ``(q, p)`` (0-based)."""
    tb = cluster.birth_time
    out = np.empty(cluster.ray_count)
    sides = []
    for tx in (True, False):
        arr = scene.tx_array if tx else scene.rx_array
        origin = scene.tx_origin(tb) if tx else scene.rx_origin(tb)
        scat = cluster.scat_a if tx else cluster.scat_z
        vec = scat - origin
        dist = np.linalg.norm(vec, axis=1)
        cth = (vec / dist[:, None]) @ arr.axis
        delta = (p if tx else q) * arr.spacing
        w = vec - delta * arr.axis
        vel = _rel_motion(scene, cluster, t, tx)
        speed = float(np.linalg.norm(vel))
        cw = (w @ vel) / (np.linalg.norm(w, axis=1) * speed) if speed > 0 else np.zeros_like(dist)
        sides.append((dist, cth, cw, delta, speed))
    (dt_, ct, wt, dp, vt), (dr_, cr, wr, dq, vr) = sides
    lam = scene.wavelength
    for m in range(cluster.ray_count):
        out[m] = instantaneous_doppler(dt_[m], ct[m], wt[m], dp, vt, dr_[m], cr[m], wr[m], dq,
                                       vr, lam, t - tb)
    return out


def doppler_spread(dopplers, weights=None) -> float:
    """Square root of the second central moment of a ray Doppler ensemble."""
    nu = np.asarray(dopplers, dtype=float)
    if nu.size < 2:
        raise ValueError("Doppler spread needs at least two rays")
    w = np.ones_like(nu) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    mean = np.sum(w * nu)
    return float(math.sqrt(np.sum(w * (nu - mean) ** 2)))


# --------------------------------------------------------------------------
# Coherence distance and delay spread


def coherence_distance(lags, cf, c_thresh: float) -> float:
    """Smallest lag where ``|cf|`` first drops to ``c_thresh`` (linear interpolation)."""
    lags = np.abs(np.asarray(lags, dtype=float))
    mag = np.abs(np.asarray(cf))
    if not 0 <= c_thresh <= 1:
        raise ValueError("c_thresh must lie in [0, 1]")
    if lags.size == 0 or lags[0] != 0 or np.any(np.diff(lags) <= 0):
        raise ValueError("lags must start at 0 and increase")
    if mag[0] <= c_thresh:
        return 0.0
    below = np.nonzero(mag <= c_thresh)[0]
    if below.size == 0:
        raise ThresholdNotReached(float(lags[-1]), c_thresh)
    i = int(below[0])
    x0, x1, y0, y1 = lags[i - 1], lags[i], mag[i - 1], mag[i]
    return float(x0 + (y0 - c_thresh) * (x1 - x0) / (y0 - y1))


def rms_delay_spread(delays, powers) -> float:
    tau = np.asarray(delays, dtype=float)
    p = np.asarray(powers, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    total = p.sum()
    if not total > 0:
        raise ValueError("zero total power")
    mean = np.sum(p * tau) / total
    return float(math.sqrt(max(np.sum(p * tau ** 2) / total - mean ** 2, 0.0)))


def mean_excess_delay(delays, powers) -> float:
    p = np.asarray(powers, dtype=float)
    return float(np.sum(p * np.asarray(delays)) / p.sum())


# --------------------------------------------------------------------------
# MUSIC


def music_spectrum(snapshots, spacing: float, wavelength: float, angles,
                   n_sources: Optional[int] = None, gap_floor: float = 1e-10):
    """MUSIC pseudo-spectrum of a ULA over ``angles`` (radians from the array axis).

    ``snapshots`` has shape ``(elements, N)``. Returns ``(spectrum, n_sources)``.
    """
    x = np.asarray(snapshots, dtype=complex)
    m, n = x.shape
    if n < m:
        raise ValueError(f"covariance is rank deficient: {n} snapshots for {m} elements")
    cov = x @ x.conj().T / n
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if n_sources is None:
        floor = max(vals[0], 0.0) * gap_floor
        v = np.maximum(vals, floor if floor > 0 else np.finfo(float).tiny)
        ratios = v[:-1] / v[1:]
        n_sources = int(np.argmax(ratios)) + 1
    if not 1 <= n_sources < m:
        raise ValueError("number of sources must lie in [1, elements - 1]")
    noise = vecs[:, n_sources:]
    k = np.arange(m)
    steer = np.exp(-2j * np.pi * spacing / wavelength * np.outer(k, np.cos(angles)))
    proj = np.sum(np.abs(noise.conj().T @ steer) ** 2, axis=0)
    return 1.0 / np.maximum(proj, np.finfo(float).tiny), n_sources


def music_aps(snapshots, spacing: float, wavelength: float, angles, window: int = 12,
              n_sources: Optional[int] = None):
    """Sliding-window MUSIC angle power spectrum along the array.

    ``snapshots`` has shape ``(M_T, N)``. Returns ``(window_starts, aps)``
    with ``aps`` of shape ``(n_windows, len(angles))``; each row is
    normalized to a peak of 1.
    """
    x = np.asarray(snapshots, dtype=complex)
    m = x.shape[0]
    if window > m:
        raise ValueError("window longer than the array")
    starts = np.arange(m - window + 1)
    aps = np.empty((starts.size, np.size(angles)))
    for i, s in enumerate(starts):
        spec, _ = music_spectrum(x[s:s + window], spacing, wavelength, angles, n_sources)
        aps[i] = spec / spec.max()
    return starts, aps


def spectrum_peaks(spectrum, min_rel: float = 1e-3) -> np.ndarray:
    """Indices of local maxima above ``min_rel`` times the global maximum."""
    s = np.asarray(spectrum, dtype=float)
    inner = (s[1:-1] > s[:-2]) & (s[1:-1] >= s[2:]) & (s[1:-1] >= min_rel * s.max())
    return np.nonzero(inner)[0] + 1


def track_peaks(aps, angles, max_jump: float, min_rel: float = 1e-3):
    """Greedy nearest-neighbour tracks of spectrum peaks across windows.

    Returns a list of tracks, each a list of ``(window_index, angle)``.
    """
    angles = np.asarray(angles, dtype=float)
    tracks, active = [], []
    for w, row in enumerate(aps):
        peaks = list(angles[spectrum_peaks(row, min_rel)])
        still = []
        for tr in active:
            if not peaks:
                tracks.append(tr)
                continue
            last = tr[-1][1]
            j = int(np.argmin([abs(a - last) for a in peaks]))
            if abs(peaks[j] - last) <= max_jump:
                tr.append((w, peaks.pop(j)))
                still.append(tr)
            else:
                tracks.append(tr)
        still.extend([[(w, a)] for a in peaks])
        active = still
    tracks.extend(active)
    return tracks


def linear_fit_r2(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot == 0:
        return 1.0
    return float(1.0 - np.sum(resid ** 2) / ss_tot)


# --------------------------------------------------------------------------
# Visibility-region and power-slope CDFs


def power_slopes(clusters: Sequence[ClusterState], tx_array: ArrayGeometry, q: int = 0):
    """OLS slope (dB/m) of each cluster's array power field over its visible elements."""
    slopes = []
    for c in clusters:
        mask = np.ones(tx_array.element_count, bool) if c.tx_mask is None else c.tx_mask
        idx = np.nonzero(mask)[0]
        if idx.size < 2:
            continue
        x = idx * tx_array.spacing
        y = 10.0 * np.log10(c.field[q, idx])
        slopes.append(float(np.polyfit(x, y, 1)[0]))
    return np.array(slopes)


def vr_and_power_slope_cdfs(ledgers: Sequence[ClusterLedger], min_clusters: int = 100):
    """Empirical CDFs of visibility-region length and of cluster power slope.

    Each ledger's cluster payloads must be :class:`ClusterState` objects.
    Returns a :class:`StatisticsReport` with tables ``vr_cdf`` and
    ``power_slope_cdf``.
    """
    vr, slopes = [], []
    n = 0
    for led in ledgers:
        n += len(led.clusters)
        vr.extend(longest_run(c.tx_mask) * led.tx_array.spacing for c in led.clusters)
        payloads = [c.payload for c in led.clusters if c.payload is not None]
        slopes.extend(power_slopes(payloads, led.tx_array))
    if n < min_clusters:
        raise ValueError(f"need at least {min_clusters} clusters, got {n}")
    rep = StatisticsReport()
    x, f = empirical_cdf(vr)
    rep.add("vr_cdf", [("vr_length", "m"), ("cdf", "1")], np.column_stack([x, f]))
    x, f = empirical_cdf(slopes)
    rep.add("power_slope_cdf", [("slope", "dB/m"), ("cdf", "1")], np.column_stack([x, f]))
    return rep
