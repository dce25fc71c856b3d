"""Ray delays, powers, polarization and channel assembly."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .geometry import (SPEED_OF_LIGHT, ArrayGeometry, MotionProfile, WavefrontMode,
                       displacement, travel_distances)
from .tensorio import ChannelTensor


class NoEnergyError(RuntimeError):
    """Raised when a requested channel has neither LoS nor visible clusters."""


# --------------------------------------------------------------------------
# Parameters


@dataclass(frozen=True)
class PolarizationParams:
    """Realized polarization state of one ray (or of the LoS path)."""

    xpr: float = 1.0
    co_polar_imbalance: float = 1.0
    phases: tuple = (2 * math.pi,) * 4
    los_phases: tuple = (2 * math.pi, 2 * math.pi)

    def __post_init__(self):
        if not self.xpr > 0:
            raise ValueError("xpr must be positive")

    def matrix(self) -> np.ndarray:
        return polarization_matrix(self.xpr, self.co_polar_imbalance, np.asarray(self.phases))

    def los_matrix(self) -> np.ndarray:
        vv, hh = self.los_phases
        return np.array([[np.exp(1j * vv), 0.0], [0.0, -np.exp(1j * hh)]])


def polarization_matrix(xpr, mu, phases) -> np.ndarray:
    """2x2 ray polarization matrices; ``phases[..., :]`` are (VV, VH, HV, HH)."""
    xpr = np.asarray(xpr, dtype=float)
    ph = np.exp(1j * np.asarray(phases, dtype=float))
    out = np.empty(ph.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = ph[..., 0]
    out[..., 0, 1] = np.sqrt(mu / xpr) * ph[..., 1]
    out[..., 1, 0] = np.sqrt(1.0 / xpr) * ph[..., 2]
    out[..., 1, 1] = np.sqrt(mu) * ph[..., 3]
    return out


@dataclass(frozen=True)
class PowerParams:
    """Small-scale power model settings.

    ``delay_spread`` (seconds) and ``r_tau`` shape the exponential delay
    decay; ``cluster_shadowing_std_db`` sets the per-cluster term; the
    lognormal array field uses ``sigma_n_db`` and an exponential correlation
    of ``field_correlation_length`` elements.
    """

    r_tau: float = 2.3
    delay_spread: float = 100e-9
    cluster_shadowing_std_db: float = 3.0
    sigma_n_db: float = 0.054
    field_correlation_length: float = 10.0
    k_factor: float = 0.0
    gamma_range: tuple = (-0.5, 0.5)
    tau_link_mean: float = 5e-9
    equal_ray_power: bool = False

    def __post_init__(self):
        if self.r_tau < 1:
            raise ValueError("r_tau must be >= 1")
        if not self.delay_spread > 0:
            raise ValueError("delay_spread must be positive")
        if self.sigma_n_db < 0 or self.cluster_shadowing_std_db < 0:
            raise ValueError("standard deviations must be >= 0")
        if self.k_factor < 0:
            raise ValueError("k_factor must be >= 0")
        if self.tau_link_mean < 0:
            raise ValueError("tau_link_mean must be >= 0")
        if not self.field_correlation_length > 0:
            raise ValueError("field_correlation_length must be positive")
        lo, hi = self.gamma_range
        if hi < lo:
            raise ValueError("gamma_range must be (low, high) with low <= high")

    @property
    def decay_rate(self) -> float:
        """Exponent coefficient (1/s) of the delay factor."""
        return (self.r_tau - 1.0) / (self.r_tau * self.delay_spread)


# --------------------------------------------------------------------------
# Antenna patterns


@dataclass(frozen=True)
class AntennaTable:
    """Tabulated field patterns on a regular (elevation, azimuth) grid in radians."""

    elevations: tuple
    azimuths: tuple
    gain_v: tuple
    gain_h: tuple

    def interpolators(self):
        grid = (np.asarray(self.elevations), np.asarray(self.azimuths))
        return tuple(RegularGridInterpolator(grid, np.asarray(g, dtype=float),
                                             bounds_error=True)
                     for g in (self.gain_v, self.gain_h))


PatternSpec = Union[str, AntennaTable]


def antenna_pattern(kind: PatternSpec, phi_e, phi_a):
    """Vertical and horizontal field gains ``(F_V, F_H)`` of an element.

    ``kind`` is ``"isotropic"``, ``"dipole"`` (a vertical half-wave dipole)
    or an :class:`AntennaTable`.
    """
    phi_e = np.asarray(phi_e, dtype=float)
    phi_a = np.asarray(phi_a, dtype=float)
    shape = np.broadcast(phi_e, phi_a).shape
    if isinstance(kind, AntennaTable):
        pts = np.stack(np.broadcast_arrays(phi_e, phi_a), axis=-1).reshape(-1, 2)
        fv_i, fh_i = kind.interpolators()
        try:
            fv, fh = fv_i(pts).reshape(shape), fh_i(pts).reshape(shape)
        except ValueError as exc:
            raise ValueError(f"angle outside antenna table grid: {exc}") from None
    elif kind == "isotropic":
        fv, fh = np.ones(shape), np.zeros(shape)
    elif kind in ("dipole", "half-wave-dipole-vertical"):
        ce = np.cos(phi_e)
        with np.errstate(divide="ignore", invalid="ignore"):
            fv = np.where(np.abs(ce) < 1e-12, 0.0, np.cos(0.5 * np.pi * np.sin(phi_e)) / ce)
        fv = np.broadcast_to(fv, shape).astype(float)
        fh = np.zeros(shape)
    else:
        raise ValueError(f"unknown antenna pattern {kind!r}")
    if shape == ():
        return float(fv), float(fh)
    return fv, fh


# --------------------------------------------------------------------------
# Power terms


def ray_power(delay, shadowing_db: float, field_gain: float, params: PowerParams) -> float:
    """Un-normalized ray power for the given delay, cluster shadowing and field gain."""
    return (math.exp(-delay * params.decay_rate) * 10.0 ** (-shadowing_db / 10.0)
            * field_gain)


def normalize_powers(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=float)
    if np.any(raw < 0):
        raise ValueError("powers must be non-negative")
    total = raw.sum()
    if not total > 0:
        raise ValueError("cannot normalize an all-zero power vector")
    return raw / total


def _ar1(n: int, length: float, rng: np.random.Generator, m: int) -> np.ndarray:
    """``m`` stationary unit-variance sequences with correlation exp(-lag/length)."""
    rho = math.exp(-1.0 / length)
    w = rng.standard_normal((m, n))
    out = np.empty((m, n))
    out[:, 0] = w[:, 0]
    scale = math.sqrt(1.0 - rho * rho)
    for k in range(1, n):
        out[:, k] = rho * out[:, k - 1] + scale * w[:, k]
    return out


def spatial_lognormal_field(m_t: int, m_r: int, sigma_n_db: float, correlation_length: float,
                            rng: np.random.Generator, mean_db=None) -> np.ndarray:
    """Lognormal power field over the ``(q, p)`` element grid, shape ``(m_r, m_t)``.

    The underlying Gaussian field has unit variance and the separable
    correlation ``exp(-|dq|/L) * exp(-|dp|/L)``.
    """
    if sigma_n_db < 0:
        raise ValueError("sigma_n_db must be >= 0")
    mu = np.zeros((m_r, m_t)) if mean_db is None else np.broadcast_to(
        np.asarray(mean_db, dtype=float), (m_r, m_t))
    if sigma_n_db == 0:
        return 10.0 ** (mu / 10.0)
    s = _ar1(m_t, correlation_length, rng, m_r)           # correlated along p
    if m_r > 1:
        s = _mix_rows(s, correlation_length)
    return 10.0 ** ((mu + sigma_n_db * s) / 10.0)


def _mix_rows(s: np.ndarray, length: float) -> np.ndarray:
    # AR(1) across rows driven by the row-correlated innovations: separable 2D correlation.
    rho = math.exp(-1.0 / length)
    out = np.empty_like(s)
    out[0] = s[0]
    scale = math.sqrt(1.0 - rho * rho)
    for k in range(1, s.shape[0]):
        out[k] = rho * out[k - 1] + scale * s[k]
    return out


# --------------------------------------------------------------------------
# Large-scale terms


@dataclass(frozen=True)
class LargeScaleGains:
    """Linear power gains for path loss, shadowing, blockage and oxygen absorption."""

    pl: float = 1.0
    sh: float = 1.0
    bl: float = 1.0
    ol: float = 1.0

    def __post_init__(self):
        for name in ("pl", "sh", "bl", "ol"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative gain, got {v}")

    @property
    def total(self) -> float:
        return self.pl * self.sh * self.bl * self.ol

    def db(self) -> dict:
        return {k: 10.0 * math.log10(getattr(self, k)) for k in ("pl", "sh", "bl", "ol")}

    @classmethod
    def from_models(cls, distance: float, carrier_frequency: float, shadowing_std_db: float,
                    rng: np.random.Generator, blockage=1.0, oxygen=1.0) -> "LargeScaleGains":
        """Free-space path loss and lognormal shadowing; ``blockage``/``oxygen`` may be
        constants or callables ``(distance, carrier_frequency) -> gain``."""
        bl = blockage(distance, carrier_frequency) if callable(blockage) else blockage
        ol = oxygen(distance, carrier_frequency) if callable(oxygen) else oxygen
        return cls(free_space_gain(distance, carrier_frequency),
                   10.0 ** (shadowing_std_db * rng.standard_normal() / 10.0), bl, ol)


def free_space_gain(distance: float, carrier_frequency: float) -> float:
    lam = SPEED_OF_LIGHT / carrier_frequency
    return (lam / (4.0 * math.pi * distance)) ** 2


def apply_large_scale(tensor: ChannelTensor, gains: LargeScaleGains) -> ChannelTensor:
    return replace(tensor, values=tensor.values * math.sqrt(gains.total),
                   metadata=dict(tensor.metadata))


# --------------------------------------------------------------------------
# Clusters and scene


@dataclass
class ClusterState:
    """Everything needed to synthesize the rays of one first/last-bounce cluster pair.

    Scatterer positions are world coordinates at ``birth_time``; the clusters
    then move according to ``motion_a`` / ``motion_z``.
    """

    id: int
    birth_time: float
    scat_a: np.ndarray
    scat_z: np.ndarray
    tau_link: float
    shadowing_db: float
    field: np.ndarray
    xpr: np.ndarray
    phases: np.ndarray
    gamma: np.ndarray
    motion_a: MotionProfile = field(default_factory=MotionProfile)
    motion_z: MotionProfile = field(default_factory=MotionProfile)
    tx_mask: Optional[np.ndarray] = None
    rx_mask: Optional[np.ndarray] = None
    death_time: float = math.inf

    @property
    def ray_count(self) -> int:
        return self.scat_a.shape[0]

    @property
    def link_distance(self) -> np.ndarray:
        return np.linalg.norm(self.scat_z - self.scat_a, axis=1)

    @property
    def excess_delay(self) -> np.ndarray:
        """Delay of the virtual link between first and last bounce, per ray."""
        return self.link_distance / SPEED_OF_LIGHT + self.tau_link


@dataclass
class Scene:
    """Static description of a link: arrays, terminal motion and model switches."""

    tx_array: ArrayGeometry
    rx_array: ArrayGeometry
    carrier_frequency: float
    tx_motion: MotionProfile = field(default_factory=MotionProfile)
    rx_motion: MotionProfile = field(default_factory=MotionProfile)
    mode: WavefrontMode = WavefrontMode.FULL_APPROX
    power: PowerParams = field(default_factory=PowerParams)
    co_polar_imbalance: float = 1.0
    los_phases: tuple = (2 * math.pi, 2 * math.pi)
    tx_pattern: PatternSpec = "isotropic"
    rx_pattern: PatternSpec = "isotropic"

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def k_factor(self) -> float:
        return self.power.k_factor

    def tx_origin(self, t) -> np.ndarray:
        return np.asarray(self.tx_array.reference_position) + displacement(self.tx_motion, 0.0, t)

    def rx_origin(self, t) -> np.ndarray:
        return np.asarray(self.rx_array.reference_position) + displacement(self.rx_motion, 0.0, t)


def _angles(vec):
    d = np.linalg.norm(vec, axis=-1)
    return np.arcsin(np.clip(vec[..., 2] / d, -1, 1)), np.arctan2(vec[..., 1], vec[..., 0])


def ray_coefficients(scene: Scene, cluster: ClusterState) -> np.ndarray:
    """Antenna-pattern and polarization weight of every ray (complex, shape ``(M,)``)."""
    t_e, t_a = _angles(cluster.scat_a - scene.tx_origin(cluster.birth_time))
    r_e, r_a = _angles(cluster.scat_z - scene.rx_origin(cluster.birth_time))
    ft = np.stack(antenna_pattern(scene.tx_pattern, t_e, t_a), axis=-1)
    fr = np.stack(antenna_pattern(scene.rx_pattern, r_e, r_a), axis=-1)
    pol = polarization_matrix(cluster.xpr, scene.co_polar_imbalance, cluster.phases)
    return np.einsum("mi,mij,mj->m", fr, pol, ft)


def los_coefficient(scene: Scene) -> complex:
    vec = scene.rx_origin(0.0) - scene.tx_origin(0.0)
    t_e, t_a = _angles(vec)
    r_e, r_a = _angles(-vec)
    ft = np.array(antenna_pattern(scene.tx_pattern, t_e, t_a))
    fr = np.array(antenna_pattern(scene.rx_pattern, r_e, r_a))
    vv, hh = scene.los_phases
    pol = np.array([[np.exp(1j * vv), 0.0], [0.0, -np.exp(1j * hh)]])
    return complex(fr @ pol @ ft)


def ray_distances(scene: Scene, cluster: ClusterState, times):
    """Tx-side ``(T, M, M_T)`` and Rx-side ``(T, M, M_R)`` travel distances."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    tb = cluster.birth_time
    if np.any(times < tb):
        raise ValueError("cannot evaluate a cluster before its birth")
    vec_t = cluster.scat_a - scene.tx_origin(tb)
    vec_r = cluster.scat_z - scene.rx_origin(tb)
    rel_t = displacement(scene.tx_motion, tb, times) - displacement(cluster.motion_a, tb, times)
    rel_r = displacement(scene.rx_motion, tb, times) - displacement(cluster.motion_z, tb, times)
    d_t = travel_distances(vec_t, scene.tx_array, rel_t, scene.mode)
    d_r = travel_distances(vec_r, scene.rx_array, rel_r, scene.mode)
    return d_t, d_r


def ray_delays(scene: Scene, cluster: ClusterState, times) -> np.ndarray:
    """Delays of every ray on every link, shape ``(T, M, M_R, M_T)``."""
    d_t, d_r = ray_distances(scene, cluster, times)
    return ((d_t[:, :, None, :] + d_r[:, :, :, None]) / SPEED_OF_LIGHT
            + cluster.excess_delay[None, :, None, None])


def ray_delay(scene: Scene, cluster: ClusterState, p: int, q: int, m: int, t: float) -> float:
    """Delay of ray ``m`` (0-based) between Tx element ``p`` and Rx element ``q`` (1-based)."""
    return float(ray_delays(scene, cluster, [t])[0, m, q - 1, p - 1])


def log_raw_powers(scene: Scene, cluster: ClusterState, delays: np.ndarray) -> np.ndarray:
    """Natural log of the un-normalized ray powers for the given delays."""
    if scene.power.equal_ray_power:
        delays = np.broadcast_to(delays.mean(axis=1, keepdims=True), delays.shape)
        extra = -math.log(cluster.ray_count)
    else:
        extra = 0.0
    with np.errstate(divide="ignore"):
        log_field = np.log(cluster.field)
    return (-delays * scene.power.decay_rate - cluster.shadowing_db * math.log(10.0) / 10.0
            + log_field[None, None] + extra)


def los_delays(scene: Scene, times) -> np.ndarray:
    """LoS delay between every element pair, shape ``(T, M_R, M_T)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    tx_pos = scene.tx_array.positions() - np.asarray(scene.tx_array.reference_position)
    rx_pos = scene.rx_array.positions() - np.asarray(scene.rx_array.reference_position)
    vec = ((scene.rx_origin(times) - scene.tx_origin(times))[:, None, None, :]
           + rx_pos[None, :, None, :] - tx_pos[None, None, :, :])
    return np.linalg.norm(vec, axis=-1) / SPEED_OF_LIGHT


def _alive_mask(cluster: ClusterState, times: np.ndarray) -> np.ndarray:
    return (times >= cluster.birth_time) & (times < cluster.death_time)


def _vis(cluster: ClusterState, scene: Scene) -> np.ndarray:
    tx = np.ones(scene.tx_array.element_count, bool) if cluster.tx_mask is None else cluster.tx_mask
    rx = np.ones(scene.rx_array.element_count, bool) if cluster.rx_mask is None else cluster.rx_mask
    return rx[:, None] & tx[None, :]


def _iter_rays(scene: Scene, clusters: Sequence[ClusterState], times: np.ndarray,
               chunk: int = 32):
    """Yield per time chunk a list of (cluster, idx, delays, amplitudes, vis) tuples.

    ``amplitudes`` are sqrt of the normalized powers (zero where not visible).
    """
    coefs = {c.id: ray_coefficients(scene, c) for c in clusters}
    for start in range(0, times.size, chunk):
        tc = times[start:start + chunk]
        items = []
        for c in clusters:
            alive = _alive_mask(c, tc)
            if not alive.any():
                continue
            idx = np.nonzero(alive)[0]
            tau = ray_delays(scene, c, tc[idx])
            logp = log_raw_powers(scene, c, tau)
            vis = _vis(c, scene)[None, None] & np.isfinite(logp)
            items.append((c, idx, tau, logp, vis))
        if not items:
            yield start, tc, [], coefs
            continue
        shift = max(np.max(np.where(v, lp, -np.inf)) for _, _, _, lp, v in items)
        total = np.zeros((tc.size, scene.rx_array.element_count, scene.tx_array.element_count))
        for c, idx, tau, logp, vis in items:
            np.add.at(total, idx, np.where(vis, np.exp(logp - shift), 0.0).sum(axis=1))
        out = []
        for c, idx, tau, logp, vis in items:
            with np.errstate(divide="ignore", invalid="ignore"):
                amp = np.where(vis, np.sqrt(np.exp(logp - shift) / total[idx][:, None]), 0.0)
            out.append((c, idx, tau, amp))
        yield start, tc, out, coefs


def _check_energy(scene: Scene, clusters, times):
    if scene.k_factor > 0:
        return
    empty = 0
    for t in times:
        seen = np.zeros((scene.rx_array.element_count, scene.tx_array.element_count), bool)
        for c in clusters:
            if c.birth_time <= t < c.death_time:
                seen |= _vis(c, scene)
        empty += int((~seen).sum())
    n = times.size * scene.rx_array.element_count * scene.tx_array.element_count
    if empty == n:
        raise NoEnergyError("no visible clusters and K-factor 0: the channel carries no energy")
    if empty:
        warnings.warn(f"{empty} of {n} (link, time) samples see no cluster and no LoS",
                      RuntimeWarning, stacklevel=3)


def delay_extent(scene: Scene, clusters: Sequence[ClusterState], times) -> tuple:
    """Smallest and largest delay of any visible ray or LoS path over ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    lo, hi = math.inf, -math.inf
    if scene.k_factor > 0:
        ld = los_delays(scene, times)
        lo, hi = float(ld.min()), float(ld.max())
    for c in clusters:
        alive = _alive_mask(c, times)
        if alive.any():
            tau = ray_delays(scene, c, times[alive])
            tau = tau[..., _vis(c, scene)]
            if tau.size:
                lo, hi = min(lo, float(tau.min())), max(hi, float(tau.max()))
    return lo, hi


def cir(scene: Scene, clusters: Sequence[ClusterState], times, delay_step: float,
        n_delay: Optional[int] = None, delay_origin: Optional[float] = None) -> ChannelTensor:
    """Binned channel impulse response ``h[q, p, t, delay bin]``.

    Each ray lands in the nearest delay bin. Without an explicit grid the
    delay axis covers every ray and the LoS path.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    _check_energy(scene, clusters, times)
    if delay_origin is None or n_delay is None:
        lo, hi = delay_extent(scene, clusters, times)
        if delay_origin is None:
            delay_origin = math.floor(lo / delay_step) * delay_step
        if n_delay is None:
            n_delay = int(round((hi - delay_origin) / delay_step)) + 1
    k = scene.k_factor
    w_los, w_nlos = math.sqrt(k / (k + 1.0)), math.sqrt(1.0 / (k + 1.0))
    m_r, m_t = scene.rx_array.element_count, scene.tx_array.element_count
    h = np.zeros((m_r, m_t, times.size, n_delay), dtype=complex)
    fc = scene.carrier_frequency
    qq, pp = np.meshgrid(np.arange(m_r), np.arange(m_t), indexing="ij")

    def deposit(t_idx, tau, val):
        b = np.rint((tau - delay_origin) / delay_step).astype(np.int64)
        if np.any((b < 0) | (b >= n_delay)):
            raise ValueError("ray delay outside the requested CIR delay grid")
        np.add.at(h, (np.broadcast_to(qq, tau.shape), np.broadcast_to(pp, tau.shape),
                      np.broadcast_to(t_idx, tau.shape), b), val)

    if k > 0:
        ld = los_delays(scene, times)
        t_idx = np.arange(times.size)[:, None, None]
        deposit(t_idx, ld, w_los * los_coefficient(scene) * np.exp(2j * np.pi * fc * ld))
    if w_nlos > 0:
        for start, tc, items, coefs in _iter_rays(scene, clusters, times):
            for c, idx, tau, amp in items:
                val = (w_nlos * coefs[c.id][None, :, None, None] * amp
                       * np.exp(2j * np.pi * fc * tau))
                nz = amp > 0
                t_idx = np.broadcast_to((start + idx)[:, None, None, None], tau.shape)
                b = np.rint((tau[nz] - delay_origin) / delay_step).astype(np.int64)
                if np.any((b < 0) | (b >= n_delay)):
                    raise ValueError("ray delay outside the requested CIR delay grid")
                q_idx = np.broadcast_to(qq[None, None], tau.shape)[nz]
                p_idx = np.broadcast_to(pp[None, None], tau.shape)[nz]
                np.add.at(h, (q_idx, p_idx, t_idx[nz], b), val[nz])
    steps = (scene.rx_array.spacing or 1.0, scene.tx_array.spacing or 1.0,
             _step(times), delay_step)
    return ChannelTensor(h, "CIR", (0.0, 0.0, float(times[0]), delay_origin), steps, fc)


def _step(grid: np.ndarray) -> float:
    if grid.size < 2:
        return 1.0
    return float(grid[1] - grid[0])


def transfer_function(scene: Scene, clusters: Sequence[ClusterState], times, freqs,
                      frequency_dependent: bool = False) -> ChannelTensor:
    """Transfer function ``H[q, p, t, f]`` at baseband frequency offsets ``freqs`` (Hz).

    The phase of each path is ``2*pi*tau*(f_c - f)``. With
    ``frequency_dependent`` each ray is scaled by ``((f_c + f)/f_c)**gamma``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    fc = scene.carrier_frequency
    if np.any(fc + freqs <= 0):
        raise ValueError("frequency grid extends below 0 Hz absolute")
    _check_energy(scene, clusters, times)
    k = scene.k_factor
    w_los, w_nlos = math.sqrt(k / (k + 1.0)), math.sqrt(1.0 / (k + 1.0))
    m_r, m_t = scene.rx_array.element_count, scene.tx_array.element_count
    H = np.zeros((m_r, m_t, times.size, freqs.size), dtype=complex)
    phase_f = fc - freqs
    if k > 0:
        ld = los_delays(scene, times)                               # (T, R, P)
        los = w_los * los_coefficient(scene) * np.exp(2j * np.pi * ld[..., None] * phase_f)
        H += np.moveaxis(los, 0, 2)
    if w_nlos > 0:
        ratio = (fc + freqs) / fc
        uniform = freqs.size > 2 and np.allclose(np.diff(freqs), freqs[1] - freqs[0],
                                                 rtol=1e-12, atol=0.0)
        for start, tc, items, coefs in _iter_rays(scene, clusters, times):
            for c, idx, tau, amp in items:
                # Ray axis last so the per-bin reductions run over contiguous memory.
                vis = _vis(c, scene)
                qs, ps = np.nonzero(vis.any(axis=1))[0], np.nonzero(vis.any(axis=0))[0]
                if qs.size == 0:
                    continue
                sub = np.ix_(np.arange(tau.shape[0]), np.arange(tau.shape[1]), qs, ps)
                tau_l = np.ascontiguousarray(np.moveaxis(tau[sub], 1, -1))
                gain = np.ascontiguousarray(np.moveaxis(amp[sub], 1, -1)) * coefs[c.id]
                term = np.empty(tau_l.shape[:-1] + (freqs.size,), dtype=complex)
                tmp = np.empty(tau_l.shape, dtype=complex)
                if uniform:
                    # Walk the grid by repeated multiplication instead of one exp per bin.
                    rot = np.exp(2j * np.pi * tau_l * phase_f[0])
                    step = np.exp(-2j * np.pi * tau_l * (freqs[1] - freqs[0]))
                    for k in range(freqs.size):
                        np.multiply(gain, rot, out=tmp)
                        if frequency_dependent:
                            tmp *= ratio[k] ** c.gamma
                        term[..., k] = tmp.sum(axis=-1)
                        rot *= step
                else:
                    for k in range(freqs.size):
                        np.multiply(gain, np.exp(2j * np.pi * tau_l * phase_f[k]), out=tmp)
                        if frequency_dependent:
                            tmp *= ratio[k] ** c.gamma
                        term[..., k] = tmp.sum(axis=-1)
                H[np.ix_(qs, ps, start + idx)] += w_nlos * np.moveaxis(term, 0, 2)
    steps = (scene.rx_array.spacing or 1.0, scene.tx_array.spacing or 1.0,
             _step(times), _step(freqs))
    return ChannelTensor(H, "TRANSFER", (0.0, 0.0, float(times[0]), float(freqs[0])), steps, fc)


def ray_table(scene: Scene, clusters: Sequence[ClusterState], t: float, q: int = 0, p: int = 0):
    """Delays, normalized powers and coefficients of all rays on link ``(q, p)`` at ``t``.

    Returns ``(cluster_ids, delays, powers, coefficients)`` as flat arrays.
    """
    ids, taus, pows, coefs = [], [], [], []
    for _, tc, items, cmap in _iter_rays(scene, clusters, np.array([float(t)])):
        for c, idx, tau, amp in items:
            a = amp[0, :, q, p]
            keep = a > 0
            ids.append(np.full(int(keep.sum()), c.id))
            taus.append(tau[0, keep, q, p])
            pows.append(a[keep] ** 2)
            coefs.append(cmap[c.id][keep])
    if not ids:
        return (np.zeros(0, int), np.zeros(0), np.zeros(0), np.zeros(0, complex))
    return (np.concatenate(ids), np.concatenate(taus), np.concatenate(pows),
            np.concatenate(coefs))
