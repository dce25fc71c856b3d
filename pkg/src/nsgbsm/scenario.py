"""Scenario configuration and deterministic end-to-end generation.

Configurations are YAML documents whose keys carry their unit, for example
``carrier_frequency_hz``. Every run draws from one Philox stream seeded by
``seed``; the generator name and numpy version go into output metadata.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .evolution import ClusterLedger, EvolutionParams, SideState, evolve
from .geometry import ArrayGeometry, MotionProfile, SPEED_OF_LIGHT, WavefrontMode, displacement
from .scattering import ClusterShape, sample_mean_distance, sample_scatterers
from .synthesis import ClusterState, PowerParams, Scene, cir, spatial_lognormal_field, \
    transfer_function
from .tensorio import ChannelTensor

RNG_NAME = "numpy.random.Philox"


def rng_version() -> str:
    return f"{RNG_NAME}/numpy-{np.__version__}"


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending key path."""


# --------------------------------------------------------------------------
# Config sections


@dataclass(frozen=True)
class ArrayConfig:
    element_count: int = 1
    spacing_m: Optional[float] = None          # None: half a wavelength
    tilt_azimuth_rad: float = 0.0
    tilt_elevation_rad: float = 0.0


@dataclass(frozen=True)
class MotionConfig:
    # rows of (start time s, speed m/s, azimuth rad, elevation rad)
    segments: tuple = ((0.0, 0.0, 0.0, 0.0),)

    def profile(self) -> MotionProfile:
        return MotionProfile.from_samples(self.segments)


@dataclass(frozen=True)
class ClusterPrior:
    """Prior of one cluster side: distance, mean angles and spreads."""

    distance_mean_m: float = 100.0
    distance_std_m: float = 10.0
    azimuth_low_rad: float = -math.pi / 3
    azimuth_high_rad: float = math.pi / 3
    elevation_mean_rad: float = 0.0
    elevation_std_rad: float = 0.0
    sigma_ds_m: float = 6.82
    sigma_as_m: float = 11.68
    sigma_es_m: float = 9.21


@dataclass(frozen=True)
class ClusterConfig:
    initial_count: Optional[int] = None       # None: Poisson with the stationary mean
    rays_per_cluster: int = 20
    single_bounce: bool = False
    tx_side: ClusterPrior = ClusterPrior()
    rx_side: ClusterPrior = ClusterPrior(azimuth_low_rad=2 * math.pi / 3,
                                         azimuth_high_rad=4 * math.pi / 3)


@dataclass(frozen=True)
class EvolutionConfig:
    enabled: bool = True
    lambda_g_per_m: float = 81.56
    lambda_r_per_m: float = 6.79
    dc_array_m: float = 10.0
    dc_time_m: float = 30.0

    def params(self) -> EvolutionParams:
        return EvolutionParams(self.lambda_g_per_m, self.lambda_r_per_m, self.dc_array_m,
                               self.dc_time_m)


@dataclass(frozen=True)
class PowerConfig:
    r_tau: float = 2.3
    delay_spread_s: float = 100e-9
    cluster_shadowing_std_db: float = 3.0
    sigma_n_db: float = 0.054
    field_correlation_length_elements: float = 10.0
    k_factor: float = 0.0
    gamma_low: float = -0.5
    gamma_high: float = 0.5
    tau_link_mean_s: float = 5e-9
    equal_ray_power: bool = False

    def params(self) -> PowerParams:
        return PowerParams(self.r_tau, self.delay_spread_s, self.cluster_shadowing_std_db,
                           self.sigma_n_db, self.field_correlation_length_elements,
                           self.k_factor, (self.gamma_low, self.gamma_high),
                           self.tau_link_mean_s, self.equal_ray_power)


@dataclass(frozen=True)
class PolarizationConfig:
    xpr_mean_db: float = 9.0
    xpr_std_db: float = 3.0
    co_polar_imbalance: float = 1.0


@dataclass(frozen=True)
class GridConfig:
    time_start_s: float = 0.0
    time_step_s: float = 1e-3
    time_count: int = 1
    frequency_count: int = 64
    delay_step_s: Optional[float] = None      # None: 1 / (4 B)


@dataclass(frozen=True)
class OutputConfig:
    kind: str = "transfer"                    # "transfer" or "cir"
    frequency_dependent: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    carrier_frequency_hz: float = 2.6e9
    bandwidth_hz: float = 100e6
    distance_m: float = 100.0
    wavefront_mode: str = "full_approx"
    tx_pattern: str = "dipole"
    rx_pattern: str = "dipole"
    tx_array: ArrayConfig = ArrayConfig(element_count=128, tilt_azimuth_rad=math.pi / 6)
    rx_array: ArrayConfig = ArrayConfig()
    tx_motion: MotionConfig = MotionConfig()
    rx_motion: MotionConfig = MotionConfig()
    cluster_a_motion: MotionConfig = MotionConfig()
    cluster_z_motion: MotionConfig = MotionConfig()
    clusters: ClusterConfig = ClusterConfig()
    evolution: EvolutionConfig = EvolutionConfig()
    power: PowerConfig = PowerConfig()
    polarization: PolarizationConfig = PolarizationConfig()
    grid: GridConfig = GridConfig()
    output: OutputConfig = OutputConfig()

    def __post_init__(self):
        validate(self)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return _to_plain(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        return _from_plain(cls, data, "")

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, default_flow_style=None)

    @classmethod
    def loads(cls, text: str) -> "ScenarioConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"<document>: not valid YAML ({exc})") from None
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        return cls.loads(Path(path).read_text())

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dump())
        return path

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        raise ConfigError("non-finite float in config")
    return obj


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if dataclasses.is_dataclass(tp):
        return _from_plain(tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return tuple(tuple(float(x) for x in row) if isinstance(row, (list, tuple))
                     else float(row) for row in value)
    return value


def _from_plain(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<document>'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown key")
    kwargs = {}
    for name in names & set(data):
        kwargs[name] = _coerce(hints[name], data[name], f"{path}.{name}" if path else name)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or '<document>'}: {exc}") from None


def _require(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def validate(cfg: ScenarioConfig) -> None:
    """Check physical ranges; raises :class:`ConfigError` naming the field."""
    _require(0 <= cfg.seed < 2 ** 64, "seed", "must be a 64-bit unsigned integer")
    _require(cfg.carrier_frequency_hz > 0, "carrier_frequency_hz", "must be > 0")
    _require(cfg.bandwidth_hz > 0, "bandwidth_hz", "must be > 0")
    _require(cfg.bandwidth_hz < 2 * cfg.carrier_frequency_hz, "bandwidth_hz",
             "must be below twice the carrier frequency")
    _require(cfg.distance_m > 0, "distance_m", "must be > 0")
    try:
        WavefrontMode.parse(cfg.wavefront_mode)
    except ValueError as exc:
        raise ConfigError(f"wavefront_mode: {exc}") from None
    for name in ("tx_pattern", "rx_pattern"):
        _require(getattr(cfg, name) in ("isotropic", "dipole", "half-wave-dipole-vertical"),
                 name, "must be isotropic or dipole")
    for name in ("tx_array", "rx_array"):
        a = getattr(cfg, name)
        _require(a.element_count >= 1, f"{name}.element_count", "must be >= 1")
        _require(a.spacing_m is None or a.spacing_m > 0, f"{name}.spacing_m", "must be > 0")
        _require(abs(a.tilt_elevation_rad) <= math.pi / 2, f"{name}.tilt_elevation_rad",
                 "must lie in [-pi/2, pi/2]")
    for name in ("tx_motion", "rx_motion", "cluster_a_motion", "cluster_z_motion"):
        m = getattr(cfg, name)
        _require(len(m.segments) >= 1 and all(len(r) == 4 for r in m.segments),
                 f"{name}.segments", "needs rows of (time_s, speed_mps, azimuth_rad, elevation_rad)")
        _require(m.segments[0][0] <= cfg.grid.time_start_s, f"{name}.segments",
                 "first segment must start at or before grid.time_start_s")
        try:
            m.profile()
        except ValueError as exc:
            raise ConfigError(f"{name}.segments: {exc}") from None
    c = cfg.clusters
    _require(c.initial_count is None or c.initial_count >= 0, "clusters.initial_count",
             "must be >= 0")
    _require(c.rays_per_cluster >= 1, "clusters.rays_per_cluster", "must be >= 1")
    for side in ("tx_side", "rx_side"):
        pr = getattr(c, side)
        base = f"clusters.{side}"
        _require(pr.distance_mean_m > 0, f"{base}.distance_mean_m", "must be > 0")
        _require(pr.distance_std_m >= 0, f"{base}.distance_std_m", "must be >= 0")
        _require(pr.azimuth_high_rad >= pr.azimuth_low_rad, f"{base}.azimuth_high_rad",
                 "must be >= azimuth_low_rad")
        _require(pr.elevation_std_rad >= 0, f"{base}.elevation_std_rad", "must be >= 0")
        for s in ("sigma_ds_m", "sigma_as_m", "sigma_es_m"):
            _require(getattr(pr, s) > 0, f"{base}.{s}", "must be > 0")
    e = cfg.evolution
    for s in ("lambda_g_per_m", "lambda_r_per_m", "dc_array_m", "dc_time_m"):
        _require(getattr(e, s) > 0, f"evolution.{s}", "must be > 0")
    p = cfg.power
    _require(p.r_tau >= 1, "power.r_tau", "must be >= 1")
    _require(p.delay_spread_s > 0, "power.delay_spread_s", "must be > 0")
    _require(p.cluster_shadowing_std_db >= 0, "power.cluster_shadowing_std_db", "must be >= 0")
    _require(p.sigma_n_db >= 0, "power.sigma_n_db", "must be >= 0")
    _require(p.field_correlation_length_elements > 0, "power.field_correlation_length_elements",
             "must be > 0")
    _require(p.k_factor >= 0, "power.k_factor", "must be >= 0")
    _require(p.gamma_high >= p.gamma_low, "power.gamma_high", "must be >= gamma_low")
    _require(p.tau_link_mean_s >= 0, "power.tau_link_mean_s", "must be >= 0")
    _require(cfg.polarization.xpr_std_db >= 0, "polarization.xpr_std_db", "must be >= 0")
    _require(cfg.polarization.co_polar_imbalance > 0, "polarization.co_polar_imbalance",
             "must be > 0")
    g = cfg.grid
    _require(g.time_count >= 1, "grid.time_count", "must be >= 1")
    _require(g.time_step_s > 0, "grid.time_step_s", "must be > 0")
    _require(g.time_start_s >= 0, "grid.time_start_s", "must be >= 0")
    _require(g.frequency_count >= 1, "grid.frequency_count", "must be >= 1")
    _require(g.delay_step_s is None or g.delay_step_s > 0, "grid.delay_step_s", "must be > 0")
    _require(cfg.output.kind in ("transfer", "cir"), "output.kind", "must be transfer or cir")


# --------------------------------------------------------------------------
# Building and running


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _array(a: ArrayConfig, wavelength: float, ref) -> ArrayGeometry:
    spacing = wavelength / 2 if a.spacing_m is None else a.spacing_m
    return ArrayGeometry(a.element_count, spacing, a.tilt_azimuth_rad, a.tilt_elevation_rad, ref)


def build_scene(cfg: ScenarioConfig) -> Scene:
    lam = cfg.wavelength_m
    return Scene(
        tx_array=_array(cfg.tx_array, lam, (0.0, 0.0, 0.0)),
        rx_array=_array(cfg.rx_array, lam, (cfg.distance_m, 0.0, 0.0)),
        carrier_frequency=cfg.carrier_frequency_hz,
        tx_motion=cfg.tx_motion.profile(),
        rx_motion=cfg.rx_motion.profile(),
        mode=WavefrontMode.parse(cfg.wavefront_mode),
        power=cfg.power.params(),
        co_polar_imbalance=cfg.polarization.co_polar_imbalance,
        tx_pattern=cfg.tx_pattern,
        rx_pattern=cfg.rx_pattern,
    )


def time_grid(cfg: ScenarioConfig) -> np.ndarray:
    g = cfg.grid
    return g.time_start_s + g.time_step_s * np.arange(g.time_count)


def frequency_grid(cfg: ScenarioConfig) -> np.ndarray:
    """Baseband offsets covering ``[-B/2, B/2)`` with ``frequency_count`` bins."""
    n = cfg.grid.frequency_count
    return -cfg.bandwidth_hz / 2 + cfg.bandwidth_hz / n * np.arange(n)


def delay_step(cfg: ScenarioConfig) -> float:
    return cfg.grid.delay_step_s or 1.0 / (4.0 * cfg.bandwidth_hz)


def _draw_shape(prior: ClusterPrior, rng: np.random.Generator) -> ClusterShape:
    d = sample_mean_distance(prior.distance_mean_m, prior.distance_std_m, rng)
    az = rng.uniform(prior.azimuth_low_rad, prior.azimuth_high_rad)
    el = prior.elevation_mean_rad + prior.elevation_std_rad * rng.standard_normal()
    el = float(np.clip(el, -math.pi / 2 + 1e-6, math.pi / 2 - 1e-6))
    return ClusterShape(prior.sigma_ds_m, prior.sigma_as_m, prior.sigma_es_m, d, el, float(az))


def cluster_factory(cfg: ScenarioConfig, scene: Scene):
    """Spawner that draws a :class:`ClusterState` for each newborn cluster."""
    c = cfg.clusters
    m = c.rays_per_cluster
    pw = scene.power
    motion_a = cfg.cluster_a_motion.profile()
    motion_z = cfg.cluster_z_motion.profile()
    m_t, m_r = scene.tx_array.element_count, scene.rx_array.element_count

    def spawn(cid, t, tx_mask, rx_mask, rng):
        shape_a = _draw_shape(c.tx_side, rng)
        scat_a = scene.tx_origin(t) + sample_scatterers(shape_a, m, rng).positions
        if c.single_bounce:
            scat_z = scat_a.copy()
            tau_link = 0.0
        else:
            shape_z = _draw_shape(c.rx_side, rng)
            scat_z = scene.rx_origin(t) + sample_scatterers(shape_z, m, rng).positions
            tau_link = float(rng.exponential(pw.tau_link_mean)) if pw.tau_link_mean > 0 else 0.0
        shadow = float(pw.cluster_shadowing_std_db * rng.standard_normal())
        fld = spatial_lognormal_field(m_t, m_r, pw.sigma_n_db, pw.field_correlation_length, rng)
        xpr_db = cfg.polarization.xpr_mean_db + cfg.polarization.xpr_std_db * rng.standard_normal(m)
        # Phases on (0, 2*pi].
        phases = 2 * math.pi - rng.uniform(0.0, 2 * math.pi, (m, 4))
        gamma = rng.uniform(pw.gamma_range[0], pw.gamma_range[1], m)
        return ClusterState(cid, float(t), scat_a, scat_z, tau_link, shadow, fld,
                            10.0 ** (xpr_db / 10.0), phases, gamma, motion_a, motion_z,
                            tx_mask.copy(), rx_mask.copy())

    return spawn


def _relative_state(motion: MotionProfile, cmotion: MotionProfile, arr: ArrayGeometry,
                    t0: float, t1: float) -> SideState:
    rel = (displacement(motion, t0, t1) - displacement(cmotion, t0, t1)) / (t1 - t0)
    return SideState(float(np.hypot(rel[0], rel[1])), float(np.arctan2(rel[1], rel[0])),
                     arr.tilt_azimuth, arr.tilt_elevation)


@dataclass
class Realization:
    """One simulated scenario: scene, evolved ledger and the cluster states."""

    config: ScenarioConfig
    scene: Scene
    ledger: ClusterLedger
    times: np.ndarray
    clusters: list = field(default_factory=list)

    def transfer(self, freqs=None) -> ChannelTensor:
        f = frequency_grid(self.config) if freqs is None else freqs
        return transfer_function(self.scene, self.clusters, self.times, f,
                                 self.config.output.frequency_dependent)

    def cir(self, step: Optional[float] = None) -> ChannelTensor:
        return cir(self.scene, self.clusters, self.times, step or delay_step(self.config))

    def tensor(self) -> ChannelTensor:
        out = self.transfer() if self.config.output.kind == "transfer" else self.cir()
        out.metadata.update(metadata(self.config))
        return out


def simulate(cfg: ScenarioConfig, rng: Optional[np.random.Generator] = None) -> Realization:
    """Populate and evolve the cluster ledger over the configured time grid."""
    rng = make_rng(cfg.seed) if rng is None else rng
    scene = build_scene(cfg)
    times = time_grid(cfg)
    ledger = ClusterLedger(cfg.evolution.params(), scene.tx_array, scene.rx_array,
                           time=float(times[0]), spawn=cluster_factory(cfg, scene))
    ledger.populate(rng, initial=cfg.clusters.initial_count)
    if cfg.evolution.enabled:
        ma, mz = cfg.cluster_a_motion.profile(), cfg.cluster_z_motion.profile()
        for t0, t1 in zip(times[:-1], times[1:]):
            tx_s = _relative_state(scene.tx_motion, ma, scene.tx_array, t0, t1)
            rx_s = _relative_state(scene.rx_motion, mz, scene.rx_array, t0, t1)
            evolve(ledger, float(t1 - t0), rng, tx_s, rx_s)
    states = []
    for rec in ledger.clusters:
        st = rec.payload
        st.death_time = rec.death_time
        states.append(st)
    return Realization(cfg, scene, ledger, times, states)


def metadata(cfg: ScenarioConfig) -> dict:
    return {"seed": cfg.seed, "rng": rng_version(), "config_sha256": cfg.digest(),
            "wavefront_mode": WavefrontMode.parse(cfg.wavefront_mode).name}


def run_generate(cfg: ScenarioConfig, out_dir) -> dict:
    """Write ``tensor.bin``, ``ledger.json``, ``metadata.json`` and ``config.yaml``.

    Returns the mapping of artifact names to paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    real = simulate(cfg)
    tensor = real.tensor()
    paths = {
        "tensor": tensor.save(out / "tensor.bin"),
        "config": cfg.save(out / "config.yaml"),
    }
    ledger = real.ledger.snapshot()
    paths["ledger"] = out / "ledger.json"
    paths["ledger"].write_text(json.dumps(ledger, sort_keys=True, indent=1))
    meta = dict(metadata(cfg), kind=tensor.kind, shape=list(tensor.values.shape),
                origins=list(tensor.origins), steps=list(tensor.steps),
                carrier_frequency_hz=tensor.carrier_frequency)
    paths["metadata"] = out / "metadata.json"
    paths["metadata"].write_text(json.dumps(meta, sort_keys=True, indent=1))
    return paths


def draw_clusters(cfg: ScenarioConfig, count: int, rng: Optional[np.random.Generator] = None,
                  birth_time: float = 0.0):
    """Scene plus ``count`` clusters drawn from the priors, visible on every element.

    Bypasses the birth-death process; useful for single-cluster studies.
    """
    rng = make_rng(cfg.seed) if rng is None else rng
    scene = build_scene(cfg)
    spawn = cluster_factory(cfg, scene)
    tx = np.ones(scene.tx_array.element_count, bool)
    rx = np.ones(scene.rx_array.element_count, bool)
    return scene, [spawn(i, birth_time, tx, rx, rng) for i in range(count)]
