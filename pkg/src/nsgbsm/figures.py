"""Preset experiments producing plot-ready tables for the reference figures.

Each preset returns a :class:`~nsgbsm.statistics.StatisticsReport` whose
``metadata["manifest"]`` lists every parameter used, tagged ``caption``
(stated with the reference figure), ``defaults`` (the common simulation
settings) or ``design`` (a choice made here where nothing was stated).
"""

from __future__ import annotations

import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import statistics as st
from .geometry import WavefrontMode
from .scenario import (ArrayConfig, ClusterConfig, ClusterPrior, EvolutionConfig, GridConfig,
                       MotionConfig, PowerConfig, ScenarioConfig, draw_clusters, make_rng,
                       rng_version, simulate)
from .synthesis import ray_table, transfer_function

FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10")


class UnknownFigure(KeyError):
    pass


# Common simulation settings shared by all presets unless a caption overrides them.
DEFAULTS = {
    "carrier_frequency_hz": 2.6e9,
    "tx_element_count": 128,
    "rx_element_count": 1,
    "tx_tilt_azimuth_rad": math.pi / 6,
    "tx_tilt_elevation_rad": 0.0,
    "co_polar_imbalance": 1.0,
    "distance_m": 100.0,
    "lambda_r_per_m": 6.79,
    "lambda_g_per_m": 81.56,
    "dc_array_m": 9.93,
    "sigma_n_db": 0.054,
    "antenna": "dipole",
}

DESIGN = {
    "k_factor": 0.0,
    "rays_per_cluster": 20,
    "time_step_s": 1e-3,
}


class Manifest(dict):
    def put(self, key, value, source):
        self[key] = {"value": value, "source": source}
        return value


def _manifest() -> Manifest:
    m = Manifest()
    for k, v in DEFAULTS.items():
        m.put(k, v, "defaults")
    for k, v in DESIGN.items():
        m.put(k, v, "design")
    return m


def base_config(seed: int = 0, **changes) -> ScenarioConfig:
    cfg = ScenarioConfig(
        seed=seed,
        carrier_frequency_hz=DEFAULTS["carrier_frequency_hz"],
        distance_m=DEFAULTS["distance_m"],
        tx_array=ArrayConfig(DEFAULTS["tx_element_count"], None, DEFAULTS["tx_tilt_azimuth_rad"],
                             DEFAULTS["tx_tilt_elevation_rad"]),
        rx_array=ArrayConfig(DEFAULTS["rx_element_count"]),
        evolution=EvolutionConfig(True, DEFAULTS["lambda_g_per_m"], DEFAULTS["lambda_r_per_m"],
                                  DEFAULTS["dc_array_m"]),
        power=PowerConfig(sigma_n_db=DEFAULTS["sigma_n_db"], k_factor=DESIGN["k_factor"]),
        clusters=ClusterConfig(rays_per_cluster=DESIGN["rays_per_cluster"]),
        grid=GridConfig(time_step_s=DESIGN["time_step_s"]),
    )
    return cfg.replace(**changes) if changes else cfg


def _single_cluster(distance, azimuth, elevation, sigma=(1.0, 1.0, 1.0)) -> ClusterConfig:
    side = ClusterPrior(distance, 0.0, azimuth, azimuth, elevation, 0.0, *sigma)
    return ClusterConfig(initial_count=1, rays_per_cluster=DESIGN["rays_per_cluster"],
                         tx_side=side)


# --------------------------------------------------------------------------
# fig3: temporal, frequency and spatial CFs


def fig3(seed: int = 3) -> st.StatisticsReport:
    man = _manifest()
    v = man.put("speed_tx_rx_mps", 10.0, "caption")
    sig = man.put("sigma_ds_as_es_m", (6.82, 11.68, 9.21), "caption")
    n_cl = man.put("cluster_count", 12, "design")
    bw = man.put("bandwidth_hz", 100e6, "design")
    gam = man.put("gamma_range", (-0.5, 0.5), "design")
    prior = ClusterPrior(sigma_ds_m=sig[0], sigma_as_m=sig[1], sigma_es_m=sig[2])
    cfg = base_config(
        seed, bandwidth_hz=bw,
        tx_motion=MotionConfig(((0.0, v, 0.0, 0.0),)),
        rx_motion=MotionConfig(((0.0, v, math.pi, 0.0),)),
        clusters=ClusterConfig(n_cl, DESIGN["rays_per_cluster"], False, prior,
                               replace(ClusterConfig().rx_side, sigma_ds_m=sig[0],
                                       sigma_as_m=sig[1], sigma_es_m=sig[2])),
        power=PowerConfig(sigma_n_db=DEFAULTS["sigma_n_db"], gamma_low=gam[0], gamma_high=gam[1]))
    scene, clusters = draw_clusters(cfg, n_cl)
    evo = cfg.evolution.params()
    rep = st.StatisticsReport(metadata={"manifest": man})

    lags_t = np.linspace(0.0, 0.05, 51)
    rows = []
    for anchor in man.put("temporal_anchors_s", (0.0, 1.0, 2.0), "caption"):
        for dt in lags_t:
            # Correlate H(anchor) with H(anchor + dt).
            r = st.stf_cf_analytic(scene, clusters, st.CorrelationQuery(t=anchor, dt=-dt), evo)
            rows.append((anchor, dt, abs(r)))
    rep.add("temporal_cf", [("anchor_time", "s"), ("time_lag", "s"), ("abs_cf", "1")], rows)

    lags_f = np.linspace(0.0, 20e6, 41)
    rows = []
    for anchor in man.put("frequency_anchors_hz", (-bw / 2, 0.0, bw / 2), "design"):
        for df in lags_f:
            r = st.stf_cf_analytic(scene, clusters, st.CorrelationQuery(f=anchor, df=df), evo,
                                   frequency_dependent=True)
            rows.append((anchor, df, abs(r)))
    rep.add("frequency_cf", [("anchor_frequency", "Hz"), ("frequency_lag", "Hz"),
                             ("abs_cf", "1")], rows)

    rows = []
    for mode in (WavefrontMode.FULL_APPROX, WavefrontMode.WSS_PWF):
        sc = replace(scene, mode=mode)
        lags = np.arange(0, 33)
        cf = st.spatial_cf(sc, clusters, 0, lags, evolution=evo)
        rows.extend((float(mode is WavefrontMode.WSS_PWF), k, abs(c)) for k, c in zip(lags, cf))
    rep.add("spatial_cf", [("plane_wave", "bool"), ("element_lag", "spacing"),
                           ("abs_cf", "1")], rows)
    return rep


# --------------------------------------------------------------------------
# fig4 / fig5: VR length and power-slope CDFs


def _ledgers(cfg: ScenarioConfig, min_clusters: int):
    out, n, k = [], 0, 0
    while n < min_clusters:
        real = simulate(cfg.replace(seed=cfg.seed + k))
        out.append(real.ledger)
        n += len(real.ledger.clusters)
        k += 1
    return out


def fig4(seed: int = 4) -> st.StatisticsReport:
    man = _manifest()
    n_min = man.put("min_clusters", 400, "design")
    variants = man.put("lambda_r_variants_per_m", (3.0, 6.79, 12.0), "design")
    ratio = man.put("lambda_g_over_lambda_r", 12.0, "defaults")
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows = []
    for lr in variants:
        lg = DEFAULTS["lambda_g_per_m"] if lr == 6.79 else ratio * lr
        cfg = base_config(seed, evolution=EvolutionConfig(True, lg, lr, DEFAULTS["dc_array_m"]))
        sub = st.vr_and_power_slope_cdfs(_ledgers(cfg, n_min), n_min)
        rows.extend((lr, x, f) for x, f in sub.tables["vr_cdf"].data)
    rep.add("vr_cdf", [("lambda_r", "1/m"), ("vr_length", "m"), ("cdf", "1")], rows)
    return rep


def fig5(seed: int = 5) -> st.StatisticsReport:
    man = _manifest()
    n_min = man.put("min_clusters", 400, "design")
    variants = man.put("sigma_n_variants_db", (0.0, 0.054, 0.5), "design")
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows = []
    for sn in variants:
        cfg = base_config(seed, power=PowerConfig(sigma_n_db=sn))
        sub = st.vr_and_power_slope_cdfs(_ledgers(cfg, n_min), n_min)
        rows.extend((sn, x, f) for x, f in sub.tables["power_slope_cdf"].data)
    rep.add("power_slope_cdf", [("sigma_n", "dB"), ("slope", "dB/m"), ("cdf", "1")], rows)
    return rep


# --------------------------------------------------------------------------
# fig6: spatial-Doppler PSD along the array


def fig6_setup(seed: int = 6, distance: float = 20.0, element_count: int = 216):
    man = _manifest()
    az = man.put("cluster_azimuth_rad", 2 * math.pi / 3, "caption")
    el = man.put("cluster_elevation_rad", math.pi / 9, "caption")
    man.put("cluster_distance_m", distance, "design")
    man.put("tx_element_count", element_count, "design")
    sig = man.put("sigma_ds_as_es_m", (0.05, 0.05, 0.05), "design")
    cfg = base_config(seed, tx_array=ArrayConfig(element_count, None,
                                                 DEFAULTS["tx_tilt_azimuth_rad"]),
                      clusters=_single_cluster(distance, az, el, sig))
    scene, clusters = draw_clusters(cfg, 1)
    return man, cfg, scene, clusters


def fig6(seed: int = 6) -> st.StatisticsReport:
    man, cfg, scene, clusters = fig6_setup(seed)
    window = man.put("psd_window_elements", 16, "design")
    anchors = man.put("anchor_elements", (1, 100, 200), "caption")
    evo = cfg.evolution.params()
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows, peaks = [], []
    lags = np.arange(window)
    sp = scene.tx_array.spacing
    for mode in (WavefrontMode.FULL_APPROX, WavefrontMode.WSS_PWF):
        sc = replace(scene, mode=mode)
        for a in anchors:
            cf = st.spatial_cf(sc, clusters, a - 1, lags, evolution=evo)
            varpi, psd = st.spatial_doppler_psd(cf, lags * sp, scene.wavelength)
            pw = float(mode is WavefrontMode.WSS_PWF)
            rows.extend((pw, a, x, y / psd.max()) for x, y in zip(varpi, psd))
            peaks.append((pw, a, st.psd_peak(varpi, psd)))
    rep.add("spatial_doppler_psd", [("plane_wave", "bool"), ("anchor_element", "index"),
                                    ("varpi", "1"), ("normalized_psd", "1")], rows)
    rep.add("psd_peaks", [("plane_wave", "bool"), ("anchor_element", "index"),
                          ("varpi_peak", "1")], peaks)
    return rep


# --------------------------------------------------------------------------
# fig7: array coherence distance


def coherence_curve(scene, clusters, anchor: int, max_lag: int, c_thresh: float, evo):
    lags = np.arange(max_lag + 1)
    cf = st.spatial_cf(scene, clusters, anchor, lags, evolution=evo)
    try:
        return st.coherence_distance(lags * scene.tx_array.spacing, cf, c_thresh), True
    except st.ThresholdNotReached as exc:
        return exc.span, False


def fig7(seed: int = 7) -> st.StatisticsReport:
    man = _manifest()
    az = man.put("cluster_azimuth_rad", math.pi / 10, "caption")
    el = man.put("cluster_elevation_rad", math.pi / 9, "caption")
    dists = man.put("cluster_distances_m", (10.0, 30.0, 100.0), "design")
    thr = man.put("c_thresh", 0.5, "design")
    max_lag = man.put("max_lag_elements", 40, "design")
    anchors = man.put("anchor_elements", tuple(range(1, 81, 8)), "design")
    sig = man.put("sigma_ds_as_es_m", (1.0, 1.0, 1.0), "design")
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows = []
    for d in dists:
        cfg = base_config(seed, clusters=_single_cluster(d, az, el, sig))
        scene, clusters = draw_clusters(cfg, 1)
        evo = cfg.evolution.params()
        for a in anchors:
            dist, reached = coherence_curve(scene, clusters, a - 1, max_lag, thr, evo)
            rows.append((d, a, dist / scene.tx_array.spacing, float(reached)))
    rep.add("coherence_distance", [("cluster_distance", "m"), ("anchor_element", "index"),
                                   ("coherence_distance", "spacing"), ("reached", "bool")], rows)
    return rep


# --------------------------------------------------------------------------
# fig8: Doppler spread versus effective speed


def fig8_config(seed: int = 8, v_eff: float = 0.0) -> tuple:
    man = _manifest()
    fc = man.put("carrier_frequency_hz", 5.9e9, "caption")
    sig = man.put("sigma_ds_as_es_m", (81.04, 88.92, 72.03), "caption")
    a_t = man.put("alpha_tx_rad", 0.0, "caption")
    a_r = man.put("alpha_rx_rad", math.pi, "caption")
    man.put("speed_cluster_a_mps", 0.0, "caption")
    v_z = man.put("speed_cluster_z_mps", 2.0, "caption")
    a_z = man.put("alpha_cluster_z_rad", 0.0, "caption")
    man.put("speed_split", "v_tx = v_rx = v_eff / sqrt(2)", "design")
    man.put("tx_element_count", 1, "design")
    n_cl = man.put("cluster_count", 12, "design")
    v = v_eff / math.sqrt(2.0)
    pr_a = ClusterPrior(sigma_ds_m=sig[0], sigma_as_m=sig[1], sigma_es_m=sig[2])
    pr_z = replace(ClusterConfig().rx_side, sigma_ds_m=sig[0], sigma_as_m=sig[1],
                   sigma_es_m=sig[2])
    cfg = base_config(
        seed, carrier_frequency_hz=fc, tx_array=ArrayConfig(1), rx_array=ArrayConfig(1),
        tx_motion=MotionConfig(((0.0, v, a_t, 0.0),)),
        rx_motion=MotionConfig(((0.0, v, a_r, 0.0),)),
        cluster_z_motion=MotionConfig(((0.0, v_z, a_z, 0.0),)),
        clusters=ClusterConfig(n_cl, DESIGN["rays_per_cluster"], False, pr_a, pr_z))
    return man, cfg


def doppler_spread_at(v_eff: float, seed: int = 8, t: float = 0.0) -> float:
    # Same seed for every speed: common random numbers across the sweep.
    man, cfg = fig8_config(seed, v_eff)
    scene, clusters = draw_clusters(cfg, cfg.clusters.initial_count)
    nu = np.concatenate([st.ray_dopplers(scene, c, t) for c in clusters])
    return st.doppler_spread(nu)


def fig8(seed: int = 8) -> st.StatisticsReport:
    man, _ = fig8_config(seed)
    speeds = man.put("v_eff_sweep_mps", tuple(float(v) for v in range(0, 45, 5)), "design")
    rep = st.StatisticsReport(metadata={"manifest": man})
    rep.add("doppler_spread", [("v_eff", "m/s"), ("doppler_spread", "Hz")],
            [(v, doppler_spread_at(v, seed)) for v in speeds])
    return rep


# --------------------------------------------------------------------------
# fig9: MUSIC angle power spectrum along the array


def fig9_setup(seed: int = 9):
    man = _manifest()
    n_cl = man.put("cluster_count", 3, "design")
    # Kept away from the array axis: at half-wave spacing endfire directions alias.
    az = man.put("cluster_azimuth_range_rad", (math.pi / 3, 5 * math.pi / 6), "design")
    prior = ClusterPrior(man.put("cluster_distance_mean_m", 20.0, "design"),
                         man.put("cluster_distance_std_m", 3.0, "design"),
                         az[0], az[1], 0.0, 0.0, 0.3, 0.3, 0.3)
    man.put("sigma_ds_as_es_m", (0.3, 0.3, 0.3), "design")
    rays = man.put("rays_per_cluster", 1, "design")
    # Snapshots span time and frequency; Rx motion decorrelates the sources over time.
    v_r = man.put("speed_rx_mps", 10.0, "design")
    n_t = man.put("snapshot_time_samples", 32, "design")
    n_f = man.put("snapshot_frequency_bins", 32, "design")
    bw = man.put("bandwidth_hz", 100e6, "design")
    cfg = base_config(seed, bandwidth_hz=bw,
                      rx_motion=MotionConfig(((0.0, v_r, math.pi / 2, 0.0),)),
                      clusters=ClusterConfig(n_cl, rays, True, prior),
                      power=PowerConfig(sigma_n_db=DEFAULTS["sigma_n_db"],
                                        cluster_shadowing_std_db=0.0, tau_link_mean_s=0.0),
                      grid=GridConfig(time_count=n_t, frequency_count=n_f))
    scene, clusters = draw_clusters(cfg, n_cl)
    return man, cfg, scene, clusters


def music_snapshots(cfg: ScenarioConfig, scene, clusters) -> np.ndarray:
    """Tx-array snapshots ``(M_T, T*F)`` from the transfer function on the config grids."""
    g = cfg.grid
    times = g.time_start_s + g.time_step_s * np.arange(g.time_count)
    freqs = -cfg.bandwidth_hz / 2 + cfg.bandwidth_hz / g.frequency_count * np.arange(
        g.frequency_count)
    H = transfer_function(scene, clusters, times, freqs).values[0]
    return H.reshape(H.shape[0], -1)


def fig9(seed: int = 9) -> st.StatisticsReport:
    man, cfg, scene, clusters = fig9_setup(seed)
    window = man.put("music_window_elements", 12, "caption")
    angles = np.linspace(0.0, math.pi, man.put("angle_grid_points", 721, "design"))
    starts, aps = st.music_aps(music_snapshots(cfg, scene, clusters), scene.tx_array.spacing,
                               scene.wavelength, angles, window,
                               n_sources=man.put("music_sources", len(clusters), "design"))
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows = [(s, a, 10 * math.log10(max(v, 1e-300)))
            for s, row in zip(starts, aps) for a, v in zip(angles, row)]
    rep.add("aps", [("window_start", "index"), ("angle_from_axis", "rad"),
                    ("pseudo_spectrum", "dB")], rows)
    tracks = st.track_peaks(aps, angles, max_jump=man.put("track_max_jump_rad", 0.03, "design"),
                            min_rel=man.put("track_min_rel_power", 0.1, "design"))
    rows = [(i, w, a) for i, tr in enumerate(tracks) for w, a in tr]
    rep.add("peak_tracks", [("track", "index"), ("window_start", "index"),
                            ("angle_from_axis", "rad")], rows)
    return rep


# --------------------------------------------------------------------------
# fig10: RMS delay spread CDFs of three rooms


ROOMS = {
    "G": (1.1, 1.4, 1.4),
    "H": (2.3, 1.8, 1.4),
    "F": (3.8, 2.1, 1.1),
}


def room_delay_spreads(room: str, seed: int = 10, runs: int = 200) -> np.ndarray:
    sig = ROOMS[room]
    prior = ClusterPrior(3.0, 0.5, -math.pi, math.pi, 0.0, 0.0, *sig)
    cfg = base_config(seed, carrier_frequency_hz=58e9, distance_m=3.0,
                      tx_array=ArrayConfig(1), rx_array=ArrayConfig(1), tx_pattern="isotropic",
                      rx_pattern="isotropic",
                      clusters=ClusterConfig(None, DESIGN["rays_per_cluster"], True, prior))
    rng = make_rng(seed)
    out = []
    for _ in range(runs):
        real = simulate(cfg, rng)
        if not real.clusters:
            continue
        _, tau, pw, _ = ray_table(real.scene, real.clusters, 0.0)
        if tau.size:
            out.append(st.rms_delay_spread(tau, pw))
    return np.array(out)


def fig10(seed: int = 10) -> st.StatisticsReport:
    man = _manifest()
    man.put("carrier_frequency_hz", 58e9, "caption")
    man.put("distance_m", 3.0, "caption")
    man.put("cluster_distance_prior_m", (3.0, 0.5), "caption")
    for room, sig in ROOMS.items():
        man.put(f"room_{room}_sigma_ds_as_es_m", sig, "caption")
    man.put("single_bounce", True, "design")
    man.put("antenna", "isotropic", "design")
    man.put("tx_element_count", 1, "design")
    runs = man.put("runs_per_room", 200, "design")
    rep = st.StatisticsReport(metadata={"manifest": man})
    rows = []
    for i, room in enumerate(ROOMS):
        x, f = st.empirical_cdf(room_delay_spreads(room, seed, runs))
        rows.extend((i, xi, fi) for xi, fi in zip(x, f))
    rep.add("rms_delay_spread_cdf", [("room_index_GHF", "index"), ("rms_delay_spread", "s"),
                                     ("cdf", "1")], rows)
    return rep


PRESETS: dict = {name: globals()[name] for name in FIGURES}


def run_figure(name: str, out_dir, seed: int | None = None) -> dict:
    """Run one preset and write its CSV tables plus ``manifest.json``."""
    if name not in PRESETS:
        raise UnknownFigure(f"unknown figure {name!r}; choose from {', '.join(FIGURES)}")
    fn: Callable = PRESETS[name]
    rep = fn() if seed is None else fn(seed)
    out = Path(out_dir) / name
    paths = rep.write_csv(out)
    manifest = {"figure": name, "rng": rng_version(),
                "parameters": rep.metadata.get("manifest", {})}
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=1, sort_keys=True, default=list))
    return {"tables": paths, "manifest": mpath}
