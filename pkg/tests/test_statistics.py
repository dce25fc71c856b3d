import csv
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nsgbsm.statistics as S
from conftest import HALF_WAVE, make_cluster, make_scene
from nsgbsm.evolution import ClusterLedger, EvolutionParams
from nsgbsm.geometry import (SPEED_OF_LIGHT, ArrayGeometry, MotionProfile, WavefrontMode,
                             travel_distances, unit_vector)
from nsgbsm.scenario import (ArrayConfig, ClusterConfig, ClusterPrior, EvolutionConfig,
                             PowerConfig, ScenarioConfig, simulate)
from nsgbsm.synthesis import PowerParams, transfer_function
from nsgbsm.tensorio import ChannelTensor

LAM = 2 * HALF_WAVE


class TestReports:
    def test_cdf(self):
        x, f = S.empirical_cdf([3.0, 1.0, 2.0])
        np.testing.assert_array_equal(x, [1, 2, 3])
        np.testing.assert_allclose(f, [1 / 3, 2 / 3, 1])
        with pytest.raises(ValueError):
            S.empirical_cdf([])

    def test_csv_has_units(self, tmp_path):
        rep = S.StatisticsReport(metadata={"seed": 1})
        rep.add("curve", [("lag", "m"), ("abs_cf", "1")], [(0.0, 1.0), (0.5, 0.25)])
        (path,) = rep.write_csv(tmp_path)
        with path.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["lag [m]", "abs_cf [1]"]
        assert [float(v) for v in rows[2]] == [0.5, 0.25]

    def test_table_rejects_bad_data(self):
        with pytest.raises(ValueError):
            S.Table(["a"], ["1"], [[np.inf]])
        with pytest.raises(ValueError):
            S.Table(["a", "b"], ["1"], [[1.0, 2.0]])


def _rays(center, n, rng, spread=1.0):
    return np.asarray(center, float) + rng.normal(size=(n, 3)) * spread


def _three_clusters(rng, m_t=4, **kw):
    centers = ([40.0, 30.0, 2.0], [70.0, -40.0, 0.0], [-30.0, 50.0, -1.0])
    return [make_cluster(_rays(c, 5, rng), cid=i, m_t=m_t,
                         phases=rng.uniform(0, 2 * np.pi, (5, 4)), **kw)
            for i, c in enumerate(centers)]


class TestAnalyticCf:
    def test_zero_lag_is_one(self, rng):
        scene = make_scene(m_t=4, tx_motion=MotionProfile.constant(5.0, 1.0))
        cl = _three_clusters(rng)
        assert S.stf_cf_analytic(scene, cl, S.CorrelationQuery(t=0.3, f=1e6, p=2)) == \
            pytest.approx(1.0)

    def test_wss_reduction_anchor_independent(self, rng):
        scene = make_scene(m_t=8, mode=WavefrontMode.WSS_PWF,
                           tx_motion=MotionProfile.constant(5.0, 1.0),
                           power=PowerParams(r_tau=1.0, sigma_n_db=0.0,
                                             cluster_shadowing_std_db=0.0))
        cl = _three_clusters(rng, m_t=8)
        q = S.CorrelationQuery(dr_tx=3 * HALF_WAVE, dt=0.05)
        a = S.stf_cf_analytic(scene, cl, q.with_lags(t=0.1, p=0))
        b = S.stf_cf_analytic(scene, cl, q.with_lags(t=0.4, p=3))
        assert a == pytest.approx(b, abs=1e-9)

    def test_frequency_nonstationary_with_gamma(self, rng):
        scene = make_scene(m_t=1)
        cl = _three_clusters(rng, m_t=1)
        cl = [replace(c, gamma=rng.uniform(-0.5, 0.5, 5)) for c in cl]
        q = S.CorrelationQuery(df=10e6)
        a = S.stf_cf_analytic(scene, cl, q.with_lags(f=0.0), frequency_dependent=True)
        b = S.stf_cf_analytic(scene, cl, q.with_lags(f=50e6), frequency_dependent=True)
        assert abs(a - b) > 1e-6

    def test_hermitian_under_stationarity(self, rng):
        scene = make_scene(m_t=1, mode=WavefrontMode.WSS_PWF, power=PowerParams(r_tau=1.0),
                           rx_motion=MotionProfile.constant(8.0, 2.0))
        cl = _three_clusters(rng, m_t=1)
        fwd = S.stf_cf_analytic(scene, cl, S.CorrelationQuery(t=0.5, dt=0.01))
        back = S.stf_cf_analytic(scene, cl, S.CorrelationQuery(t=0.5, dt=-0.01))
        assert back == pytest.approx(np.conj(fwd), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 3), st.floats(0, 0.2), st.floats(-50e6, 50e6))
    def test_magnitude_bounded(self, lag, dt, df):
        rng = np.random.default_rng(0)
        scene = make_scene(m_t=4, tx_motion=MotionProfile.constant(5.0, 1.0))
        cl = _three_clusters(rng)
        q = S.CorrelationQuery(t=0.2, dr_tx=lag * HALF_WAVE, dt=dt, df=df)
        assert abs(S.stf_cf_analytic(scene, cl, q, EvolutionParams())) <= 1 + 1e-12

    def test_survival_lowers_correlation(self, rng):
        scene = make_scene(m_t=32)
        cl = _three_clusters(rng, m_t=32)
        q = S.CorrelationQuery(dr_tx=30 * HALF_WAVE)
        free = abs(S.stf_cf_analytic(scene, cl, q))
        with_evo = abs(S.stf_cf_analytic(scene, cl, q, EvolutionParams()))
        assert with_evo < free

    def test_lag_leaves_array(self, rng):
        scene = make_scene(m_t=4)
        with pytest.raises(ValueError):
            S.stf_cf_analytic(scene, _three_clusters(rng), S.CorrelationQuery(dr_tx=1.0))


class TestEmpiricalCf:
    def _ensemble(self, n, seed=5):
        rng = np.random.default_rng(seed)
        scene = make_scene(m_t=4, tx_motion=MotionProfile.constant(6.0, 0.5))
        base = _three_clusters(rng)
        times = np.array([0.0, 0.01, 0.02])
        freqs = np.linspace(-20e6, 20e6, 5)
        out = []
        for _ in range(n):
            cl = [replace(c, phases=rng.uniform(0, 2 * np.pi, c.phases.shape)) for c in base]
            out.append(transfer_function(scene, cl, times, freqs))
        return scene, base, out

    def test_zero_lag_and_grid_checks(self):
        _, _, ens = self._ensemble(4)
        q = S.CorrelationQuery(t=0.01, f=0.0, p=1)
        assert S.stf_cf_empirical(ens, q) == pytest.approx(1.0)
        with pytest.raises(ValueError, match="grid"):
            S.stf_cf_empirical(ens, q.with_lags(dt=0.003))
        with pytest.raises(ValueError):
            S.stf_cf_empirical(ens[:1], q)
        cir_like = ChannelTensor(ens[0].values, "CIR")
        with pytest.raises(ValueError):
            S.stf_cf_empirical([cir_like, cir_like], q)

    def test_matches_analytic(self):
        scene, base, ens = self._ensemble(1000)
        q = S.CorrelationQuery(t=0.02, f=10e6, p=0, dr_tx=2 * HALF_WAVE, dt=0.02, df=20e6)
        emp, se = S.stf_cf_empirical(ens, q, return_stderr=True)
        ana = S.stf_cf_analytic(scene, base, q)
        assert abs(emp - ana) < 3 * se


class TestSpatialPsd:
    def test_single_plane_wave_line(self):
        scene = make_scene(m_t=32, mode=WavefrontMode.WSS_PWF)
        az = 1.1
        c = make_cluster(80.0 * unit_vector(az, 0.0), m_t=32)
        lags = np.arange(24)
        cf = S.spatial_cf(scene, [c], 0, lags)
        varpi, psd = S.spatial_doppler_psd(cf, lags * HALF_WAVE, LAM, 2048)
        cos_th = math.cos(az - math.pi / 6)
        assert abs(S.psd_peak(varpi, psd) - cos_th) <= varpi[1] - varpi[0]

    def test_parseval(self):
        lags = np.arange(40) * HALF_WAVE
        cf = 0.6 * np.exp(2j * np.pi * 0.4 * lags / LAM) + 0.4 * np.exp(-lags)
        varpi, psd = S.spatial_doppler_psd(cf, lags, LAM, 512)
        assert np.all(psd >= 0)
        total = psd.sum() * (varpi[1] - varpi[0])
        assert total == pytest.approx(np.mean(np.abs(cf) ** 2), rel=1e-6)
        assert varpi[0] == pytest.approx(-1.0) and varpi[-1] < 1.0

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            S.spatial_doppler_psd([1, 1, 1], [0.0, 0.1, 0.3], LAM)
        with pytest.raises(ValueError):
            S.spatial_doppler_psd([1], [0.0], LAM)


class TestDoppler:
    def test_static(self):
        assert S.instantaneous_doppler(50, 0.3, 0.5, 0.1, 0, 40, 0.2, 0.1, 0, 0, LAM, 1.0) == 0

    def test_time_zero(self):
        got = S.instantaneous_doppler(50, 0.3, 0.5, 0.1, 4.0, 40, 0.2, -0.1, 0, 2.0, LAM, 0.0)
        assert got == -(4.0 * 0.5 + 2.0 * -0.1) / LAM

    def test_zero_denominator(self):
        with pytest.raises(ZeroDivisionError):
            S.instantaneous_doppler(1.0, 1.0, 0.0, 1.0, 1.0, 5.0, 0.0, 0.0, 0.0, 1.0, LAM, 1.0)

    @pytest.mark.parametrize("t, mode", [(0.0, WavefrontMode.EXACT),
                                         (0.3, WavefrontMode.FULL_APPROX)])
    def test_finite_difference_of_distance(self, t, mode):
        arr = ArrayGeometry(64, HALF_WAVE, math.pi / 6)
        rng = np.random.default_rng(6)
        d = 100.0
        for _ in range(5):
            vec_t = d * unit_vector(rng.uniform(-3, 3), rng.uniform(-0.3, 0.3))
            vec_r = 60.0 * unit_vector(rng.uniform(-3, 3), 0.0)
            v_t, h_t, v_r, h_r = 7.0, rng.uniform(-3, 3), 4.0, rng.uniform(-3, 3)
            p = 40                                   # delta_p = 40 * lambda/2 < 0.05 d
            u_t, u_r = v_t * unit_vector(h_t, 0.0), v_r * unit_vector(h_r, 0.0)
            rx_arr = ArrayGeometry(1)

            def dist(tt):
                a = travel_distances(vec_t, arr, (u_t * tt)[None], mode)
                b = travel_distances(vec_r, rx_arr, (u_r * tt)[None], mode)
                return a[0, 0, p] + b[0, 0, 0]

            h = 1e-4
            fd = (dist(t + h) - dist(t - h)) / (2 * h) / LAM
            dp = p * HALF_WAVE
            w = vec_t - dp * arr.axis
            cth = vec_t @ arr.axis / d
            cw_t = w @ u_t / (np.linalg.norm(w) * v_t)
            cw_r = vec_r @ u_r / (60.0 * v_r)
            got = S.instantaneous_doppler(d, cth, cw_t, dp, v_t, 60.0, 0.0, cw_r, 0.0, v_r,
                                          LAM, t)
            assert got == pytest.approx(fd, rel=1e-3)

    def test_pwf_angle_only_at_time_zero(self):
        scene = make_scene(m_t=1, tx_motion=MotionProfile.constant(6.0, 0.4),
                           rx_motion=MotionProfile.constant(3.0, 2.0))
        rx = np.array([100.0, 0, 0])
        a = np.array([[30.0, 40.0, 5.0], [50.0, -20.0, 0.0]])
        z = rx + np.array([[-20.0, 30.0, 0.0], [10.0, 15.0, 2.0]])
        base = S.ray_dopplers(scene, make_cluster(a, z), 0.0)
        scaled = S.ray_dopplers(scene, make_cluster(3 * a, rx + 3 * (z - rx)), 0.0)
        np.testing.assert_allclose(scaled, base, rtol=1e-12, atol=1e-12)

    def test_spread(self):
        assert S.doppler_spread([5.0, 5.0, 5.0]) == 0.0
        assert S.doppler_spread([-7.0, 7.0]) == pytest.approx(7.0)
        assert S.doppler_spread([0.0, 1.0], [1.0, 0.0]) == 0.0
        with pytest.raises(ValueError):
            S.doppler_spread([1.0])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
    def test_spread_nonnegative(self, nu):
        s = S.doppler_spread(nu)
        assert s >= 0
        if len(set(nu)) == 1:
            assert s == pytest.approx(0.0, abs=1e-9)

    def test_moving_cluster_spread_positive(self):
        scene = make_scene(m_t=1)
        rng = np.random.default_rng(1)
        c = make_cluster(_rays([30, 40, 0], 10, rng, 5.0),
                         np.array([100.0, 0, 0]) + _rays([-10, 20, 0], 10, rng, 5.0),
                         motion_z=MotionProfile.constant(2.0, 0.0))
        assert S.doppler_spread(S.ray_dopplers(scene, c, 0.0)) > 0


class TestCoherenceDistance:
    lags = np.linspace(0, 5, 51)
    cf = np.exp(-lags)

    def test_threshold_one(self):
        assert S.coherence_distance(self.lags, self.cf, 1.0) == 0.0

    def test_interpolated(self):
        lags = np.array([0.0, 1.0, 2.0])
        assert S.coherence_distance(lags, [1.0, 0.8, 0.4], 0.5) == pytest.approx(1.75)

    @given(st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert S.coherence_distance(self.lags, self.cf, lo) >= \
            S.coherence_distance(self.lags, self.cf, hi)

    def test_not_reached(self):
        with pytest.raises(S.ThresholdNotReached) as exc:
            S.coherence_distance(self.lags, self.cf, 0.001)
        assert exc.value.span == 5.0

    def test_nearer_cluster_decorrelates_faster(self):
        scene = make_scene(m_t=64)
        rng = np.random.default_rng(4)
        out = []
        for d in (10.0, 100.0):
            c = make_cluster(_rays(d * unit_vector(math.pi / 10, math.pi / 9), 20, rng), m_t=64)
            lags = np.arange(41)
            cf = S.spatial_cf(scene, [c], 0, lags, evolution=EvolutionParams())
            out.append(S.coherence_distance(lags * HALF_WAVE, cf, 0.5))
        assert out[0] < out[1]


class TestDelaySpread:
    def test_trivial(self):
        assert S.rms_delay_spread([3e-9], [1.0]) == 0.0
        assert S.rms_delay_spread([0.0, 2e-9], [1.0, 1.0]) == pytest.approx(1e-9)
        with pytest.raises(ValueError):
            S.rms_delay_spread([0.0], [0.0])

    def test_exponential(self):
        T = 20e-9
        tau = np.arange(0, 40 * T, T / 200)
        assert S.rms_delay_spread(tau, np.exp(-tau / T)) == pytest.approx(T, rel=0.01)
        assert S.mean_excess_delay(tau, np.exp(-tau / T)) == pytest.approx(T, rel=0.01)


def _plane_waves(angles, m, n, rng):
    k = np.arange(m)[:, None]
    x = 0
    for a in angles:
        s = np.exp(2j * np.pi * rng.random(n))
        x = x + np.exp(-2j * np.pi * 0.5 * k * math.cos(a)) * s[None, :]
    return x


class TestMusic:
    grid = np.linspace(0, math.pi, 361)

    def test_single_source_every_window(self, rng):
        true = 1.234
        x = _plane_waves([true], 40, 64, rng)
        starts, aps = S.music_aps(x, 0.5, 1.0, self.grid, 12)
        assert len(starts) == 29
        cell = self.grid[1] - self.grid[0]
        for row in aps:
            assert abs(self.grid[np.argmax(row)] - true) <= cell
            assert row.max() == 1.0

    def test_two_sources(self, rng):
        x = _plane_waves([0.9, 2.0], 12, 64, rng)
        spec, n = S.music_spectrum(x, 0.5, 1.0, self.grid)
        assert n == 2
        peaks = self.grid[S.spectrum_peaks(spec, 1e-3)]
        assert len(peaks) == 2
        np.testing.assert_allclose(sorted(peaks), [0.9, 2.0], atol=0.01)

    def test_rank_deficient(self, rng):
        with pytest.raises(ValueError):
            S.music_spectrum(_plane_waves([1.0], 12, 5, rng), 0.5, 1.0, self.grid)
        with pytest.raises(ValueError):
            S.music_aps(_plane_waves([1.0], 8, 20, rng), 0.5, 1.0, self.grid, 12)

    def test_tracks_and_fit(self):
        aps = np.zeros((5, 50))
        for w in range(5):
            aps[w, 10 + 2 * w] = 1.0
            aps[w, 40] = 0.5
        tracks = S.track_peaks(aps, np.arange(50.0), max_jump=3)
        assert len(tracks) == 2
        lin = max(tracks, key=lambda t: t[0][1] < 30)
        assert S.linear_fit_r2([w for w, _ in lin], [a for _, a in lin]) == pytest.approx(1.0)
        assert S.linear_fit_r2([0, 1, 2, 3], [0, 1, 0, 1]) < 0.5


def _ledgers(seed, n=3, evolution=EvolutionConfig(True, 81.56, 6.79, 9.93), **power):
    cfg = ScenarioConfig(seed=seed, tx_array=ArrayConfig(128, tilt_azimuth_rad=math.pi / 6),
                         evolution=evolution,
                         power=PowerConfig(**power), clusters=ClusterConfig(rays_per_cluster=2))
    return [simulate(cfg.replace(seed=seed + k)).ledger for k in range(n)]


class TestCdfs:
    def test_power_slope_from_linear_field(self):
        arr = ArrayGeometry(10, 0.1)
        c = make_cluster([10.0, 0, 0], m_t=10)
        c.field = 10 ** ((0.5 * np.arange(10) * 0.1)[None] / 10)        # 0.5 dB/m
        assert S.power_slopes([c], arr)[0] == pytest.approx(0.5)

    def test_flat_field_gives_step_at_zero(self):
        rep = S.vr_and_power_slope_cdfs(_ledgers(1, sigma_n_db=0.0), min_clusters=20)
        slopes = rep.tables["power_slope_cdf"].column("slope")
        np.testing.assert_allclose(slopes, 0.0, atol=1e-12)

    def test_reference_parameters(self):
        rep = S.vr_and_power_slope_cdfs(_ledgers(2, sigma_n_db=0.054), min_clusters=20)
        vr = rep.tables["vr_cdf"]
        assert np.all(np.diff(vr.column("cdf")) > 0)
        assert np.all(np.diff(vr.column("vr_length")) >= 0)
        assert np.median(vr.column("vr_length")) < 128 * HALF_WAVE
        slopes = rep.tables["power_slope_cdf"].column("slope")
        assert np.std(slopes) > 0

    def test_no_recombination_full_visibility(self):
        evo = EvolutionConfig(True, 12e-9, 1e-9, 10.0)
        rep = S.vr_and_power_slope_cdfs(_ledgers(4, evolution=evo), min_clusters=10)
        np.testing.assert_allclose(rep.tables["vr_cdf"].column("vr_length"), 128 * HALF_WAVE)

    def test_too_few_clusters(self):
        with pytest.raises(ValueError):
            S.vr_and_power_slope_cdfs(_ledgers(3, n=1), min_clusters=10_000)


def test_speed_of_light_constant():
    assert SPEED_OF_LIGHT == 299_792_458.0
