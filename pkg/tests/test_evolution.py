import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsgbsm.evolution import (ClusterLedger, EvolutionParams, SideState, evolve,
                              expected_new_clusters, grow_interval, initial_ledger, joint_survival,
                              longest_run, survival_prob_side, sweep_array, visibility_regions)
from nsgbsm.geometry import ArrayGeometry

P = EvolutionParams(81.56, 6.79, 9.93, 30.0)
HALF_WAVE = 299_792_458.0 / 2.6e9 / 2


class TestSurvival:
    def test_no_lag(self):
        assert survival_prob_side(0.0, 0.0, 5.0, 0.2, 0.1, 0.0, P) == 1.0

    def test_collinear(self):
        dt, delta, v = 0.7, 2.0, 4.0
        e1, e2 = delta / P.dc_array, v * dt / P.dc_time
        got = survival_prob_side(dt, delta, v, 0.4, 0.4, 0.0, P)
        assert got == pytest.approx(math.exp(-P.lambda_r * abs(e1 - e2)), rel=1e-14)

    def test_half_wave_step(self):
        got = survival_prob_side(0.0, 0.0577, 0.0, 0.0, 0.0, 0.0, P)
        assert got == pytest.approx(math.exp(-6.79 * 0.0577 / 9.93))
        assert got == pytest.approx(0.9613, abs=1e-4)

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 30), st.floats(-4, 4),
           st.floats(-4, 4), st.floats(-1.5, 1.5))
    def test_in_unit_interval(self, dt, d, v, h, ta, te):
        p = survival_prob_side(dt, d, v, h, ta, te, P)
        assert 0.0 < p <= 1.0 or p == 0.0 and d + v * dt > 50

    def test_decreasing(self):
        d = np.linspace(0, 5, 50)
        assert np.all(np.diff(survival_prob_side(0.0, d, 1.0, 0.0, 0.0, 0.0, P)) < 0)
        t = np.linspace(0, 5, 50)
        assert np.all(np.diff(survival_prob_side(t, 0.0, 1.0, 0.0, 0.0, 0.0, P)) < 0)

    def test_negative_lag_rejected(self):
        with pytest.raises(ValueError):
            survival_prob_side(-1.0, 0.0, 1.0, 0.0, 0.0, 0.0, P)

    def test_params_positive(self):
        with pytest.raises(ValueError):
            EvolutionParams(lambda_r=0.0)


class TestJointSurvival:
    a = SideState(3.0, 0.2, 0.1, 0.0)
    b = SideState(1.0, -1.0, 0.5, 0.2)

    def test_zero_lag(self):
        assert joint_survival(0.0, 0.0, 0.0, self.a, self.b, P) == 1.0

    @given(st.floats(0, 2), st.floats(0, 3), st.floats(0, 3))
    def test_product_and_bound(self, dt, dp, dq):
        j = joint_survival(dt, dp, dq, self.a, self.b, P)
        pa = survival_prob_side(dt, dp, 3.0, 0.2, 0.1, 0.0, P)
        pb = survival_prob_side(dt, dq, 1.0, -1.0, 0.5, 0.2, P)
        assert j == pytest.approx(pa * pb, rel=1e-14)
        assert j <= min(pa, pb) + 1e-15

    def test_bernoulli_frequency(self):
        p = joint_survival(0.2, 0.5, 0.3, self.a, self.b, P)
        n = 100_000
        hits = np.random.default_rng(4).random(n) < p
        assert abs(hits.mean() - p) < 3 * math.sqrt(p * (1 - p) / n)


class TestBirths:
    s = SideState()

    def test_no_loss_no_births(self):
        assert expected_new_clusters(0.0, 0.0, 0.0, self.s, self.s, P) == 0.0

    def test_ratio_times_deficit(self):
        # Choose lags so that the joint survival is 0.9.
        delta = -math.log(0.9) / P.lambda_r * P.dc_array
        j = joint_survival(0.0, delta, 0.0, self.s, self.s, P)
        assert j == pytest.approx(0.9)
        got = expected_new_clusters(0.0, delta, 0.0, self.s, self.s, P)
        assert got == pytest.approx(81.56 / 6.79 * 0.1)
        assert got == pytest.approx(1.201, abs=1e-3)


class TestSweep:
    def test_intervals_valid(self, rng):
        iv = sweep_array(128, HALF_WAVE, 0.0, P, rng)
        assert iv and all(0 <= a < b <= 128 for a, b in iv)

    def test_no_recombination_limit(self, rng):
        p = EvolutionParams(1e-9 * 12, 1e-9, 10.0, 30.0)
        iv = sweep_array(64, HALF_WAVE, 0.0, p, rng, initial=5)
        assert iv == [(0, 64)] * 5

    def test_mean_per_element(self):
        rng = np.random.default_rng(11)
        counts = np.zeros(128)
        runs = 300
        for _ in range(runs):
            for a, b in sweep_array(128, HALF_WAVE, 0.0, P, rng):
                counts[a:b] += 1
        assert counts.mean() / runs == pytest.approx(P.mean_cluster_count, rel=0.05)

    def test_grow_interval(self, rng):
        for _ in range(50):
            lo, hi = grow_interval(16, HALF_WAVE, 0.0, P, rng)
            assert 0 <= lo < hi <= 16
        assert grow_interval(1, 0.0, 0.0, P, rng) == (0, 1)


def _ledger(rng, m_t=8, initial=None, params=P):
    arr = ArrayGeometry(m_t, HALF_WAVE)
    return initial_ledger(params, arr, ArrayGeometry(1), rng, initial=initial)


class TestEvolve:
    def test_deterministic(self):
        snaps = []
        for _ in range(2):
            rng = np.random.default_rng(9)
            led = _ledger(rng)
            for _ in range(20):
                evolve(led, 0.01, rng, SideState(10.0), SideState(5.0, 1.0))
            snaps.append(led.snapshot())
        assert snaps[0] == snaps[1]

    def test_unchanged_without_lag(self, rng):
        led = _ledger(rng, initial=4)
        before = led.snapshot()["clusters"]
        evolve(led, 0.0, rng)
        assert led.snapshot()["clusters"] == before

    def test_no_deaths_when_recombination_vanishes(self, rng):
        p = EvolutionParams(1e-6, 1e-9, 10.0, 30.0)
        led = _ledger(rng, initial=3, params=p)
        for _ in range(50):
            evolve(led, 0.1, rng, SideState(10.0))
        assert all(c.alive for c in led.clusters)
        assert len(led.clusters) >= 3

    def test_dead_clusters_get_death_time(self, rng):
        led = _ledger(rng, initial=6)
        for _ in range(200):
            evolve(led, 0.05, rng, SideState(20.0))
        dead = [c for c in led.clusters if not c.alive]
        assert dead
        for c in dead:
            assert c.birth_time < c.death_time <= led.time
            assert not c.alive_at(c.death_time)

    def test_negative_dt(self, rng):
        with pytest.raises(ValueError):
            evolve(_ledger(rng), -1.0, rng)

    def test_stationary_count(self):
        rng = np.random.default_rng(21)
        arr = ArrayGeometry(1)
        led = ClusterLedger(P, arr, arr)
        led.populate(rng)
        counts = []
        for _ in range(10_000):
            evolve(led, 0.01, rng, SideState(5.0))
            counts.append(led.count_alive())
        assert np.mean(counts) == pytest.approx(81.56 / 6.79, rel=0.05)

    def test_spawn_payload(self, rng):
        seen = []

        def spawn(cid, t, tx, rx, r):
            seen.append(cid)
            return ("payload", cid)

        arr = ArrayGeometry(1)        # no births along a single element
        led = initial_ledger(P, arr, arr, rng, initial=2, spawn=spawn)
        assert [c.payload for c in led.clusters] == [("payload", 0), ("payload", 1)]
        assert seen == [0, 1]


class TestVisibility:
    def test_longest_run(self):
        assert longest_run([0, 1, 1, 0, 1, 1, 1, 0]) == 3
        assert longest_run([0, 0]) == 0

    def test_full_array(self, rng):
        arr = ArrayGeometry(128, HALF_WAVE)
        led = ClusterLedger(P, arr, ArrayGeometry(1))
        led._add((0, 128), (0, 1), rng)
        led._add((5, 6), (0, 1), rng)
        (_, full), (_, single) = visibility_regions(led)
        assert full == pytest.approx(128 * HALF_WAVE)
        assert full == pytest.approx(7.3, abs=0.1)
        assert single == pytest.approx(HALF_WAVE)

    def test_visible_link(self, rng):
        arr = ArrayGeometry(4, HALF_WAVE)
        led = ClusterLedger(P, arr, ArrayGeometry(2, HALF_WAVE))
        c = led._add((1, 3), (1, 2), rng)
        assert c.visible(1, 1) and c.visible(1, 2)
        assert not c.visible(0, 1) and not c.visible(1, 3)
        assert led.count_alive(1, 2) == 1 and led.count_alive(0, 2) == 0

    def test_vr_cdf_support(self):
        rng = np.random.default_rng(2)
        arr = ArrayGeometry(128, HALF_WAVE)
        led = initial_ledger(P, arr, ArrayGeometry(1), rng)
        vr = np.array([v for _, v in visibility_regions(led)])
        assert np.all((vr > 0) & (vr <= 128 * HALF_WAVE + 1e-12))
        assert np.median(vr) < 128 * HALF_WAVE
