import json
import math

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from nsgbsm.scenario import (ArrayConfig, ClusterConfig, ConfigError, GridConfig, MotionConfig,
                             OutputConfig, ScenarioConfig, build_scene, delay_step, draw_clusters,
                             frequency_grid, make_rng, rng_version, run_generate, simulate,
                             time_grid)
from nsgbsm.tensorio import ChannelTensor


def small(seed=0, **kw):
    base = dict(seed=seed, tx_array=ArrayConfig(8, tilt_azimuth_rad=math.pi / 6),
                clusters=ClusterConfig(rays_per_cluster=4),
                grid=GridConfig(time_step_s=0.01, time_count=3, frequency_count=16))
    base.update(kw)
    return ScenarioConfig(**base)


class TestConfigIo:
    def test_yaml_round_trip(self):
        cfg = small(seed=42, tx_motion=MotionConfig(((0.0, 5.0, 0.3, 0.0), (1.0, 2.0, 0.0, 0.0))))
        back = ScenarioConfig.loads(cfg.dump())
        assert back == cfg
        assert back.digest() == cfg.digest()

    def test_file_round_trip(self, tmp_path):
        cfg = small(seed=3)
        assert ScenarioConfig.load(cfg.save(tmp_path / "c.yaml")) == cfg

    def test_empty_document_gives_defaults(self):
        assert ScenarioConfig.loads("") == ScenarioConfig()

    def test_digest_tracks_content(self):
        assert small(seed=1).digest() != small(seed=2).digest()

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 64 - 1), st.floats(1e8, 1e11), st.integers(1, 256))
    def test_round_trip_property(self, seed, fc, m):
        cfg = ScenarioConfig(seed=seed, carrier_frequency_hz=fc, bandwidth_hz=fc / 10,
                             tx_array=ArrayConfig(m))
        assert ScenarioConfig.loads(cfg.dump()) == cfg


class TestConfigErrors:
    @pytest.mark.parametrize("doc, where", [
        ({"tx_array": {"spacing_mm": 3}}, "tx_array.spacing_mm: unknown key"),
        ({"colour": 1}, "colour: unknown key"),
        ({"seed": "abc"}, "seed: expected an integer"),
        ({"seed": -1}, "seed:"),
        ({"bandwidth_hz": 0}, "bandwidth_hz:"),
        ({"grid": {"time_count": 0}}, "grid.time_count:"),
        ({"power": {"r_tau": 0.5}}, "power.r_tau:"),
        ({"evolution": {"lambda_r_per_m": 0}}, "evolution.lambda_r_per_m:"),
        ({"evolution": {"enabled": "yes"}}, "evolution.enabled: expected true/false"),
        ({"wavefront_mode": "curved"}, "wavefront_mode:"),
        ({"clusters": {"tx_side": {"sigma_ds_m": 0}}}, "clusters.tx_side.sigma_ds_m:"),
        ({"output": {"kind": "psd"}}, "output.kind:"),
        ({"tx_motion": {"segments": [[0, 1, 0]]}}, "tx_motion.segments:"),
    ])
    def test_messages_name_the_field(self, doc, where):
        with pytest.raises(ConfigError) as exc:
            ScenarioConfig.loads(yaml.safe_dump(doc))
        assert str(exc.value).startswith(where)

    def test_bad_yaml(self):
        with pytest.raises(ConfigError):
            ScenarioConfig.loads("a: [1, 2")

    def test_direct_construction_validates(self):
        with pytest.raises(ConfigError, match="distance_m"):
            ScenarioConfig(distance_m=-1.0)

    def test_mode_names_accepted(self):
        for m in ("exact", "FULL_APPROX", "wss_pwf"):
            ScenarioConfig(wavefront_mode=m)


class TestRng:
    def test_deterministic(self):
        assert make_rng(7).random() == make_rng(7).random()
        assert make_rng(7).random() != make_rng(8).random()

    def test_philox(self):
        assert isinstance(make_rng(0).bit_generator, np.random.Philox)
        assert rng_version().startswith("numpy.random.Philox/numpy-")


class TestGrids:
    def test_time_and_frequency(self):
        cfg = small(grid=GridConfig(0.5, 0.1, 4, 8))
        np.testing.assert_allclose(time_grid(cfg), [0.5, 0.6, 0.7, 0.8])
        f = frequency_grid(cfg)
        assert f[0] == -50e6 and len(f) == 8 and f[-1] < 50e6
        assert delay_step(cfg) == pytest.approx(1 / 400e6)

    def test_scene(self):
        scene = build_scene(small())
        assert scene.tx_array.element_count == 8
        assert scene.tx_array.spacing == pytest.approx(small().wavelength_m / 2)
        np.testing.assert_allclose(scene.rx_array.reference_position, [100.0, 0, 0])


class TestSimulate:
    def test_deterministic(self):
        a, b = simulate(small(seed=5)), simulate(small(seed=5))
        assert a.ledger.snapshot() == b.ledger.snapshot()
        np.testing.assert_array_equal(a.tensor().values, b.tensor().values)

    def test_output_kinds(self):
        h = simulate(small(seed=1)).tensor()
        assert h.kind == "TRANSFER" and h.values.shape == (1, 8, 3, 16)
        assert h.metadata["seed"] == 1 and h.metadata["rng"] == rng_version()
        c = simulate(small(seed=1, output=OutputConfig("cir"))).tensor()
        assert c.kind == "CIR" and c.values.shape[:3] == (1, 8, 3)

    def test_states_match_ledger(self):
        real = simulate(small(seed=2))
        assert len(real.clusters) == len(real.ledger.clusters)
        for rec, state in zip(real.ledger.clusters, real.clusters):
            assert state.death_time == rec.death_time
            assert state.scat_a.shape == (4, 3)


class TestRunGenerate:
    def test_artifacts(self, tmp_path):
        paths = run_generate(small(seed=9), tmp_path)
        assert set(paths) == {"tensor", "config", "ledger", "metadata"}
        t = ChannelTensor.load(paths["tensor"])
        meta = json.loads(paths["metadata"].read_text())
        assert meta["shape"] == list(t.values.shape)
        assert meta["seed"] == 9 and meta["config_sha256"] == small(seed=9).digest()
        assert ScenarioConfig.load(paths["config"]) == small(seed=9)
        assert json.loads(paths["ledger"].read_text())["clusters"]

    def test_byte_identical(self, tmp_path):
        a = run_generate(small(seed=11), tmp_path / "a")
        b = run_generate(small(seed=11), tmp_path / "b")
        for key in ("tensor", "ledger", "metadata", "config"):
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_seed_changes_values_not_schema(self, tmp_path):
        a = ChannelTensor.load(run_generate(small(seed=1), tmp_path / "a")["tensor"])
        b = ChannelTensor.load(run_generate(small(seed=2), tmp_path / "b")["tensor"])
        assert a.values.shape == b.values.shape and a.kind == b.kind
        assert not np.array_equal(a.values, b.values)


def test_draw_clusters():
    cfg = small(seed=4)
    scene, cl = draw_clusters(cfg, 3)
    assert [c.id for c in cl] == [0, 1, 2]
    assert all(c.tx_mask.all() and c.rx_mask.all() for c in cl)
    assert all(c.ray_count == 4 for c in cl)
    _, again = draw_clusters(cfg, 3)
    np.testing.assert_array_equal(cl[2].scat_z, again[2].scat_z)
    # Phases are drawn on (0, 2*pi].
    assert all(np.all((c.phases > 0) & (c.phases <= 2 * np.pi)) for c in cl)
