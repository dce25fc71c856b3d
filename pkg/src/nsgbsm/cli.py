"""Command line: ``generate``, ``stats``, ``figure`` and ``validate``.

Errors go to stderr as ``error[<category>]: <message>`` with a category-specific
exit code (see ``EXIT_CODES``).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import statistics as st
from .figures import FIGURES, UnknownFigure, run_figure
from .scenario import (ConfigError, MotionConfig, ScenarioConfig, draw_clusters, metadata,
                       run_generate, simulate)
from .tensorio import ChannelTensor, TensorFormatError

EXIT_CODES = {"ok": 0, "failed": 1, "config": 2, "io": 3, "unknown": 4, "input": 5}


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# --------------------------------------------------------------------------
# Statistics registry


def _floats(params: dict, key: str, default=None) -> list:
    raw = params.get(key)
    if raw is None:
        if default is None:
            raise CliError("input", f"missing parameter {key}")
        return list(default)
    vals = [float(x) for x in raw.split(",") if x.strip()]
    if not vals:
        raise CliError("input", f"parameter {key} is empty")
    return vals


def _lag_grid(params: dict, key: str, default_max: float, default_count: int) -> np.ndarray:
    count = int(params.get(f"{key}_count", default_count))
    if count < 1:
        raise CliError("input", f"{key}_count must be >= 1 (empty lag grid)")
    return np.linspace(0.0, float(params.get(f"{key}_max", default_max)), count)


def _load_config(inp: Path) -> ScenarioConfig:
    return ScenarioConfig.load(inp / "config.yaml")


def _load_tensor(inp: Path) -> ChannelTensor:
    return ChannelTensor.load(inp / "tensor.bin")


def stat_temporal_cf(inp, params):
    cfg = _load_config(inp)
    real = simulate(cfg)
    anchors = _floats(params, "anchors_s", (0.0,))
    lags = _lag_grid(params, "lag_s", 0.05, 51)
    evo = cfg.evolution.params()
    rows = []
    for a in anchors:
        alive = [c for c in real.clusters if c.birth_time <= a < c.death_time]
        if not alive:
            raise CliError("input", f"no cluster alive at anchor {a} s")
        for dt in lags:
            r = st.stf_cf_analytic(real.scene, alive, st.CorrelationQuery(t=a, dt=-dt), evo)
            rows.append((a, dt, abs(r)))
    rep = st.StatisticsReport(metadata=metadata(cfg))
    rep.add("temporal_cf", [("anchor_time", "s"), ("time_lag", "s"), ("abs_cf", "1")], rows)
    return rep


def stat_spatial_cf(inp, params):
    cfg = _load_config(inp)
    scene, clusters = draw_clusters(cfg, max(cfg.clusters.initial_count or 12, 1))
    lags = _lag_grid(params, "lag_elements", 32, 33).round().astype(int)
    anchor = int(params.get("anchor_element", 0))
    cf = st.spatial_cf(scene, clusters, anchor, lags, evolution=cfg.evolution.params())
    rep = st.StatisticsReport(metadata=metadata(cfg))
    rep.add("spatial_cf", [("element_lag", "spacing"), ("abs_cf", "1")],
            np.column_stack([lags, np.abs(cf)]))
    return rep


def stat_coherence_distance(inp, params):
    cfg = _load_config(inp)
    scene, clusters = draw_clusters(cfg, max(cfg.clusters.initial_count or 12, 1))
    thr = float(params.get("c_thresh", 0.5))
    max_lag = int(params.get("max_lag_elements", 40))
    anchors = [int(a) for a in _floats(params, "anchors", (0,))]
    rows = []
    for a in anchors:
        lags = np.arange(min(max_lag, scene.tx_array.element_count - 1 - a) + 1)
        if lags.size < 2:
            raise CliError("input", f"anchor {a} leaves no room for spatial lags")
        cf = st.spatial_cf(scene, clusters, a, lags, evolution=cfg.evolution.params())
        try:
            d, ok = st.coherence_distance(lags * scene.tx_array.spacing, cf, thr), 1.0
        except st.ThresholdNotReached as exc:
            d, ok = exc.span, 0.0
        rows.append((a, d, ok))
    rep = st.StatisticsReport(metadata=metadata(cfg))
    rep.add("coherence_distance", [("anchor_element", "index"), ("coherence_distance", "m"),
                                   ("reached", "bool")], rows)
    return rep


def stat_doppler_spread(inp, params):
    cfg = _load_config(inp)
    speeds = _floats(params, "v_eff_mps", (0.0,))
    rows = []
    for v in speeds:
        if v < 0:
            raise CliError("input", "v_eff_mps must be >= 0")
        vv = v / math.sqrt(2.0)
        tx = cfg.tx_motion.segments[0]
        rx = cfg.rx_motion.segments[0]
        c = cfg.replace(tx_motion=MotionConfig(((tx[0], vv, tx[2], tx[3]),)),
                        rx_motion=MotionConfig(((rx[0], vv, rx[2], rx[3]),)))
        scene, clusters = draw_clusters(c, max(c.clusters.initial_count or 12, 1))
        nu = np.concatenate([st.ray_dopplers(scene, k, 0.0) for k in clusters])
        rows.append((v, st.doppler_spread(nu)))
    rep = st.StatisticsReport(metadata=metadata(cfg))
    rep.add("doppler_spread", [("v_eff", "m/s"), ("doppler_spread", "Hz")], rows)
    return rep


def stat_rms_delay_spread(inp, params):
    t = _load_tensor(inp)
    if t.kind != "CIR":
        raise CliError("input", "rms-delay-spread needs a CIR tensor (output.kind: cir)")
    q, p = int(params.get("q", 0)), int(params.get("p", 0))
    pdp = np.abs(t.values[q, p]) ** 2
    rows = [(tt, st.rms_delay_spread(t.bins, row)) for tt, row in zip(t.times, pdp)
            if row.sum() > 0]
    rep = st.StatisticsReport(metadata=dict(t.metadata))
    rep.add("rms_delay_spread", [("time", "s"), ("rms_delay_spread", "s")], rows)
    return rep


def stat_music_aps(inp, params):
    t = _load_tensor(inp)
    if t.kind != "TRANSFER":
        raise CliError("input", "music-aps needs a transfer-function tensor")
    window = int(params.get("window", 12))
    n_angles = int(params.get("angle_points", 361))
    angles = np.linspace(0.0, math.pi, n_angles)
    snaps = t.values[int(params.get("q", 0))].reshape(t.values.shape[1], -1)
    wavelength = 299_792_458.0 / t.carrier_frequency
    n_src = int(params["sources"]) if "sources" in params else None
    try:
        starts, aps = st.music_aps(snaps, t.steps[1], wavelength, angles, window, n_src)
    except ValueError as exc:
        raise CliError("input", str(exc)) from None
    rep = st.StatisticsReport()
    rep.add("aps", [("window_start", "index"), ("angle_from_axis", "rad"),
                    ("pseudo_spectrum", "1")],
            [(s, a, v) for s, row in zip(starts, aps) for a, v in zip(angles, row)])
    return rep


def stat_vr_cdf(inp, params):
    try:
        ledger = json.loads((inp / "ledger.json").read_text())
    except FileNotFoundError as exc:
        raise CliError("io", str(exc)) from None
    cfg = _load_config(inp)
    spacing = cfg.tx_array.spacing_m or cfg.wavelength_m / 2
    vr = [st.longest_run(c["tx_mask"]) * spacing for c in ledger["clusters"]]
    if not vr:
        raise CliError("input", "ledger holds no clusters")
    x, f = st.empirical_cdf(vr)
    rep = st.StatisticsReport(metadata=metadata(cfg))
    rep.add("vr_cdf", [("vr_length", "m"), ("cdf", "1")], np.column_stack([x, f]))
    return rep


STATISTICS = {
    "temporal-cf": stat_temporal_cf,
    "spatial-cf": stat_spatial_cf,
    "coherence-distance": stat_coherence_distance,
    "doppler-spread": stat_doppler_spread,
    "rms-delay-spread": stat_rms_delay_spread,
    "music-aps": stat_music_aps,
    "vr-cdf": stat_vr_cdf,
}


def run_stats(name: str, inp, out, params: dict) -> list:
    if name not in STATISTICS:
        raise CliError("unknown", f"unknown statistic {name!r}; choose from "
                                  f"{', '.join(sorted(STATISTICS))}")
    rep = STATISTICS[name](Path(inp), params)
    return rep.write_csv(out)


# --------------------------------------------------------------------------
# Argument handling


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nsgbsm", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)

    g = sub.add_parser("generate", help="simulate a scenario and write tensor + ledger")
    g.add_argument("--config", "-c", type=Path, help="YAML scenario file (defaults if omitted)")
    g.add_argument("--seed", type=int)
    g.add_argument("--mode", help="wavefront mode override")
    g.add_argument("--out", "-o", type=Path, required=True)

    s = sub.add_parser("stats", help="compute a statistic from generate outputs")
    s.add_argument("name")
    s.add_argument("--input", "-i", type=Path, required=True)
    s.add_argument("--out", "-o", type=Path, required=True)
    s.add_argument("--param", "-p", action="append", default=[], metavar="KEY=VALUE")

    f = sub.add_parser("figure", help="reproduce the data behind one reference figure")
    f.add_argument("figure", help=", ".join(FIGURES))
    f.add_argument("--out", "-o", type=Path, required=True)
    f.add_argument("--seed", type=int)

    sub.add_parser("validate", help="run the built-in invariant checks")
    return ap


def _params(pairs) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise CliError("input", f"parameter {item!r} is not KEY=VALUE")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _dispatch(args) -> int:
    if args.verb == "generate":
        cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.mode is not None:
            changes["wavefront_mode"] = args.mode
        if changes:
            cfg = cfg.replace(**changes)
        paths = run_generate(cfg, args.out)
        for k, p in paths.items():
            print(f"{k}: {p}")
        return 0
    if args.verb == "stats":
        for p in run_stats(args.name, args.input, args.out, _params(args.param)):
            print(p)
        return 0
    if args.verb == "figure":
        res = run_figure(args.figure, args.out, args.seed)
        for p in res["tables"]:
            print(p)
        print(res["manifest"])
        return 0
    from .validation import run_all
    return 0 if run_all() else EXIT_CODES["failed"]


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except CliError as exc:
        category, msg = exc.category, str(exc)
    except ConfigError as exc:
        category, msg = "config", str(exc)
    except UnknownFigure as exc:
        category, msg = "unknown", exc.args[0]
    except TensorFormatError as exc:
        category, msg = "input", str(exc)
    except OSError as exc:
        category, msg = "io", str(exc)
    except ValueError as exc:
        category, msg = "input", str(exc)
    print(f"error[{category}]: {msg}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
