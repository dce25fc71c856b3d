"""Fast self-checks of model invariants, run by ``nsgbsm validate``."""

from __future__ import annotations

import math
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate

from . import statistics as st
from .evolution import EvolutionParams, SideState, joint_survival, survival_prob_side
from .geometry import ArrayGeometry, WavefrontMode, travel_distances
from .scattering import ClusterShape, pdf_local
from .scenario import ArrayConfig, GridConfig, ScenarioConfig, run_generate
from .tensorio import ChannelTensor

CHECKS: list = []


def check(fn: Callable) -> Callable:
    CHECKS.append(fn)
    return fn


@check
def approx_distance_close_to_exact():
    arr = ArrayGeometry(128, 0.0577, math.pi / 6, 0.0)
    rng = np.random.default_rng(1)
    az = rng.uniform(0, 2 * np.pi, 50)
    vec = 100.0 * np.column_stack([np.cos(az), np.sin(az), np.zeros(50)])
    disp = np.array([[0.0, 0.0, 0.0], [1.0, 0.5, 0.0]])
    exact = travel_distances(vec, arr, disp, WavefrontMode.EXACT)
    approx = travel_distances(vec, arr, disp, WavefrontMode.FULL_APPROX)
    err = float(np.max(np.abs(approx - exact) / exact))
    return err < 1e-3, f"max relative error {err:.2e}"


@check
def survival_in_unit_interval_and_collinear():
    p = EvolutionParams(lambda_r=6.79, dc_array=9.93)
    vals = survival_prob_side(np.linspace(0, 1, 11), np.linspace(0, 2, 11), 5.0, 0.3, 0.3, 0.0, p)
    e1, e2 = 1.0 / 9.93, 5.0 * 0.5 / p.dc_time
    coll = survival_prob_side(0.5, 1.0, 5.0, 0.3, 0.3, 0.0, p)
    ok = np.all((vals > 0) & (vals <= 1)) and abs(coll - math.exp(-6.79 * abs(e1 - e2))) < 1e-12
    return bool(ok), f"collinear {coll:.6f}"


@check
def joint_survival_is_product():
    p = EvolutionParams()
    a, b = SideState(3.0, 0.2, 0.1, 0.0), SideState(1.0, -1.0, 0.5, 0.2)
    j = joint_survival(0.3, 0.4, 0.2, a, b, p)
    prod = (survival_prob_side(0.3, 0.4, 3.0, 0.2, 0.1, 0.0, p)
            * survival_prob_side(0.3, 0.2, 1.0, -1.0, 0.5, 0.2, p))
    return abs(j - prod) < 1e-15, f"{j:.6f}"


@check
def ellipsoid_pdf_normalized():
    sh = ClusterShape(8.0, 10.0, 6.0, 100.0)
    val, _ = integrate.tplquad(lambda z, y, x: pdf_local(x, y, z, sh),
                               -48, 48, -60, 60, -36, 36, epsabs=1e-9)
    return abs(val - 1) < 1e-4, f"integral {val:.6f}"


@check
def psd_parseval():
    lags = np.arange(32) * 0.05
    cf = np.exp(2j * np.pi * 0.3 * lags / 0.1) * np.exp(-lags)
    varpi, psd = st.spatial_doppler_psd(cf, lags, 0.1, 512)
    total = float(np.sum(psd) * (varpi[1] - varpi[0]))
    ref = float(np.mean(np.abs(cf) ** 2))
    return abs(total - ref) / ref < 1e-6, f"{total:.6g} vs {ref:.6g}"


@check
def coherence_distance_monotone():
    lags = np.linspace(0, 5, 51)
    cf = np.exp(-lags)
    d = [st.coherence_distance(lags, cf, c) for c in (0.2, 0.5, 0.8, 1.0)]
    return all(a >= b for a, b in zip(d, d[1:])), str([round(x, 3) for x in d])


@check
def tensor_round_trip():
    rng = np.random.default_rng(0)
    t = ChannelTensor(rng.standard_normal((1, 3, 2, 4)) + 1j, "CIR", steps=(1, 0.1, 1e-3, 1e-9),
                      carrier_frequency=2.6e9)
    back = ChannelTensor.from_bytes(t.to_bytes())
    return bool(np.array_equal(back.values, t.values) and back.steps == t.steps), "bytes"


@check
def config_round_trip():
    cfg = ScenarioConfig(seed=123)
    return ScenarioConfig.loads(cfg.dump()) == cfg, "yaml"


@check
def generation_deterministic():
    cfg = ScenarioConfig(seed=7, tx_array=ArrayConfig(16, tilt_azimuth_rad=math.pi / 6),
                         grid=GridConfig(time_count=3, frequency_count=8))
    with tempfile.TemporaryDirectory() as tmp:
        a = run_generate(cfg, Path(tmp) / "a")["tensor"].read_bytes()
        b = run_generate(cfg, Path(tmp) / "b")["tensor"].read_bytes()
    return a == b, f"{len(a)} bytes"


def run_all(stream=print) -> bool:
    ok_all = True
    for fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:            # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        ok_all &= bool(ok)
        stream(f"{'PASS' if ok else 'FAIL'} {fn.__name__}: {detail}")
    return ok_all
