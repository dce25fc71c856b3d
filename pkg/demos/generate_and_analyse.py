"""From a scenario file to channel statistics.

Writes a small scenario, generates its transfer function, reloads the tensor
and reports a few statistics: delay spread from a CIR, a temporal
correlation curve and the Doppler spread of the drawn rays.

    python demos/generate_and_analyse.py [output-dir]
"""

import math
import sys
import tempfile
from pathlib import Path

import numpy as np

from nsgbsm import statistics as st
from nsgbsm.scenario import (ArrayConfig, GridConfig, MotionConfig, OutputConfig,
                             ScenarioConfig, run_generate, simulate)
from nsgbsm.tensorio import ChannelTensor

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="nsgbsm-"))

cfg = ScenarioConfig(
    seed=7,
    tx_array=ArrayConfig(32, tilt_azimuth_rad=math.pi / 6),
    tx_motion=MotionConfig(((0.0, 5.0, 0.0, 0.0),)),
    rx_motion=MotionConfig(((0.0, 5.0, math.pi, 0.0),)),
    grid=GridConfig(time_step_s=5e-3, time_count=40, frequency_count=64),
)
paths = run_generate(cfg, out / "transfer")
H = ChannelTensor.load(paths["tensor"])
print(f"wrote {paths['tensor']}  shape {H.values.shape}  kind {H.kind}")

power = np.mean(np.abs(H.values) ** 2, axis=(0, 1, 3))
print(f"mean gain over time: min {power.min():.3f}  max {power.max():.3f}")

real = simulate(cfg.replace(output=OutputConfig("cir")))
h = real.cir()
pdp = np.mean(np.abs(h.values[0, 0]) ** 2, axis=0)
print(f"RMS delay spread on element 0: {st.rms_delay_spread(h.bins, pdp) * 1e9:.1f} ns")

alive = [c for c in real.clusters if c.birth_time <= 0.0 < c.death_time]
evo = cfg.evolution.params()
print("temporal correlation |CF| from t = 0:")
for dt in (0.0, 0.01, 0.02, 0.05):
    r = st.stf_cf_analytic(real.scene, alive, st.CorrelationQuery(t=dt, dt=dt), evo)
    print(f"  lag {dt * 1e3:4.0f} ms  {abs(r):.3f}")

nu = np.concatenate([st.ray_dopplers(real.scene, c, 0.0) for c in alive])
print(f"Doppler spread of {nu.size} rays at t = 0: {st.doppler_spread(nu):.1f} Hz")
