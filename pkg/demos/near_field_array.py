"""Near-field effects along a large linear array.

Prints how far each wavefront approximation strays from the exact element
distance, then follows the spatial-Doppler line of a close cluster as the
analysis window slides down the array. With spherical wavefronts the line
drifts; with plane waves it stays put.

    python demos/near_field_array.py
"""

import math
from dataclasses import replace

import numpy as np

from nsgbsm import figures, statistics as st
from nsgbsm.geometry import SPEED_OF_LIGHT, ArrayGeometry, WavefrontMode, travel_distances, \
    unit_vector

HALF_WAVE = SPEED_OF_LIGHT / 2.6e9 / 2


def approximation_errors():
    arr = ArrayGeometry(128, HALF_WAVE, math.pi / 6)
    rng = np.random.default_rng(0)
    rays = np.array([unit_vector(a, e) for a, e in
                     zip(rng.uniform(-math.pi, math.pi, 100), rng.uniform(-0.4, 0.4, 100))])
    disp = np.array([[0.0, 0.0, 0.0], [1.5, 1.0, 0.0]])
    print(f"array aperture {arr.aperture:.2f} m, 1.8 m of terminal motion")
    print(f"{'distance':>10}" + "".join(f"{m.name:>14}" for m in WavefrontMode
                                         if m is not WavefrontMode.EXACT))
    for d in (20.0, 50.0, 100.0, 500.0):
        exact = travel_distances(d * rays, arr, disp, WavefrontMode.EXACT)
        row = []
        for mode in WavefrontMode:
            if mode is WavefrontMode.EXACT:
                continue
            approx = travel_distances(d * rays, arr, disp, mode)
            row.append(np.max(np.abs(approx - exact) / exact))
        print(f"{d:>8.0f} m" + "".join(f"{e:>14.2e}" for e in row))


def line_drift():
    _, cfg, scene, clusters = figures.fig6_setup()
    lags = np.arange(16)
    sp = scene.tx_array.spacing
    print("\nspatial-Doppler line of a cluster 20 m away (16-element windows)")
    print(f"{'window start':>13}{'spherical':>12}{'plane':>10}")
    for a in (1, 50, 100, 150, 200):
        peaks = []
        for mode in (WavefrontMode.FULL_APPROX, WavefrontMode.WSS_PWF):
            cf = st.spatial_cf(replace(scene, mode=mode), clusters, a - 1, lags,
                               evolution=cfg.evolution.params())
            varpi, psd = st.spatial_doppler_psd(cf, lags * sp, scene.wavelength)
            peaks.append(st.psd_peak(varpi, psd))
        print(f"{a:>13d}{peaks[0]:>12.3f}{peaks[1]:>10.3f}")


if __name__ == "__main__":
    approximation_errors()
    line_drift()
