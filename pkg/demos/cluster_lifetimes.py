"""Clusters appearing and disappearing while a terminal moves.

Runs the birth-death process for a moving transmitter, prints the alive count
over time, and then sweeps a 128-element array to show how far along it a
typical cluster stays visible.

    python demos/cluster_lifetimes.py
"""

import numpy as np

from nsgbsm.evolution import (ClusterLedger, EvolutionParams, SideState, evolve,
                              initial_ledger, visibility_regions)
from nsgbsm.geometry import SPEED_OF_LIGHT, ArrayGeometry

params = EvolutionParams(lambda_g=81.56, lambda_r=6.79, dc_array=9.93, dc_time=30.0)
rng = np.random.default_rng(1)

single = ArrayGeometry(1)
ledger = ClusterLedger(params, single, single)
ledger.populate(rng)
print(f"expected alive clusters: {params.mean_cluster_count:.2f}")
print("time [s]  alive  born so far")
for step in range(1, 501):
    evolve(ledger, 0.01, rng, SideState(speed=10.0))
    if step % 50 == 0:
        print(f"{ledger.time:8.2f}  {ledger.count_alive():5d}  {len(ledger.clusters):11d}")

spacing = SPEED_OF_LIGHT / 2.6e9 / 2
arr = ArrayGeometry(128, spacing)
lengths = []
for _ in range(50):
    led = initial_ledger(params, arr, single, rng)
    lengths.extend(v for _, v in visibility_regions(led))
lengths = np.array(lengths)
print(f"\nvisibility along a {arr.aperture:.2f} m array over {lengths.size} clusters:")
for q in (0.1, 0.5, 0.9):
    print(f"  {int(q * 100):2d}th percentile {np.quantile(lengths, q):.2f} m")
print(f"  share seen by the whole array {np.mean(lengths >= 128 * spacing - 1e-9):.2f}")
