#!/usr/bin/env python3
"""Throughput benchmark: windowed correlation and trajectory generation.

Targets (soft gates, tracked here rather than asserted in the test suite):
  - correlate 1e7 tags per channel over a +-1 us window in < 10 s
  - generate 1e8 trajectory jumps in < 60 s
"""

import argparse
import sys
import time

import numpy as np

from photonstat import CWExcitation, LevelSystem, run_trajectory
from photonstat.correlate import correlate_arrays


def poisson_stream(rng, rate_per_s, duration_s):
    gaps = rng.exponential(1e12 / rate_per_s,
                           size=int(rate_per_s * duration_s * 1.05) + 100)
    times = np.cumsum(gaps)
    return np.unique(times[times < duration_s * 1e12].astype(np.int64))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--tags", default=10_000_000, type=int)
    ap.add_argument("--rate", default=1e6, type=float, help="tags per second")
    ap.add_argument("--jumps", default=100_000_000, type=int)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    duration_s = args.tags / args.rate
    ta = poisson_stream(rng, args.rate, duration_s)
    tb = poisson_stream(rng, args.rate, duration_s)
    correlate_arrays(ta[:1000], tb[:1000], 256, 1_000_000)  # jit warm-up
    t0 = time.time()
    counts = correlate_arrays(ta, tb, 256, 1_000_000)
    t_corr = time.time() - t0
    print(f"correlate: {ta.size / 1e6:.1f}M x {tb.size / 1e6:.1f}M tags, "
          f"{counts.sum() / 1e6:.1f}M pairs, 256 ps bins, +-1 us window: "
          f"{t_corr:.2f} s  [gate 10 s: {'ok' if t_corr < 10 else 'MISS'}]")

    gamma = 1.0 / 3.5e-9
    sys2 = LevelSystem(rates=np.array([[0.0, gamma], [gamma, 0.0]]),
                       radiative=(1, 0))
    run_trajectory(sys2, CWExcitation(pump_rate=gamma), 1e-6,
                   np.random.default_rng(1))  # warm-up
    duration = args.jumps / gamma  # pump = decay: ~one jump per 1/gamma
    t0 = time.time()
    _, _, n_jumps = run_trajectory(sys2, CWExcitation(pump_rate=gamma),
                                   duration, np.random.default_rng(2))
    t_sim = time.time() - t0
    print(f"trajectory: {n_jumps / 1e6:.0f}M jumps: {t_sim:.2f} s  "
          f"[gate 60 s: {'ok' if t_sim < 60 else 'MISS'}]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
