#!/usr/bin/env python
"""
Time the compiled RK4 kernels against the pure-numpy integrators.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --steps 2000 --repeat 5
"""
import argparse
import time

import numpy as np

from ttfs.dynamics import (DisturbanceMode, DisturbanceSpec, SystemParams, advance_coupled,
                           advance_reel)
from ttfs.reference import ReferenceParams, satellite_reference, tether_reference
from ttfs._accel import NUMBA_AVAILABLE


def run(kind, use_numba, steps, dt=0.1, substeps=5):
    p = SystemParams()
    rp = ReferenceParams()
    dist = DisturbanceSpec(DisturbanceMode.STANDARD)
    eta = tether_reference(0.0, rp)
    x = np.concatenate([satellite_reference(0.0, rp), eta])
    u = np.zeros(6)
    nu = np.zeros(3)
    t0 = time.perf_counter()
    for k in range(steps):
        if kind == "coupled":
            x = advance_coupled(x, u, nu, k * dt, dt, substeps, dist, p, use_numba=use_numba)
        else:
            eta = advance_reel(eta, nu, k * dt, dt, substeps, dist, p, use_numba=use_numba)
    return time.perf_counter() - t0, (x if kind == "coupled" else eta)


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--steps", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    if not NUMBA_AVAILABLE:
        print("numba not installed; only the numpy path can be timed")
    # the uncontrolled formation is chaotic, so paths are compared after one step only
    print(f"{'kernel':10s} {'numpy (s)':>10s} {'numba (s)':>10s} {'speedup':>8s} {'1-step diff':>11s}")
    for kind in ("reel", "coupled"):
        run(kind, NUMBA_AVAILABLE, 2)  # compile
        t_np = min(run(kind, False, args.steps)[0] for _ in range(args.repeat))
        _, ref = run(kind, False, 1)
        if NUMBA_AVAILABLE:
            t_nb = min(run(kind, True, args.steps)[0] for _ in range(args.repeat))
            _, got = run(kind, True, 1)
            diff = float(np.max(np.abs(got - ref)))
            print(f"{kind:10s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:11.3e}")
        else:
            print(f"{kind:10s} {t_np:10.4f} {'-':>10s} {'-':>8s} {'-':>11s}")


if __name__ == "__main__":
    main()
