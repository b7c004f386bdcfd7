"""Time the training kernels with and without numba.

Each backend runs in its own subprocess because the backend is chosen at
import time from ``REPDYN_DISABLE_NUMBA``; calling ``.py_func`` in-process
would still reach compiled inner kernels. The first numba call (compilation
or cache load) is excluded from the timings.

Usage::

    python3 benchmarks/bench_kernels.py [--states 50] [--steps 20000] [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from repdyn import kernels
from repdyn._accel import backend_name
from repdyn.mdp import random_reversible_mdp

S, steps, repeats = (int(a) for a in sys.argv[1:4])
m = random_reversible_mdp(0, S)
L, xi = np.ascontiguousarray(m.bellman), np.ascontiguousarray(m.state_weights)
G = np.eye(S)
phi0 = np.random.default_rng(0).standard_normal((S, 3)) / np.sqrt(S)
W0 = np.zeros((3, S))

def implicit(n):
    return kernels.implicit_segment(phi0.copy(), L, G, xi, 0.08, n, True, False, 0.05, 1e12)

def coupled(n):
    return kernels.coupled_segment(phi0.copy(), W0.copy(), L, G, xi, 0.01, n, True, False, 1.0)

out = {"backend": backend_name()}
for name, fn in (("implicit_td", implicit), ("coupled_td", coupled)):
    fn(1)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(steps)
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(disable, states, steps, repeats):
    env = dict(os.environ, REPDYN_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(states), str(steps), str(repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--states", type=int, default=50)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    fast = run_backend(False, args.states, args.steps, args.repeats)
    slow = run_backend(True, args.states, args.steps, args.repeats)
    print(f"S={args.states} steps={args.steps} (best of {args.repeats})")
    print(f"{'kernel':<14}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for key in ("implicit_td", "coupled_td"):
        print(f"{key:<14}{fast[key]:>11.3f}s{slow[key]:>11.3f}s{slow[key] / fast[key]:>9.1f}x")


if __name__ == "__main__":
    main()
