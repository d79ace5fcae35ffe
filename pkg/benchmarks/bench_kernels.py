"""Time the hot kernels on the numba and numpy backends.

The backend is fixed at import time, so each backend runs in its own
subprocess.  Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--quick]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

CASES = {
    "ou_path 1e6 steps": "ou_engine.ou_values(*rng.stream_key(1, 0), 10**6, 1e-3)",
    "sup_ensemble 20 x t=100": "ou_engine.sup_ensemble(100.0, 1e-3, 1, 20)",
    "coupling 10 x t=400": "excursion.coupling_ensemble([100, 400], 1, 10)",
    "walk_max 200 x n=1e4": "iid_max.walk_max_ensemble(10**4, iid_max.IncrementDistribution.std_normal(), 1, 200)",
    "lacunary 200 x n=1e3": "lacunary.lacunary_ensemble(lacunary.FrequencySequence.geometric(2), 1000, 1, 200)",
    "max_quantile 1e4": "special_fn.max_quantile_exact(10**8, np.linspace(1e-4, 1 - 1e-4, 10**4))",
}
QUICK = {"ou_path 1e6 steps", "walk_max 200 x n=1e4", "max_quantile 1e4"}

CHILD = r"""
import json, sys, time
import numpy as np
from oumaxlab import excursion, iid_max, lacunary, ou_engine, rng, special_fn
from oumaxlab._accel import BACKEND
cases, repeat = json.loads(sys.argv[1]), int(sys.argv[2])
out = {"backend": BACKEND}
for name, expr in cases.items():
    eval(expr)  # warm-up (compilation on the numba side)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        eval(expr)
        best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps(out))
"""


def run_backend(disable: bool, cases: dict, repeat: int) -> dict:
    env = dict(os.environ, OUMAXLAB_DISABLE_NUMBA="1" if disable else "0")
    proc = subprocess.run([sys.executable, "-c", CHILD, json.dumps(cases), str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="only the cheap cases")
    args = ap.parse_args(argv)
    cases = {k: v for k, v in CASES.items() if not args.quick or k in QUICK}
    t0 = time.perf_counter()
    nb = run_backend(False, cases, args.repeat)
    np_ = run_backend(True, cases, args.repeat)
    print(f"{'kernel':28s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s}")
    for name in cases:
        print(f"{name:28s} {nb[name]:11.4f} {np_[name]:11.4f} {np_[name] / nb[name]:8.1f}")
    print(f"(backends: {nb['backend']} / {np_['backend']}; total {time.perf_counter() - t0:.1f} s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
