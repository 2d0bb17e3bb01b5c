"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time from SDLAB_DISABLE_NUMBA. JIT compilation is excluded by a warm-up call.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, time
import numpy as np
from sdlab import _kernels
from sdlab.drift_fields import MollifierKernel

rng = np.random.default_rng(0)
out = {"backend": _kernels.BACKEND}
repeat = REPEAT


def best(fn):
    fn()
    ts = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return min(ts)


n = 65
h = 2.0 / (n - 1)
u = rng.standard_normal((n, n, n))
b = rng.standard_normal((3, n, n, n))
out["upwind_65^3"] = best(lambda: _kernels.upwind_advection(u, b, h))

offs, w = MollifierKernel(4 * h, 3).stencil(h)
out["convolve_65^3_eps4h"] = best(lambda: _kernels.convolve_stencil(u, offs, w))

keys = _kernels.stream_keys(1, np.arange(20000, dtype=np.uint64))
params = np.array([1.0, 0.05, 0.1, 1e-3, 0.5, 20.0, 1.0, 0.02, 1e-7, 1.0])
out["paths_20000"] = best(lambda: _kernels.simulate_paths(np.array([0.5, 0.0, 0.0]), 20000,
                                                         keys, params))
print(json.dumps(out))
"""


def run_backend(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["SDLAB_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SDLAB_DISABLE_NUMBA", None)
    code = WORKER.replace("REPEAT", str(repeat))
    res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    args = ap.parse_args()

    nb = run_backend(False, args.repeat)
    np_ = run_backend(True, args.repeat)
    rows = []
    print(f"{'kernel':<24}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for key in nb:
        if key == "backend":
            continue
        sp = np_[key] / nb[key] if nb[key] > 0 else float("inf")
        rows.append({"kernel": key, "numba": nb[key], "numpy": np_[key], "speedup": sp})
        print(f"{key:<24}{nb[key]:>12.4f}{np_[key]:>12.4f}{sp:>10.1f}")
    if nb["backend"] != "numba":
        print("warning: numba unavailable, both columns used the numpy path")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"backends": [nb["backend"], np_["backend"]], "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
