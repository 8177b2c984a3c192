"""Compare the numba and numpy kernel sets.

Each backend runs in its own interpreter because the choice is made at import
time from ``LORENTZLAB_NUMBA``.  Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from lorentzlab import _kernels, get_chart, ell_shooting, integrate
from lorentzlab import pdalembert as pd

repeat = int(sys.argv[1])
ds = get_chart("desitter2d")
mink = get_chart("minkowski2d")
rng = np.random.default_rng(0)

def best(fn):
    fn()  # warm-up (compilation, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)

def geodesics():
    for k in range(50):
        integrate(ds, [0.0, 0.0], [1.0, 0.5 * np.sin(k)], 2.0, tol=1e-10)

def shooting():
    for k in range(20):
        ell_shooting(ds, [0.0, 0.0], [1.5, 0.6 * np.cos(k)])

G = np.broadcast_to(np.diag([1.0, -1.0]), (20000, 2, 2)).copy()
d = np.column_stack([rng.uniform(0.5, 1, 20000), rng.uniform(-0.4, 0.4, 20000)])
def action():
    _kernels.action_terms(G, d, 1e-10)

axes = pd.grid_axes([[-0.2, 0.2], [-0.2, 0.2]], [41, 41])
const = lambda x: np.array([1.0, 0.05])
def frozen():
    pd.frozen_coefficients(mink, const, const, axes, 0.5)

coeffs = pd.frozen_coefficients(mink, const, const, axes, 0.5)
def assemble():
    pd.assemble_operator(coeffs)

out = {"backend": _kernels.backend()}
for name, fn in [("geodesics_ds_x50", geodesics), ("shooting_ds_x20", shooting),
                 ("action_terms_20k", action), ("frozen_bracket_41x41", frozen),
                 ("fv_assemble_41x41", assemble)]:
    out[name] = best(fn)
print(json.dumps(out))
"""


def run(flag: str, repeat: int) -> dict:
    env = dict(os.environ, LORENTZLAB_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print raw JSON")
    args = ap.parse_args(argv)
    nb, np_ = run("1", args.repeat), run("0", args.repeat)
    if args.json:
        print(json.dumps({"numba": nb, "numpy": np_}, indent=2))
        return 0
    print(f"{'kernel':<24}{'numba [ms]':>12}{'numpy [ms]':>12}{'speed-up':>10}")
    for key in nb:
        if key == "backend":
            continue
        a, b = 1e3 * nb[key], 1e3 * np_[key]
        print(f"{key:<24}{a:>12.2f}{b:>12.2f}{b / a:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
