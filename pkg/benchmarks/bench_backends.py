#!/usr/bin/env python3
"""Compare the numba kernels against their pure-numpy fallbacks.

Usage:
    python benchmarks/bench_backends.py [--repeat 20]

Kernel timings call both variants directly.  The end-to-end row trains one
PEMS08-sized batch (B=32, N=170, T_h=T_p=12, default widths) in a subprocess per
backend, since the backend is chosen from STLINEAR_NO_NUMBA at import time.
First numba calls compile; the warm-up run is excluded.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from stlinear import kernels
from stlinear._accel import HAVE_NUMBA


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


STEP = r"""
import json, time, numpy as np
from stlinear import kernels
from stlinear.model import ModelConfig, STLinear
cfg = ModelConfig(T_h=12, T_p=12, N=170, N_d=288, kernel=REPLACE_K)
m = STLinear(cfg)
r = np.random.default_rng(0)
X = r.normal(size=(32, 170, 12))
slots = tuple(r.integers(0, n, 32) for n in (288, 7, 288, 7))
G = r.normal(size=(32, 170, 12))
def step():
    m.forward(X, slots); m.backward(G); m.params.zero_grad()
step()
ts = []
for _ in range(REPLACE_R):
    t = time.perf_counter(); step(); ts.append(time.perf_counter() - t)
print(json.dumps({"backend": kernels.BACKEND, "seconds": min(ts)}))
"""


def end_to_end(no_numba, repeat, k):
    env = {**os.environ, "STLINEAR_NO_NUMBA": "1" if no_numba else "0"}
    code = STEP.replace("REPLACE_K", str(k)).replace("REPLACE_R", str(repeat))
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--kernel", type=int, default=25, help="moving-average width for the kernel rows")
    args = ap.parse_args()
    if not HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    r = np.random.default_rng(0)
    hist = r.normal(size=(32, 170, 48))
    pre = r.normal(size=(32 * 170, 160))
    W, b, X = r.normal(size=(170, 32, 12)), r.normal(size=(170, 32)), r.normal(size=(32, 170, 12))
    G = r.normal(size=(32, 170, 32))
    k = args.kernel
    cases = [
        ("moving_average (32x170x48)", lambda: kernels.moving_average_rows_numpy(hist, k),
         lambda: kernels.moving_average_rows_numba(hist, k)),
        ("moving_average_adjoint", lambda: kernels.moving_average_adjoint_rows_numpy(hist, k),
         lambda: kernels.moving_average_adjoint_rows_numba(hist, k)),
        ("gelu (5440x160)", lambda: kernels.gelu_numpy(pre), lambda: kernels.gelu_numba(pre)),
        ("gelu_grad (5440x160)", lambda: kernels.gelu_grad_numpy(pre), lambda: kernels.gelu_grad_numba(pre)),
        ("node_affine (N=170, 32x12)", lambda: kernels.node_affine_numpy(W, b, X),
         lambda: kernels.node_affine_numba(W, b, X)),
        ("node_affine_grad", lambda: kernels.node_affine_grad_numpy(X, G),
         lambda: kernels.node_affine_grad_numba(X, G)),
    ]
    print(f"{'kernel':34s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, f_np, f_nb in cases:
        t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:34s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:7.2f}x")

    e_np = end_to_end(True, max(3, args.repeat // 4), 3)
    e_nb = end_to_end(False, max(3, args.repeat // 4), 3)
    print(f"{'train step (fwd+bwd, B=32, N=170)':34s} {e_np['seconds'] * 1e3:10.3f} "
          f"{e_nb['seconds'] * 1e3:10.3f} {e_np['seconds'] / e_nb['seconds']:7.2f}x")


if __name__ == "__main__":
    main()
