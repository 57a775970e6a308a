"""Time the numba and pure-numpy kernel paths side by side.

Each backend runs in its own subprocess because the switch is read at
import time. Usage: ``python3 benchmarks/bench_kernels.py [--repeat 5]``.
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, time
import numpy as np
from jsrbound import backend
from jsrbound.lmisolve import QuadConstraint, feasibility
from jsrbound.scenario import BoundsConfig, analyze
from jsrbound.specfun import inv_reg_inc_beta, reg_inc_beta
from jsrbound.sysmodel import SwitchedSystem, generate_sample, make_rng, strip_hidden

repeat = {repeat}
rng = make_rng(11)
modes = [np.array([[0.6, 0.5], [-0.3, 0.5]]), np.array([[0.4, -0.6], [0.5, 0.3]])]
sample = strip_hidden(generate_sample(SwitchedSystem.uniform(modes), 400, 1, rng))
A = rng.standard_normal((3, 3))
A *= 0.9 / max(abs(np.linalg.eigvals(A)))
X = rng.standard_normal((200, 3))
quad = [QuadConstraint(A @ x, x, 1.0) for x in X]
params = [(float(a), float(b), float(x)) for a, b, x in zip(rng.uniform(0.5, 5e3, 2000), rng.uniform(0.5, 40, 2000), rng.uniform(size=2000))]

def ibeta():
    for a, b, x in params:
        inv_reg_inc_beta(reg_inc_beta(x, a, b), a, b)

jobs = {{
    "ibeta_roundtrip_x2000": ibeta,
    "ellipsoid_feasibility_n3_k200": lambda: feasibility(quad),
    "analyze_n2_N400": lambda: analyze(sample, BoundsConfig(m_claimed=2)),
}}
t0 = time.perf_counter()
for f in jobs.values():
    f()
warm = time.perf_counter() - t0
out = {{"backend": backend(), "warmup_s": warm}}
for name, f in jobs.items():
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps(out))
"""


def run(disable, repeat):
    env = dict(os.environ)
    env.pop("JSRBOUND_DISABLE_NUMBA", None)
    if disable:
        env["JSRBOUND_DISABLE_NUMBA"] = "1"
    res = subprocess.run([sys.executable, "-c", WORKLOAD.format(repeat=repeat)], env=env, capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    print(f"{'kernel':34s} {fast['backend']:>10s} {slow['backend']:>10s} {'speedup':>8s}")
    for key in fast:
        if key in ("backend", "warmup_s"):
            continue
        print(f"{key:34s} {fast[key]:10.4f} {slow[key]:10.4f} {slow[key] / fast[key]:8.1f}x")
    print(f"first-call cost (includes numba compile or cache load): {fast['warmup_s']:.2f}s vs {slow['warmup_s']:.2f}s")


if __name__ == "__main__":
    main()
