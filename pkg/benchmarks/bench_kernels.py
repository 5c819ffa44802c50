#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the individual hot kernels on default-problem shapes and one full
primal-dual iteration per backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py [--nodes 210] [--steps 100] [--repeats 50]
"""

import argparse
import time

import numpy as np

from ecgi_tv import _kernels_py
from ecgi_tv.fem import TimeGrid
from ecgi_tv.pdhg import InverseProblem, PdhgParams, pdhg_solve
from ecgi_tv.transfer import TransferMatrix
from ecgi_tv.tvops import AnisotropyWeights, GradOp

try:
    from ecgi_tv import _kernels
    BACKENDS = {"numpy": _kernels_py, "cython": _kernels}
except ImportError:
    BACKENDS = {"numpy": _kernels_py}


def timeit(fn, repeats):
    fn()  # warm up
    start = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - start) / repeats


def ring_operator(n_nodes, n_steps, alpha):
    theta = 2.0 * np.pi * np.arange(n_nodes) / n_nodes
    points = 25.0 * np.column_stack((np.cos(theta), np.sin(theta)))
    segments = np.column_stack((np.arange(n_nodes), np.roll(np.arange(n_nodes), -1)))
    grid = TimeGrid.uniform(float(n_steps), n_steps)
    return GradOp.from_curve(points, segments, grid, AnisotropyWeights(1e-7, 1e-7), alpha)


def bench_kernels(n_nodes, n_steps, repeats):
    rng = np.random.default_rng(0)
    op = ring_operator(n_nodes, n_steps, 1)
    s1 = n_steps + 1
    u = rng.standard_normal((s1, n_nodes))
    gx = np.empty((s1, n_nodes))
    gy = np.empty((s1, n_nodes))
    pt = rng.standard_normal((n_steps, n_nodes))
    out_u = np.empty((s1, n_nodes))
    vals = rng.standard_normal((n_steps, n_nodes, 2, 2, 3))
    qvals = rng.standard_normal((n_steps, n_nodes, 2, 2, 3))
    w2 = op.q2_corner_weights()
    ratio = np.ones(s1)

    cases = {
        "grad_space_apply": lambda k: k.grad_space_apply(
            u, op.seg_n0, op.seg_n1, op.inv_seg_len, op.tan_x, op.tan_y, gx, gy),
        "grad_space_adjoint": lambda k: k.grad_space_adjoint(
            gx, gy, op.seg_n0, op.seg_n1, op.inv_seg_len, op.tan_x, op.tan_y, out_u),
        "grad_time_apply": lambda k: k.grad_time_apply(u, op.inv_dt, pt),
        "grad_time_adjoint": lambda k: k.grad_time_adjoint(pt, op.inv_dt, out_u),
        "clamp_rows": lambda k: k.clamp_rows(gx, ratio),
        "project_l2_rows": lambda k: k.project_l2_rows(vals.reshape(-1, 3)),
        "axpy_project_l2": lambda k: k.axpy_project_l2(
            vals.reshape(-1, 3), qvals.reshape(-1, 3), 0.5),
        "q2_scatter": lambda k: k.q2_scatter(gx, gy, pt, op.seg_n0, op.seg_n1, vals),
        "q2_gather": lambda k: k.q2_gather(vals, w2, op.seg_n0, op.seg_n1, gx, gy, pt),
        "q2_weighted_tv": lambda k: k.q2_weighted_tv(vals, w2),
    }

    print(f"\nkernel timings ({n_nodes} nodes x {n_steps} intervals, "
          f"mean of {repeats} runs)")
    header = f"{'kernel':22s}" + "".join(f"{name:>12s}" for name in BACKENDS)
    if len(BACKENDS) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for name, call in cases.items():
        times = [timeit(lambda k=kmod: call(k), repeats) for kmod in BACKENDS.values()]
        row = f"{name:22s}" + "".join(f"{t * 1e6:10.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)


def bench_solver(n_nodes, n_steps, alpha, iters):
    import os
    import subprocess
    import sys

    print(f"\nfull PDHG iterations (alpha={alpha}, {iters} iterations)")
    for name in BACKENDS:
        code = (
            "import numpy as np, time; "
            "from benchmarks.bench_kernels import ring_operator, solver_problem; "
            f"problem = solver_problem({n_nodes}, {n_steps}, {alpha}); "
            "from ecgi_tv.pdhg import pdhg_solve, PdhgParams; "
            f"start = time.perf_counter(); "
            f"pdhg_solve(problem, PdhgParams(max_iter={iters}, tol_du=1e-14, seed=0)); "
            f"dt = time.perf_counter() - start; "
            f"print(f'{{dt / {iters} * 1e3:.3f}} ms/iteration')"
        )
        env = dict(os.environ)
        env["ECGI_TV_DISABLE_EXT"] = "1" if name == "numpy" else "0"
        out = subprocess.run([sys.executable, "-c", code], capture_output=True,
                             text=True, env=env)
        tail = out.stdout.strip() or out.stderr.strip().splitlines()[-1]
        print(f"  {name:8s} {tail}")


def solver_problem(n_nodes, n_steps, alpha):
    from ecgi_tv.tvops import operator_norm

    rng = np.random.default_rng(1)
    op = ring_operator(n_nodes, n_steps, alpha)
    operator_norm(op, tol=1e-5, max_iter=5000)  # cache outside the timed loop
    n_el = 16
    a = rng.standard_normal((n_el, n_nodes)) / np.sqrt(n_nodes)
    tm = TransferMatrix(a_sigma=a, electrode_nodes=np.arange(n_el),
                        mesh_hash="", cond_hash="")
    z = rng.standard_normal(n_el * (n_steps + 1))
    return InverseProblem(transfer=tm, z=z, gradop=op)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=210)
    parser.add_argument("--steps", type=int, default=100)
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--solver-iters", type=int, default=100)
    args = parser.parse_args()

    print("available backends:", ", ".join(BACKENDS))
    bench_kernels(args.nodes, args.steps, args.repeats)
    for alpha in (1, 2):
        bench_solver(args.nodes, args.steps, alpha, args.solver_iters)


if __name__ == "__main__":
    main()
