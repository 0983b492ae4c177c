"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two hot paths (Neumann shooting for the resonance defect, P1
element-matrix assembly) with both implementations and checks that they
agree.  Run as::

    python3 benchmarks/bench_kernels.py

Setting CURVEWELL_NO_EXT only changes which implementation the package
dispatches to; here both modules are imported directly so a single run
compares them side by side.
"""

import argparse
import time

import numpy as np

from curvewell._kernels import fallback

try:
    from curvewell._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_shoot(impl, nsteps, repeat):
    n = np.linspace(-1.0, 1.0, 2 * nsteps + 1)
    v_stage = -0.25 * np.pi ** 2 * (np.abs(n) <= 1.0)
    return timeit(lambda: impl.shoot_defect(v_stage, 1.0), repeat)


def bench_assemble(impl, nt, repeat):
    rng = np.random.default_rng(0)
    base = rng.uniform(-3.0, 3.0, (nt, 1, 2))
    xy = base + rng.uniform(0.05, 0.3, (nt, 3, 2))
    xy[:, 0] = base[:, 0]
    lam = np.array([[2 / 3, 1 / 6, 1 / 6],
                    [1 / 6, 2 / 3, 1 / 6],
                    [1 / 6, 1 / 6, 2 / 3]])
    w = np.full(3, 1.0 / 3.0)
    cvals = rng.standard_normal((nt, 3))
    return timeit(lambda: impl.assemble_p1(xy, cvals, lam, w), repeat)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nsteps", type=int, default=4096,
                    help="RK4 steps for the shooting benchmark")
    ap.add_argument("--nt", type=int, default=200_000,
                    help="triangles for the assembly benchmark")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    impls = [("python", fallback)]
    if _core is not None:
        impls.append(("cython", _core))
    else:
        print("compiled extension unavailable; timing fallback only")

    results = {}
    for label, impl in impls:
        t_shoot, out_shoot = bench_shoot(impl, args.nsteps, args.repeat)
        t_asm, out_asm = bench_assemble(impl, args.nt, args.repeat)
        results[label] = (t_shoot, out_shoot, t_asm, out_asm)
        print(f"{label:>7}: shoot_defect({args.nsteps} steps) "
              f"{1e3 * t_shoot:8.3f} ms   assemble_p1({args.nt} tris) "
              f"{1e3 * t_asm:8.3f} ms")

    if len(results) == 2:
        py, cy = results["python"], results["cython"]
        assert np.allclose(py[1], cy[1], rtol=1e-12), "shoot_defect mismatch"
        for a, b in zip(py[3], cy[3]):
            assert np.allclose(a, b, rtol=1e-10), "assemble_p1 mismatch"
        print(f"speedup: shoot_defect x{py[0] / cy[0]:.1f}, "
              f"assemble_p1 x{py[2] / cy[2]:.1f} (outputs agree)")


if __name__ == "__main__":
    main()
