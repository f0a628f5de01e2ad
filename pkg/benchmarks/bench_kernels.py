"""Compare the numba and numpy/scipy marching kernels.

    python benchmarks/bench_kernels.py --n 199 --steps 2000 --repeats 5

Both paths are imported directly, so the environment flag does not matter
here.  The first numba call (compilation) is timed separately.
"""

import argparse
import json
import time

import numpy as np

from bangbang_heat import _kernels as K


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run(n=199, steps=2000, repeats=5, seed=0):
    rng = np.random.default_rng(seed)
    h = 1.0 / (n + 1)
    dt = 1e-4
    extra = np.zeros((steps, n))
    src = rng.standard_normal((steps, n))
    z0 = rng.standard_normal(n)
    bg = np.zeros((steps, n))
    args_f = (K.KIND_CUBIC, 3.0, np.zeros(2), np.zeros(2))
    rows = []

    cases = {
        "linear": (
            lambda: K.march_linear_numba(extra, src, z0, dt, h, 1),
            lambda: K.march_linear_numpy(extra, src, z0, dt, h, 1),
        ),
        "semilinear_cubic": (
            lambda: K.march_semilinear_numba(*args_f, bg, src, z0, dt, h, 1e12),
            lambda: K.march_semilinear_numpy(*args_f, bg, src, z0, dt, h, 1e12),
        ),
    }
    for name, (fast, slow) in cases.items():
        t0 = time.perf_counter()
        fast()
        first = time.perf_counter() - t0
        t_nb = _best(fast, repeats)
        t_np = _best(slow, max(1, repeats // 2))
        a, b = fast(), slow()
        a = a[0] if isinstance(a, tuple) else a
        b = b[0] if isinstance(b, tuple) else b
        rows.append({
            "kernel": name, "n": n, "steps": steps, "first_call_s": first, "numba_s": t_nb,
            "numpy_s": t_np, "speedup": t_np / t_nb, "max_abs_diff": float(np.max(np.abs(a - b))),
        })
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=199)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print rows as JSON")
    args = ap.parse_args(argv)
    rows = run(args.n, args.steps, args.repeats)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'compile [s]':>13}{'max diff':>11}")
    for r in rows:
        print(f"{r['kernel']:<18}{r['numba_s']:>12.4f}{r['numpy_s']:>12.4f}{r['speedup']:>10.1f}"
              f"{r['first_call_s']:>13.2f}{r['max_abs_diff']:>11.1e}")


if __name__ == "__main__":
    main()
