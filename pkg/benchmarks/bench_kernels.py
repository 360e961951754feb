"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--dims 1024 2048] [--repeat 3]

Times each kernel on random data at the given dimensions, plus one
observable evaluation (ACF and OTOC) on a random unitary, with both
backends. Prints a table of best-of-N wall times in milliseconds.
"""
import argparse
import time

import numpy as np
from scipy.stats import unitary_group

import catsim.observables as obs
from catsim import _kernels_py
from catsim.kinematics import Geometry

try:
    from catsim import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def geometry_for(dim):
    # large particle N = dim/8 with three two-level scatterers
    return Geometry(dim // 8, 2, 3)


def run(dims, repeat):
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)] + ([("cython", _kernels_cy)] if _kernels_cy else [])
    rows = []
    for d in dims:
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        w = rng.normal(size=d)
        ph = np.exp(1j * rng.normal(size=d))
        g = geometry_for(d)
        W = unitary_group.rvs(d, random_state=1) if d <= 2048 else None
        for name, k in backends:
            buf = a.copy()
            rows.append((d, name, "phase_mul", best_of(lambda: k.phase_mul(buf, ph), repeat)))
            rows.append((d, name, "weighted_abs2", best_of(lambda: k.weighted_abs2(a, w, w), repeat)))
            rows.append((d, name, "weighted_trace_square", best_of(lambda: k.weighted_trace_square(a, w), repeat)))
            if W is not None:
                saved = obs.kernels
                obs.kernels = k
                try:
                    rows.append((d, name, "acf", best_of(lambda: obs.acf(W, g), repeat)))
                    rows.append((d, name, "otoc_parts", best_of(lambda: obs.otoc_parts(W, g), repeat)))
                finally:
                    obs.kernels = saved
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dims", type=int, nargs="+", default=[1024, 2048])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rows = run(args.dims, args.repeat)
    print(f"{'dim':>6} {'kernel':<22} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    table = {}
    for d, name, kern, ms in rows:
        table.setdefault((d, kern), {})[name] = ms
    for (d, kern), v in table.items():
        p, c = v.get("python"), v.get("cython")
        sp = f"{p / c:8.2f}" if c else "     n/a"
        cs = f"{c:10.2f}" if c else "       n/a"
        print(f"{d:>6} {kern:<22} {p:10.2f} {cs} {sp}")


if __name__ == "__main__":
    main()
