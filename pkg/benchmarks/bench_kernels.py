"""Compare the numba and numpy backends of the hot kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--size 256]

Each kernel is run once per backend to warm up (this triggers JIT
compilation), then timed ``--repeat`` times; the best time is reported
together with the speedup and the maximum difference between backends.
"""

import argparse
import time

import numpy as np

from flmicro import _kernels

from flmicro.microlocal import parabola_points, worked_example_set


def cases(size: int, rng: np.random.Generator) -> dict:
    ax = np.arange(-size // 2, size // 2, dtype=float)
    gens = parabola_points(np.sqrt(size / 2) - 1)
    thr = rng.uniform(4, 60, size=len(gens))

    vals = rng.normal(size=(size // 2, size // 2))
    rad = rng.uniform(0.5, 4, size=vals.shape)

    P = size
    xs = rng.normal(size=(P, 2))
    xis = rng.normal(size=(P, 2)) * 10
    avals = rng.normal(size=(P, P)) + 1j * rng.normal(size=(P, P))
    fhat = rng.normal(size=P) + 1j * rng.normal(size=P)

    K = size
    F = rng.normal(size=(K, K)) + 0j
    f = rng.normal(size=(K, K)) + 0j
    zidx = (np.arange(K)[:, None] - np.arange(K)[None, :] + K // 2)
    zidx = np.where((zidx >= 0) & (zidx < K), zidx, -1)
    g = rng.normal(size=K) + 0j

    X = worked_example_set(0.5)
    s = np.linspace(0, 2 * np.pi, 512, endpoint=False)
    sph = np.stack([np.cos(s), np.sign(np.sin(s)) * np.sqrt(np.abs(np.sin(s)))], axis=-1)
    etas = sph[X(sph)]
    pts = rng.normal(size=(size * 16, 2)) * [40, 6]

    return {
        "stamp_mask": lambda: _kernels.stamp_mask([ax, ax], gens, thr, [1, 2]),
        "mollify": lambda: _kernels.mollify(vals, rad, (1.0, 1.0)),
        "direct_quantize": lambda: _kernels.direct_quantize(xs, xis, avals, fhat),
        "kernel_sum": lambda: _kernels.kernel_sum(F, f, zidx, g),
        "cone_distance": lambda: _kernels.cone_distance(pts, etas, (1, 2), candidates=32)[0],
    }


def best_time(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()
    if not _kernels._HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    table = cases(args.size, np.random.default_rng(0))
    print(f"{'kernel':<16} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max diff':>9}")
    for name, fn in table.items():
        times, outs = {}, {}
        for use in (True, False):
            _kernels.USE_NUMBA = use
            outs[use] = np.asarray(fn())
            times[use] = best_time(fn, args.repeat)
        diff = float(np.max(np.abs(outs[True].astype(complex) - outs[False].astype(complex))))
        print(f"{name:<16} {times[True]:>10.4f} {times[False]:>10.4f} {times[False] / times[True]:>8.1f} "
              f"{diff:>9.1e}")


if __name__ == "__main__":
    main()
