"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs once per backend before timing so numba compilation is not
counted.  Reports the median wall clock and the max abs difference between the
two backends' outputs.
"""

import argparse
import json
import time

import numpy as np

from brakeid import geometry, kernels


def _cases(rng):
    x = rng.standard_normal((32, 5, 102, 102))
    w = rng.standard_normal((8, 5, 3, 3))
    b = rng.standard_normal(8)
    dout = rng.standard_normal((32, 8, 102, 102))
    xd = rng.standard_normal((32, 32, 12, 12))
    wd = rng.standard_normal((64, 32, 3, 3))
    bd = rng.standard_normal(64)
    pool_in = rng.standard_normal((32, 16, 50, 50))
    g = geometry.compute_points(geometry.MIDPOINT)
    origin, scale = geometry.frame_transform(g, 204)
    centres = np.arange(204) + 0.5
    zs = origin[0] + centres / scale[0]
    ys = origin[1] + centres / scale[1]
    polys = [np.ascontiguousarray(g.groove_polygon), np.ascontiguousarray(g.seal_polygon)]
    return {
        "conv2d_forward 5->8 @102": lambda: kernels.conv2d_forward(x, w, b),
        "conv2d_backward 5->8 @102": lambda: kernels.conv2d_backward(x, w, dout),
        "conv2d_forward 32->64 @12": lambda: kernels.conv2d_forward(xd, wd, bd),
        "maxpool2d_forward @50": lambda: kernels.maxpool2d_forward(pool_in),
        "points_in_polygons @204": lambda: kernels.points_in_polygons(zs, ys, polys),
    }


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.asarray(o, dtype=np.float64).ravel() for o in out])
    return np.asarray(out, dtype=np.float64).ravel()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()

    backends = kernels.available_backends()
    cases = _cases(np.random.default_rng(0))
    rows = []
    for name, fn in cases.items():
        times, outs = {}, {}
        for be in backends:
            kernels.use_backend(be)
            outs[be] = _flat(fn())  # warm-up, includes JIT compile
            samples = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn()
                samples.append(time.perf_counter() - t0)
            times[be] = float(np.median(samples))
        diff = float(np.max(np.abs(outs["numpy"] - outs["numba"]))) if len(outs) == 2 else None
        rows.append({"kernel": name, "seconds": times, "max_abs_diff": diff})

    print(f"{'kernel':<30}" + "".join(f"{be:>12}" for be in backends) + f"{'speedup':>10}{'max diff':>12}")
    for r in rows:
        t = r["seconds"]
        speed = t["numpy"] / t["numba"] if "numba" in t else float("nan")
        diff = "n/a" if r["max_abs_diff"] is None else f"{r['max_abs_diff']:.1e}"
        print(f"{r['kernel']:<30}" + "".join(f"{t[be]:>12.4f}" for be in backends) + f"{speed:>10.2f}{diff:>12}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
