"""Compare the compiled scan kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--records 40000] [--repeat 5]

Reports the best-of-N wall time per kernel and for a whole bias scan, and
checks that both backends return the same numbers.
"""
import argparse
import time

import numpy as np

from ugdp import biasscan
from ugdp._core import scan_py

try:
    from ugdp._core import _scan as compiled
except ImportError:  # extension not built
    compiled = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n, seed=0):
    g = np.random.default_rng(seed)
    p = g.uniform(0.01, 0.9, n)
    y_sum = float((g.random(n) < 1.3 * p).sum())
    k = 12
    values = np.sort(g.integers(0, k, n))
    counts = np.bincount(values, minlength=k)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    y = (g.random(n) < 1.3 * p).astype(np.float64)
    y_cells = np.bincount(values, weights=y, minlength=k)
    ends = np.cumsum(counts).astype(np.int64)
    y_cum = np.cumsum(y_cells)
    return {
        "fit_q": lambda m: m.fit_q(p, y_sum, 1, 1e6),
        "cell_priorities": lambda m: m.cell_priorities(p, offsets, y_cells, 1, 1e6),
        "prefix_scan": lambda m: m.prefix_scan(p, ends, y_cum, 1, 1e6),
    }


def scan_case(n, seed=0):
    from ugdp.tabular import Attribute, AttributeSchema, Dataset

    g = np.random.default_rng(seed)
    cards = [12, 4, 8, 2, 3, 3, 2, 10, 5, 2]
    rows = np.column_stack([g.integers(0, k, n) for k in cards])
    p = g.uniform(0.02, 0.5, n)
    labels = (g.random(n) < np.where(rows[:, 7] == 3, 0.6, p)).astype(np.int8)
    schema = AttributeSchema(tuple(Attribute(f"a{j}", tuple(map(str, range(k))))
                                   for j, k in enumerate(cards)), "y")
    ds = Dataset(schema, rows, labels)
    return lambda: biasscan.bias_scan(ds, p, n_restarts=3, seed=1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--records", type=int, default=40000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("numpy", scan_py)] + ([("cython", compiled)] if compiled else [])
    print(f"records={args.records} repeat={args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{name:>12}" for name, _ in backends) + "   speedup")
    for name, fn in cases(args.records).items():
        row, outs = [], []
        for _, mod in backends:
            t, out = best_of(lambda: fn(mod), args.repeat)
            row.append(t)
            outs.append(out)
        if len(outs) == 2:
            a, b = (np.asarray(o[1] if isinstance(o, tuple) else o, dtype=float) for o in outs)
            assert np.allclose(a, b, rtol=1e-9, atol=1e-12), name
        speed = f"{row[0] / row[1]:9.1f}x" if len(row) == 2 else ""
        print(f"{name:<18}" + "".join(f"{t * 1e3:10.3f}ms" for t in row) + speed)

    run = scan_case(args.records)
    row, scores = [], []
    saved = biasscan._kernels
    try:
        for _, mod in backends:
            biasscan._kernels = mod
            t, res = best_of(run, max(1, args.repeat // 2))
            row.append(t)
            scores.append(res.score)
    finally:
        biasscan._kernels = saved
    if len(scores) == 2:
        assert abs(scores[0] - scores[1]) <= 1e-9 * max(1.0, scores[0])
    speed = f"{row[0] / row[1]:9.1f}x" if len(row) == 2 else ""
    print(f"{'bias_scan (3 rst)':<18}" + "".join(f"{t * 1e3:10.1f}ms" for t in row) + speed)
    if compiled is None:
        print("compiled extension not available; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
