"""Timing comparison of the compiled and pure-Python compute backends.

Run:  python3 benchmarks/bench_kernels.py [--sizes 64,128] [--repeats 5]

Times the three hot kernels (depthwise 3x3 convolution, fused forward
step, fused backward step) on square grids with the default channel and
hidden widths, plus a short end-to-end rollout, and prints per-call
medians with the speedup of the compiled path over the reference.
"""

import argparse
import time

import numpy as np

from tenca import backends, core, rng


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return sorted(times)[len(times) // 2]


def _problem(size, d=24, hidden=128, seed=0):
    gen = rng.spawn_numpy_rng(seed, 0xBE7C)
    state = gen.uniform(0.0, 1.0, (size, size, d))
    params = core.ModelParams.random(d, hidden, seed=seed)
    mask = (gen.uniform(0.0, 1.0, (size, size)) < 0.5).astype(np.uint8)
    g_out = gen.standard_normal((size, size, d))
    return state, params, mask, g_out


def bench_backend(impl, size, repeats):
    state, p, mask, g_out = _problem(size)
    grads = [np.zeros_like(a) for a in p.arrays()]

    def fwd():
        impl.step_forward(state, p.kernel_a, p.kernel_b, p.w1, p.b1,
                          p.w2, p.b2, mask, 1.0)

    def bwd():
        impl.step_backward(state, p.kernel_a, p.kernel_b, p.w1, p.b1,
                           p.w2, p.b2, mask, 1.0, g_out, *grads)

    rows = {
        "depthwise3x3": _median_time(
            lambda: impl.depthwise3x3(state, p.kernel_a), repeats),
        "step_forward": _median_time(fwd, repeats),
        "step_backward": _median_time(bwd, repeats),
    }

    grid = core.init_state(state[:, :, 0], p.channels)
    rows["rollout_16"] = _median_time(
        lambda: core.rollout(grid, p, 16, [16], (0, 0, 0)), max(1, repeats // 2))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="64,128",
                    help="comma-separated square grid sizes")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    available = backends.available()
    if "native" not in available:
        print("note: compiled backend not built; timing the reference only")

    results = {}
    active_before = backends.active_name()
    try:
        for name in available:
            backends.use(name)
            results[name] = {size: bench_backend(backends.active(), size,
                                                 args.repeats)
                             for size in sizes}
    finally:
        backends.use(active_before)

    kernels = ["depthwise3x3", "step_forward", "step_backward", "rollout_16"]
    for size in sizes:
        print(f"\n{size}x{size} grid, d=24, hidden=128 (median of "
              f"{args.repeats}):")
        header = f"  {'kernel':<16}" + "".join(f"{n:>12}" for n in results)
        if len(results) == 2:
            header += f"{'speedup':>10}"
        print(header)
        for k in kernels:
            vals = [results[n][size][k] for n in results]
            line = f"  {k:<16}" + "".join(f"{v * 1e3:>10.2f}ms" for v in vals)
            if len(vals) == 2 and vals[0] > 0:
                slow, fast = max(vals), min(vals)
                ratio = slow / fast if fast > 0 else float("inf")
                line += f"{ratio:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
