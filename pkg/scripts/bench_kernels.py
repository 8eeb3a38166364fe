"""Benchmark the hot kernels against their pure-numpy fallbacks.

The backend is picked once at import time (``MARTINLAB_NO_NUMBA``), so the
script re-runs itself in a subprocess per backend and compares the results.
Each kernel reports the first call (numba pays compilation there) and the
best of the remaining repeats.

Usage::

    python3 scripts/bench_kernels.py
    python3 scripts/bench_kernels.py --depth 11 --repeat 7
"""

import argparse
import json
import os
import subprocess
import sys
import time

KERNELS = [
    "tree_structure",
    "tree_moves",
    "conv_step",
    "radial_step",
    "cg_green_row",
    "lanczos_extreme",
]


def _time_calls(fn, repeat):
    """(first call, best of the rest) in seconds; the rest is never empty."""
    t0 = time.perf_counter()
    fn()
    first = time.perf_counter() - t0
    best = float("inf")
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return first, best


def run_worker(args):
    import numpy as np

    from martinlab import groups, kernels, measures
    from martinlab._accel import backend_name

    spec = groups.GroupSpec.parse("F_2")
    big = groups.ball(spec, args.depth)
    small = groups.ball(spec, args.cg_depth)
    mu = measures.make_measure(spec, "srw")

    offsets = np.asarray(big.offsets, dtype=np.int64)
    inv = np.asarray(big._inv, dtype=np.int32)
    last, parent = kernels.tree_structure(offsets, big.s, inv)

    moves_big, masses_big, lazy_big = measures.support_moves(big, mu)
    moves_small, masses_small, lazy_small = measures.support_moves(small, mu)
    vals = np.zeros(big.size, dtype=np.float64)
    vals[0] = 1.0
    radial = np.zeros(args.radial_len, dtype=np.float64)
    radial[0] = 1.0
    rhs = np.zeros(small.size, dtype=np.float64)
    rhs[0] = 1.0

    def bench_tree_structure():
        kernels.tree_structure(offsets, big.s, inv)

    def bench_tree_moves():
        kernels.tree_moves(offsets, big.s, inv, last, parent)

    def bench_conv_step():
        v = vals
        for _ in range(args.conv_iters):
            v, _ = kernels.conv_step(v, moves_big, masses_big, lazy_big)

    def bench_radial_step():
        v = radial
        for _ in range(args.radial_iters):
            v, _ = kernels.radial_step(v, 0.75, 0.25)

    def bench_cg():
        kernels.cg_green_row(moves_small, masses_small, 0.5, rhs,
                             lazy_mass=lazy_small)

    def bench_lanczos():
        kernels.lanczos_extreme(moves_small, masses_small, small.size, 60,
                                lazy_mass=lazy_small)

    benches = {
        "tree_structure": bench_tree_structure,
        "tree_moves": bench_tree_moves,
        "conv_step": bench_conv_step,
        "radial_step": bench_radial_step,
        "cg_green_row": bench_cg,
        "lanczos_extreme": bench_lanczos,
    }
    timings = {}
    for name in KERNELS:
        first, best = _time_calls(benches[name], args.repeat)
        timings[name] = {"first": first, "best": best}
    print(json.dumps({
        "backend": backend_name(),
        "ball_size": big.size,
        "cg_size": small.size,
        "timings": timings,
    }))


def run_backend(no_numba, argv):
    env = dict(os.environ)
    if no_numba:
        env["MARTINLAB_NO_NUMBA"] = "1"
    else:
        env.pop("MARTINLAB_NO_NUMBA", None)
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker"] + argv,
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--depth", type=int, default=10,
                    help="F_2 ball depth for tree/conv kernels (default 10)")
    ap.add_argument("--cg-depth", type=int, default=8,
                    help="F_2 ball depth for cg/lanczos (default 8)")
    ap.add_argument("--conv-iters", type=int, default=30,
                    help="convolution steps per timed call (default 30)")
    ap.add_argument("--radial-len", type=int, default=200_000,
                    help="radial vector length (default 200000)")
    ap.add_argument("--radial-iters", type=int, default=200,
                    help="radial steps per timed call (default 200)")
    ap.add_argument("--repeat", type=int, default=5,
                    help="timed repeats after the first call (default 5)")
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)

    if args.worker:
        run_worker(args)
        return 0

    passthrough = []
    for name in ("depth", "cg_depth", "conv_iters", "radial_len",
                 "radial_iters", "repeat"):
        passthrough += ["--" + name.replace("_", "-"), str(getattr(args, name))]

    fast = run_backend(no_numba=False, argv=passthrough)
    slow = run_backend(no_numba=True, argv=passthrough)

    print(f"ball size {fast['ball_size']}, cg ball size {fast['cg_size']}, "
          f"repeat {args.repeat}")
    print(f"backends: {fast['backend']} vs {slow['backend']}")
    if fast["backend"] == slow["backend"]:
        print("numba unavailable; both runs used the numpy fallback")

    head = (f"{'kernel':<16} {'first[s]':>10} {'best[s]':>10} "
            f"{'fallback[s]':>12} {'speedup':>8}")
    print(head)
    print("-" * len(head))
    for name in KERNELS:
        a = fast["timings"][name]
        b = slow["timings"][name]
        speed = b["best"] / a["best"] if a["best"] > 0 else float("inf")
        print(f"{name:<16} {a['first']:>10.4f} {a['best']:>10.4f} "
              f"{b['best']:>12.4f} {speed:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
