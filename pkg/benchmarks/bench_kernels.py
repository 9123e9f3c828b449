"""Compare the compiled kernels against the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--m 9000] [--repeat 5]

Prints the best-of-``repeat`` wall time per kernel and backend, and the
speedup of the compiled version.
"""

import argparse
import time

import numpy as np

from hlis import _fallback, get_setting, simulate_dataset

try:
    from hlis import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_time(fn, repeat):
    out = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out = min(out, time.perf_counter() - t0)
    return out


def cases(m, K):
    p = get_setting(1 if K == 2 else 7).params(5)
    z = simulate_dataset(p, m, 0).z
    logf = p.log_emissions(z)
    log_pi, log_c, log_A, log_B = p.log_arrays()
    S = p.S
    la = _fallback.forward_log(logf, log_pi, log_c, log_A, log_B, S)
    lb = _fallback.backward_log(logf, log_A, log_B, S)
    w = np.random.default_rng(1).random(m)
    q = z[: min(m, 2000)].copy()
    return {
        f"forward K={K}": lambda b: b.forward_log(logf, log_pi, log_c, log_A, log_B, S),
        f"backward K={K}": lambda b: b.backward_log(logf, log_A, log_B, S),
        f"transition stats K={K}": lambda b: b.transition_stats(la, lb, logf, log_A, log_B, S),
        f"kde {m}x{len(q)}": lambda b: b.kde_direct(z, w, 0.2, q),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=9000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not available; only the fallback can run")
    print(f"{'kernel':<28}{'numpy (s)':>12}{'cython (s)':>12}{'speedup':>10}")
    seen = set()
    for K in (2, 3):
        for name, fn in cases(args.m, K).items():
            if name in seen:
                continue
            seen.add(name)
            t_py = best_time(lambda: fn(_fallback), args.repeat)
            if _kernels is None:
                print(f"{name:<28}{t_py:>12.4f}{'-':>12}{'-':>10}")
                continue
            t_c = best_time(lambda: fn(_kernels), args.repeat)
            print(f"{name:<28}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
