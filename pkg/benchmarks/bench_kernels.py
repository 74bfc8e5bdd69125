"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--grid 400] [--paths 100000] [--repeat 3]

Times the full grid solve, the path-simulation kernel on pre-drawn uniforms
(so stream seeding is excluded), and an end-to-end Monte Carlo estimate.
"""

import argparse
import json
import time

import numpy as np

from renewal_dividends import _kernels
from renewal_dividends.hjbgrid import GridSpec, solve_vi
from renewal_dividends.model import ConstantHazard, ErlangTwoHazard, ExponentialClaims, ModelParams
from renewal_dividends.montecarlo import SimSpec, estimate_value
from renewal_dividends.paths import Barrier, LiquidateNow


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=int, default=400, help="n_s = n_x of the solve benchmark")
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)

    params = ModelParams(p=1.0, c=0.05, T=1.0, Lambda=3.2)
    h, g = ErlangTwoHazard(4.0), ExponentialClaims(1.0)
    spec = GridSpec(args.grid, args.grid, 5.0)
    sim = SimSpec(params, h, g, Barrier(1.0))
    U = np.random.default_rng(0).random((args.paths, 64))
    poisson = ModelParams(p=1.0, c=0.05, T=1.0, Lambda=1.0)

    cases = {
        f"solve_vi {args.grid}x{args.grid} (erlang)": lambda: solve_vi(spec, params, h, g),
        f"simulate_batch {args.paths} paths (erlang, barrier)": lambda: _kernels.get().simulate_batch(U, sim, 0.0, 1.0, 0.0, 1.0),
        f"estimate_value {args.paths} paths (poisson, liquidate)": lambda: estimate_value(
            poisson, ConstantHazard(1.0), g, LiquidateNow(), 0.0, 2.0, 0.0, args.paths, 1, threads=1
        ),
    }
    results = {}
    for backend in _kernels.available():
        _kernels.set_backend(backend)
        results[backend] = {name: best_of(fn, args.repeat) for name, fn in cases.items()}
    _kernels.set_backend("auto")

    backends = sorted(results)
    print(f"{'case':<52}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in cases:
        row = f"{name:<52}" + "".join(f"{results[b][name]:>11.3f}s" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][name] / results['compiled'][name]:>11.1f}x"
        print(row)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
