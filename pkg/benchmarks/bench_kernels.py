"""Compare the compiled and pure-Python kernels (and the per-step API) on a logistic problem.

    python benchmarks/bench_kernels.py --n 5000 --d 50 --passes 3
"""

import argparse
import time

import numpy as np

from ncsaga.data import make_synthetic_classification
from ncsaga.kernels import _python
from ncsaga.oracle import IfoCounter
from ncsaga.optim import RunStreams, SgdSchedule, reg_saga_step, saga_init
from ncsaga.problems import LinearModelProblem, RegularizerParams

try:
    from ncsaga.kernels import _fast
except ImportError:
    _fast = None


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--d", type=int, default=50)
    ap.add_argument("--passes", type=float, default=2.0, help="SAGA steps as a multiple of n")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--step-api", action="store_true", help="also time the per-step Python API (slow)")
    args = ap.parse_args()

    ds = make_synthetic_classification(args.n, args.d, separation=2.0, seed=0)
    prob = LinearModelProblem(ds.to_dense(), ds.labels, RegularizerParams())
    steps = int(args.passes * args.n)
    eta = 0.1
    sched = SgdSchedule(eta)
    idx_sgd = RunStreams(0).index_stream(args.n).take(steps)
    init = saga_init(prob, np.zeros(args.d), eta, RunStreams(0).index_stream(args.n), IfoCounter(), regularized=True)
    idx_saga = RunStreams(1).index_stream(args.n).take(2 * steps)

    def sgd(mod):
        x = np.zeros(args.d)
        mod.sgd_linear(prob.features, prob.labels, x, idx_sgd, sched.etas(0, steps, args.n), 0.001, 1.0)
        return x

    def saga(mod):
        x, s, g = np.zeros(args.d), init.scalars.copy(), init.gsum.copy()
        mod.reg_saga_linear(prob.features, prob.labels, x, s, g, idx_saga, eta, 0.001, 1.0)
        return x

    backends = [("python", _python)] + ([("cython", _fast)] if _fast is not None else [])
    rows = []
    for kernel, fn in (("sgd", sgd), ("reg-saga", saga)):
        results = {name: fn(mod) for name, mod in backends}
        for name, mod in backends:
            t = _best_of(lambda: fn(mod), args.repeat)
            rows.append((kernel, name, t, steps / t))
        if len(results) == 2:
            diff = float(np.max(np.abs(results["python"] - results["cython"])))
            print(f"{kernel}: max |python - cython| = {diff:.3e}")

    if args.step_api:
        def api():
            st = saga_init(prob, np.zeros(args.d), eta, RunStreams(1).index_stream(args.n), IfoCounter(),
                           regularized=True)
            for _ in range(steps):
                reg_saga_step(st, prob)

        t = _best_of(api, 1)
        rows.append(("reg-saga", "step-api", t, steps / t))

    print(f"\nn={args.n} d={args.d} steps={steps}")
    print(f"{'kernel':<10}{'backend':<10}{'seconds':>10}{'steps/s':>14}{'speedup':>10}")
    base = {k: t for k, b, t, _ in rows if b == "python"}
    for kernel, name, t, rate in rows:
        print(f"{kernel:<10}{name:<10}{t:>10.4f}{rate:>14.0f}{base[kernel] / t:>10.1f}x")


if __name__ == "__main__":
    main()
