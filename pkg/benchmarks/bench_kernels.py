"""Compiled vs pure-Python kernels on information matrices from simulated scenes.

    python benchmarks/bench_kernels.py --keyframes 20 40 80 --repeat 3
"""

import argparse
import time

import numpy as np

from vocovar import kernels
from vocovar.factors import pose_key
from vocovar.graph import build_graph, information_matrix, linearize
from vocovar.marginals import _as_csc
from vocovar.simulate import ScenarioSpec, simulate_scenario


def problem(n_kf, samples, seed):
    ds, _ = simulate_scenario(ScenarioSpec(kind="revisit", num_keyframes=n_kf, samples_per_keyframe=samples, seed=seed))
    g, x = build_graph(ds)
    Lam = information_matrix(linearize(g, x))
    perm = g.fill_reducing_order()
    P = _as_csc(Lam[perm][:, perm])
    iperm = np.empty_like(perm)
    iperm[perm] = np.arange(len(perm))
    # every pose marginal, upper triangle
    iu = np.triu_indices(6)
    rows, cols = [], []
    for k in g.pose_ids:
        idx = iperm[g.indices(pose_key(k))]
        rows.append(idx[iu[0]])
        cols.append(idx[iu[1]])
    return P, np.concatenate(rows).astype(np.int64), np.concatenate(cols).astype(np.int64)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(backend, P, rows, cols, repeat):
    n = P.shape[0]
    tol = 1e-12 * P.diagonal().max()
    t_chol, (Lp, Li, Lx, fail) = best_of(lambda: backend.cholesky_csc(n, P.indptr, P.indices, P.data, tol), repeat)
    assert fail < 0
    Lp, Li = np.asarray(Lp, np.int64), np.asarray(Li, np.int64)

    def recover():
        out = np.empty(len(rows))
        backend.recover_entries(n, Lp, Li, np.asarray(Lx), np.full(len(Lx), np.nan), {}, rows, cols, out)
        return out

    t_rec, vals = best_of(recover, repeat)
    return t_chol, t_rec, len(Lx), vals


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--keyframes", type=int, nargs="+", default=[20, 40, 80])
    ap.add_argument("--samples", type=int, default=24)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = [kernels.python_backend]
    if kernels.compiled_backend is None:
        print("compiled extension not built; timing the Python kernels only")
    else:
        backends.append(kernels.compiled_backend)

    head = f"{'keyframes':>9} {'n':>6} {'nnz(L)':>8} {'backend':>8} {'cholesky':>10} {'recovery':>10}"
    print(head)
    print("-" * len(head))
    for n_kf in args.keyframes:
        P, rows, cols = problem(n_kf, args.samples, args.seed)
        ref = None
        timings = {}
        for b in backends:
            tc, tr, nnz, vals = run(b, P, rows, cols, args.repeat)
            timings[b.BACKEND] = (tc, tr)
            if ref is None:
                ref = vals
            else:
                np.testing.assert_allclose(vals, ref, rtol=1e-10, atol=1e-300)
            print(f"{n_kf:>9} {P.shape[0]:>6} {nnz:>8} {b.BACKEND:>8} {tc * 1e3:>8.2f}ms {tr * 1e3:>8.2f}ms")
        if len(timings) == 2:
            (pc, pr), (cc, cr) = timings["python"], timings["cython"]
            print(f"{'':>9} {'':>6} {'':>8} {'speedup':>8} {pc / cc:>9.1f}x {pr / cr:>9.1f}x")


if __name__ == "__main__":
    main()
