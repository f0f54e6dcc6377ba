"""Pure-Python sparse kernels; reference behaviour for the compiled twin.

Both kernels work on scalar CSC arrays. The Cholesky factor is returned as
the lower triangle ``L`` in CSC form with sorted row indices, so column ``l``
of ``L`` is row ``l`` of ``R = L^T``.
"""

import math

import numpy as np

BACKEND = "python"


def _etree(n, Ap, Ai):
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext
    return parent


def _ereach(Ap, Ai, k, parent, mark, stack):
    # pattern of row k of L, topologically ordered (ascending columns)
    n_out = 0
    mark[k] = k
    path = []
    for p in range(Ap[k], Ap[k + 1]):
        i = Ai[p]
        if i > k:
            continue
        path.clear()
        while mark[i] != k:
            path.append(i)
            mark[i] = k
            i = parent[i]
        stack.extend(reversed(path))
        n_out += len(path)
    return n_out


def cholesky_csc(n, Ap, Ai, Ax, pivot_tol):
    """Up-looking Cholesky of the symmetric matrix given by its upper triangle.

    Returns ``(Lp, Li, Lx, fail)``; ``fail`` is the first column whose pivot
    fell below ``pivot_tol`` or ``-1`` on success.
    """
    Ap = np.asarray(Ap, dtype=np.int64)
    Ai = np.asarray(Ai, dtype=np.int64)
    Ax = np.asarray(Ax, dtype=float)
    parent = _etree(n, Ap, Ai)

    # symbolic pass: column counts of L
    mark = np.full(n, -1, dtype=np.int64)
    counts = np.ones(n, dtype=np.int64)
    patterns = []
    for k in range(n):
        stack = []
        _ereach(Ap, Ai, k, parent, mark, stack)
        pat = np.array(sorted(stack), dtype=np.int64)
        patterns.append(pat)
        counts[pat] += 1
    Lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp[1:])
    Li = np.empty(Lp[-1], dtype=np.int64)
    Lx = np.empty(Lp[-1], dtype=float)
    nxt = Lp[:-1].copy()

    x = np.zeros(n)
    for k in range(n):
        cols = slice(Ap[k], Ap[k + 1])
        rows = Ai[cols]
        keep = rows <= k
        x[rows[keep]] = Ax[cols][keep]
        d = x[k]
        x[k] = 0.0
        for i in patterns[k]:
            lki = x[i] / Lx[Lp[i]]
            x[i] = 0.0
            lo, hi = Lp[i] + 1, nxt[i]
            if hi > lo:
                x[Li[lo:hi]] -= Lx[lo:hi] * lki
            d -= lki * lki
            p = nxt[i]
            Li[p] = k
            Lx[p] = lki
            nxt[i] += 1
        if not d > pivot_tol:
            return Lp, Li, Lx, k
        p = nxt[k]
        Li[p] = k
        Lx[p] = math.sqrt(d)
        nxt[k] += 1
    return Lp, Li, Lx, -1


def _find(Lp, Li, a, b):
    lo, hi = Lp[a], Lp[a + 1]
    p = int(np.searchsorted(Li[lo:hi], b)) + lo
    if p < hi and Li[p] == b:
        return p
    return -1


def recover_entries(n, Lp, Li, Lx, S, off, rows, cols, out):
    """Covariance entries ``(rows[q], cols[q])`` from the factor ``L``.

    ``S`` (aligned with ``Lx``, NaN where unknown) memoizes entries on the
    factor's pattern and the dict ``off`` memoizes the rest, keyed by
    ``a * n + b`` with ``a <= b``. Both are updated in place.
    """
    Lp = [int(v) for v in Lp]
    Li_np = np.asarray(Li)
    Li = Li_np.tolist()
    Lx = np.asarray(Lx).tolist()
    slot_cache = {}

    def slot(a, b):
        key = a * n + b
        s = slot_cache.get(key)
        if s is None:
            s = _find(Lp, Li_np, a, b)
            slot_cache[key] = s
        return s

    def get(a, b):
        s = slot(a, b)
        if s >= 0:
            return S[s]
        return off.get(a * n + b, math.nan)

    for q in range(len(rows)):
        a, b = int(rows[q]), int(cols[q])
        if a > b:
            a, b = b, a
        stack = [(a, b)]
        while stack:
            a_, b_ = stack[-1]
            if not math.isnan(get(a_, b_)):
                stack.pop()
                continue
            acc = 0.0
            pending = False
            for p in range(Lp[a_] + 1, Lp[a_ + 1]):
                j = Li[p]
                lo, hi = (j, b_) if j < b_ else (b_, j)
                v = get(lo, hi)
                if math.isnan(v):
                    stack.append((lo, hi))
                    pending = True
                elif not pending:
                    acc += Lx[p] * v
            if pending:
                continue
            r = Lx[Lp[a_]]
            val = ((1.0 / r if a_ == b_ else 0.0) - acc) / r
            s = slot(a_, b_)
            if s >= 0:
                S[s] = val
            else:
                off[a_ * n + b_] = val
            stack.pop()
        out[q] = get(a, b)
    return out
