# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled twin of :mod:`vocovar._pykernels`; same signatures and results."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isnan, NAN
from libcpp.vector cimport vector

cnp.import_array()

BACKEND = "cython"


cdef void _etree(Py_ssize_t n, const cnp.int64_t[:] Ap, const cnp.int64_t[:] Ai,
                 cnp.int64_t[:] parent, cnp.int64_t[:] ancestor) noexcept nogil:
    cdef Py_ssize_t k, p
    cdef cnp.int64_t i, inext
    for k in range(n):
        parent[k] = -1
        ancestor[k] = -1
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext


cdef Py_ssize_t _ereach(Py_ssize_t n, const cnp.int64_t[:] Ap, const cnp.int64_t[:] Ai,
                        Py_ssize_t k, cnp.int64_t[:] parent, cnp.int64_t[:] mark,
                        cnp.int64_t[:] s) noexcept nogil:
    # writes the pattern of row k into s[top:n] in topological order; returns top
    cdef Py_ssize_t top = n, length, p
    cdef cnp.int64_t i
    mark[k] = k
    for p in range(Ap[k], Ap[k + 1]):
        i = Ai[p]
        if i > k:
            continue
        length = 0
        while mark[i] != k:
            s[length] = i
            length += 1
            mark[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


def cholesky_csc(Py_ssize_t n, Ap_in, Ai_in, Ax_in, double pivot_tol):
    cdef const cnp.int64_t[:] Ap = np.ascontiguousarray(Ap_in, dtype=np.int64)
    cdef const cnp.int64_t[:] Ai = np.ascontiguousarray(Ai_in, dtype=np.int64)
    cdef const double[:] Ax = np.ascontiguousarray(Ax_in, dtype=np.float64)
    cdef cnp.int64_t[:] parent = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] work = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] mark = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] s = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[:] counts = np.ones(n, dtype=np.int64)
    cdef Py_ssize_t k, p, top, q, fail = -1
    cdef cnp.int64_t i

    with nogil:
        _etree(n, Ap, Ai, parent, work)
        for k in range(n):
            mark[k] = -1
        for k in range(n):
            top = _ereach(n, Ap, Ai, k, parent, mark, s)
            for q in range(top, n):
                counts[s[q]] += 1

    Lp_arr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp_arr[1:])
    cdef cnp.int64_t[:] Lp = Lp_arr
    Li_arr = np.empty(Lp_arr[n], dtype=np.int64)
    Lx_arr = np.empty(Lp_arr[n], dtype=np.float64)
    cdef cnp.int64_t[:] Li = Li_arr
    cdef double[:] Lx = Lx_arr
    cdef cnp.int64_t[:] nxt = np.array(Lp_arr[:n], dtype=np.int64)
    cdef double[:] x = np.zeros(n, dtype=np.float64)
    cdef double d, lki

    with nogil:
        for k in range(n):
            mark[k] = -1
        for k in range(n):
            top = _ereach(n, Ap, Ai, k, parent, mark, s)
            for p in range(Ap[k], Ap[k + 1]):
                if Ai[p] <= k:
                    x[Ai[p]] = Ax[p]
            d = x[k]
            x[k] = 0.0
            # ascending column order is a valid topological order of the etree
            _sort(s, top, n)
            for q in range(top, n):
                i = s[q]
                lki = x[i] / Lx[Lp[i]]
                x[i] = 0.0
                for p in range(Lp[i] + 1, nxt[i]):
                    x[Li[p]] -= Lx[p] * lki
                d -= lki * lki
                p = nxt[i]
                Li[p] = k
                Lx[p] = lki
                nxt[i] += 1
            if not d > pivot_tol:
                fail = k
                break
            p = nxt[k]
            Li[p] = k
            Lx[p] = sqrt(d)
            nxt[k] += 1
    return Lp_arr, Li_arr, Lx_arr, fail


cdef void _sort(cnp.int64_t[:] s, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
    # insertion sort; row patterns are short and nearly sorted
    cdef Py_ssize_t a, b
    cdef cnp.int64_t v
    for a in range(lo + 1, hi):
        v = s[a]
        b = a - 1
        while b >= lo and s[b] > v:
            s[b + 1] = s[b]
            b -= 1
        s[b + 1] = v


cdef inline Py_ssize_t _find(const cnp.int64_t[:] Lp, const cnp.int64_t[:] Li,
                             cnp.int64_t a, cnp.int64_t b) noexcept nogil:
    cdef Py_ssize_t lo = Lp[a], hi = Lp[a + 1], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if Li[mid] < b:
            lo = mid + 1
        else:
            hi = mid
    if lo < Lp[a + 1] and Li[lo] == b:
        return lo
    return -1


cdef class _Memo:
    cdef const cnp.int64_t[:] Lp
    cdef const cnp.int64_t[:] Li
    cdef double[:] S
    cdef dict off
    cdef cnp.int64_t n

    cdef double get(self, cnp.int64_t a, cnp.int64_t b):
        cdef Py_ssize_t s = _find(self.Lp, self.Li, a, b)
        if s >= 0:
            return self.S[s]
        return self.off.get(a * self.n + b, NAN)

    cdef void put(self, cnp.int64_t a, cnp.int64_t b, double v):
        cdef Py_ssize_t s = _find(self.Lp, self.Li, a, b)
        if s >= 0:
            self.S[s] = v
        else:
            self.off[a * self.n + b] = v


def recover_entries(Py_ssize_t n, Lp_in, Li_in, Lx_in, double[:] S, dict off,
                    rows, cols, double[:] out):
    cdef _Memo memo = _Memo()
    memo.Lp = np.ascontiguousarray(Lp_in, dtype=np.int64)
    memo.Li = np.ascontiguousarray(Li_in, dtype=np.int64)
    memo.S = S
    memo.off = off
    memo.n = n
    cdef const cnp.int64_t[:] Lp = memo.Lp
    cdef const cnp.int64_t[:] Li = memo.Li
    cdef const double[:] Lx = np.ascontiguousarray(Lx_in, dtype=np.float64)
    cdef const cnp.int64_t[:] rr = np.ascontiguousarray(rows, dtype=np.int64)
    cdef const cnp.int64_t[:] cc = np.ascontiguousarray(cols, dtype=np.int64)
    cdef vector[cnp.int64_t] sa, sb
    cdef Py_ssize_t q, p
    cdef cnp.int64_t a, b, j, lo, hi
    cdef double acc, v, r
    cdef bint pending

    for q in range(rr.shape[0]):
        a = rr[q]
        b = cc[q]
        if a > b:
            a, b = b, a
        sa.push_back(a)
        sb.push_back(b)
        while sa.size() > 0:
            a = sa.back()
            b = sb.back()
            if not isnan(memo.get(a, b)):
                sa.pop_back()
                sb.pop_back()
                continue
            acc = 0.0
            pending = False
            for p in range(Lp[a] + 1, Lp[a + 1]):
                j = Li[p]
                if j < b:
                    lo, hi = j, b
                else:
                    lo, hi = b, j
                v = memo.get(lo, hi)
                if isnan(v):
                    sa.push_back(lo)
                    sb.push_back(hi)
                    pending = True
                elif not pending:
                    acc += Lx[p] * v
            if pending:
                continue
            r = Lx[Lp[a]]
            if a == b:
                memo.put(a, b, (1.0 / r - acc) / r)
            else:
                memo.put(a, b, -acc / r)
            sa.pop_back()
            sb.pop_back()
        a = rr[q]
        b = cc[q]
        if a > b:
            a, b = b, a
        out[q] = memo.get(a, b)
    return np.asarray(out)
