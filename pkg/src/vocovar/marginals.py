"""Square-root information factorization and marginal covariance recovery.

Three independent routes to the same marginal blocks:

* :func:`recover_marginals` walks the Cholesky factor with the classic
  memoized recurrences (only entries that are actually needed are computed);
* :func:`schur_marginal` eliminates the complement with a sparse LU solve;
* :func:`dense_inverse_oracle` inverts the whole matrix, for small problems.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import DimensionTooLarge, NotPositiveDefinite, UnknownVariable

PIVOT_RTOL = 1e-12


def _as_csc(L) -> sp.csc_matrix:
    L = sp.csc_matrix(L, dtype=float)
    L.sum_duplicates()
    L.sort_indices()
    return L


@dataclass(frozen=True, eq=False)
class SquareRootInformation:
    """``P^T (R^T R) P = Lambda`` with ``R = L^T`` upper triangular.

    ``perm[k]`` is the original scalar index placed at position ``k``.
    ``blocks`` optionally maps variable keys to their original scalar indices.
    """

    L: sp.csc_matrix
    perm: np.ndarray
    blocks: Mapping[Hashable, np.ndarray] | None = None

    @property
    def R(self) -> sp.csr_matrix:
        return self.L.T.tocsr()

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @cached_property
    def iperm(self) -> np.ndarray:
        ip = np.empty_like(self.perm)
        ip[self.perm] = np.arange(len(self.perm))
        return ip

    def indices(self, var) -> np.ndarray:
        if self.blocks is None:
            if isinstance(var, (int, np.integer)) and 0 <= var < self.n:
                return np.array([int(var)])
            raise UnknownVariable(f"unknown variable {var!r}")
        try:
            return np.asarray(self.blocks[var])
        except KeyError:
            raise UnknownVariable(f"unknown variable {var!r}") from None

    def reconstruct(self) -> sp.csc_matrix:
        """``Lambda`` in the original ordering."""
        M = (self.L @ self.L.T).tocsc()
        ip = self.iperm
        return M[ip][:, ip]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.L.diagonal())))

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``Lambda x = b``."""
        y = spla.spsolve_triangular(self.L.tocsr(), np.asarray(b, dtype=float)[self.perm], lower=True)
        z = spla.spsolve_triangular(self.L.T.tocsr(), y, lower=False)
        x = np.empty_like(z)
        x[self.perm] = z
        return x


def sparse_cholesky(Lam, ordering: Sequence[int] | None = None, blocks=None) -> SquareRootInformation:
    """Factor ``Lambda[ordering][:, ordering] = L L^T``.

    Raises :class:`NotPositiveDefinite` with the original index (and block key,
    when known) of the first pivot below ``1e-12 * max(diag(Lambda))``.
    """
    Lam = _as_csc(Lam)
    n = Lam.shape[0]
    if Lam.shape != (n, n):
        raise ValueError("information matrix must be square")
    perm = np.arange(n) if ordering is None else np.asarray(ordering, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("ordering is not a permutation")
    P = _as_csc(Lam[perm][:, perm])
    diag = Lam.diagonal()
    tol = PIVOT_RTOL * (diag.max() if n else 0.0)
    Lp, Li, Lx, fail = kernels.cholesky_csc(n, P.indptr, P.indices, P.data, tol)
    if fail >= 0:
        orig = int(perm[fail])
        where = f"scalar {orig}"
        if blocks is not None:
            for key, idx in blocks.items():
                if orig in set(np.asarray(idx).tolist()):
                    where += f" (variable {key!r})"
                    break
        raise NotPositiveDefinite(
            f"information matrix is not positive definite: pivot {fail} at {where}", pivot=orig
        )
    L = sp.csc_matrix((Lx, Li, Lp), shape=(n, n))
    return SquareRootInformation(L, perm, blocks)


class CovarianceRecovery:
    """One recovery session over an immutable factor.

    Entries on the factor's sparsity pattern live in a flat array aligned with
    ``L.data``; entries requested off the pattern are memoized in a dict.
    """

    def __init__(self, sqrt_info: SquareRootInformation):
        self.sqrt_info = sqrt_info
        L = sqrt_info.L
        self._Lp, self._Li, self._Lx = L.indptr.astype(np.int64), L.indices.astype(np.int64), L.data
        self._S = np.full(len(self._Lx), np.nan)
        self._off: dict[int, float] = {}

    @property
    def num_computed(self) -> int:
        return int(np.count_nonzero(~np.isnan(self._S))) + len(self._off)

    def entries(self, rows, cols) -> np.ndarray:
        """Covariance entries at original scalar indices."""
        ip = self.sqrt_info.iperm
        rows = ip[np.asarray(rows, dtype=np.int64)]
        cols = ip[np.asarray(cols, dtype=np.int64)]
        out = np.empty(len(rows))
        kernels.recover_entries(
            self.sqrt_info.n, self._Lp, self._Li, self._Lx, self._S, self._off, rows, cols, out
        )
        return out

    def block(self, idx_a, idx_b=None) -> np.ndarray:
        idx_a = np.asarray(idx_a)
        idx_b = idx_a if idx_b is None else np.asarray(idx_b)
        r, c = np.meshgrid(idx_a, idx_b, indexing="ij")
        return self.entries(r.ravel(), c.ravel()).reshape(len(idx_a), len(idx_b))

    def marginal(self, var) -> np.ndarray:
        idx = self.sqrt_info.indices(var)
        # upper triangle only, mirrored
        iu = np.triu_indices(len(idx))
        vals = self.entries(idx[iu[0]], idx[iu[1]])
        C = np.zeros((len(idx), len(idx)))
        C[iu] = vals
        C.T[iu] = vals
        return C

    def joint(self, vars: Iterable) -> np.ndarray:
        idx = np.concatenate([self.sqrt_info.indices(v) for v in vars])
        C = self.block(idx)
        return 0.5 * (C + C.T)


@dataclass(frozen=True, eq=False)
class MarginalBlock:
    variable: Hashable
    cov: np.ndarray


def recover_marginals(sqrt_info: SquareRootInformation, vars: Iterable) -> list[MarginalBlock]:
    session = CovarianceRecovery(sqrt_info)
    return [MarginalBlock(v, session.marginal(v)) for v in vars]


def joint_marginal(sqrt_info: SquareRootInformation, vars: Iterable) -> np.ndarray:
    """Joint covariance of several variables, cross-covariances included."""
    return CovarianceRecovery(sqrt_info).joint(list(vars))


def schur_marginal(Lam, keep) -> np.ndarray:
    """``(L11 - L12 L22^-1 L21)^-1`` for the scalar indices ``keep``."""
    Lam = _as_csc(Lam)
    n = Lam.shape[0]
    keep = np.asarray(keep, dtype=np.int64).ravel()
    if keep.size == 0:
        raise ValueError("keep must be non-empty")
    mask = np.ones(n, dtype=bool)
    mask[keep] = False
    rest = np.flatnonzero(mask)
    S = Lam[keep][:, keep].toarray()
    if rest.size:
        L22 = _as_csc(Lam[rest][:, rest])
        L21 = Lam[rest][:, keep].toarray()
        try:
            lu = spla.splu(
                L22, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options={"SymmetricMode": True},
            )
        except RuntimeError as exc:
            raise NotPositiveDefinite(f"complement block is singular: {exc}") from None
        # symmetric pivoting keeps U's diagonal equal to the LDL^T pivots
        piv = lu.U.diagonal()
        tol = PIVOT_RTOL * L22.diagonal().max()
        if not np.all(piv > tol) or not (np.all(lu.perm_r == lu.perm_c)):
            raise NotPositiveDefinite("complement block of the information matrix is not positive definite")
        S = S - L21.T @ lu.solve(L21)
    S = 0.5 * (S + S.T)
    return _spd_inverse(S)


def _spd_inverse(M: np.ndarray) -> np.ndarray:
    try:
        c = scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix is not positive definite") from None
    inv = scipy.linalg.cho_solve(c, np.eye(M.shape[0]))
    return 0.5 * (inv + inv.T)


def dense_inverse_oracle(Lam, max_dim: int = 2000) -> np.ndarray:
    M = Lam.toarray() if sp.issparse(Lam) else np.asarray(Lam, dtype=float)
    if M.shape[0] > max_dim:
        raise DimensionTooLarge(f"dense inverse of a {M.shape[0]}x{M.shape[0]} matrix exceeds max_dim={max_dim}")
    return _spd_inverse(M)


def minimum_degree_order(adjacency: Mapping[Hashable, set], dims: Mapping[Hashable, int], groups: Sequence[Sequence[Hashable]]) -> list:
    """Greedy minimum-degree block ordering, one constraint group at a time.

    ``groups`` are eliminated in the given order; inside a group the block
    with the smallest remaining (scalar-weighted) degree goes first, ties
    broken by position in the group. Fill edges are added as blocks are
    eliminated.
    """
    adj = {k: set(v) for k, v in adjacency.items()}

    def degree(k):
        return sum(dims[m] for m in adj[k])

    order = []
    for group in groups:
        rank = {k: i for i, k in enumerate(group)}
        current = {k: degree(k) for k in group}
        heap = [(d, rank[k], k) for k, d in current.items()]
        heapq.heapify(heap)
        while heap:
            d, _, best = heapq.heappop(heap)
            if current.get(best) != d:
                continue  # stale entry
            del current[best]
            nbrs = adj.pop(best)
            for a in nbrs:
                adj[a].discard(best)
                adj[a] |= nbrs - {a}
                if a in current:
                    current[a] = degree(a)
                    heapq.heappush(heap, (current[a], rank[a], a))
            order.append(best)
    return order
