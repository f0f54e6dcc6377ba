"""Factor graph container, whitened linearization and the Gauss-Newton solver."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from . import liegroup as lg
from .camera import Z_MIN, PinholeIntrinsics, bearing
from .errors import (
    CheiralityViolation,
    InvalidInverseDepth,
    NotPositiveDefinite,
    SingularSystem,
    UnknownVariable,
)
from .factors import (
    DEPTH,
    LANDMARK,
    POSE,
    FlowFactor,
    PriorFactor,
    depth_key,
    flow_batch,
    key_dim,
    pose_key,
)
from .marginals import SquareRootInformation, minimum_degree_order, sparse_cholesky

log = logging.getLogger(__name__)

MIN_INV_DEPTH = 1e-6


@dataclass(frozen=True, eq=False)
class Values:
    """A linearization point: poses, inverse depths and (optional) landmarks."""

    poses: dict = field(default_factory=dict)
    inv_depths: dict = field(default_factory=dict)
    landmarks: dict = field(default_factory=dict)

    def pose(self, i: int) -> lg.Pose:
        try:
            return self.poses[i]
        except KeyError:
            raise UnknownVariable(f"no value for pose {i}") from None

    def inv_depth(self, k: int) -> float:
        try:
            return self.inv_depths[k]
        except KeyError:
            raise UnknownVariable(f"no value for inverse depth {k}") from None

    def landmark(self, m: int) -> np.ndarray:
        try:
            return self.landmarks[m]
        except KeyError:
            raise UnknownVariable(f"no value for landmark {m}") from None

    def has(self, key) -> bool:
        kind, i = key
        store = {POSE: self.poses, DEPTH: self.inv_depths, LANDMARK: self.landmarks}[kind]
        return i in store


@dataclass(frozen=True)
class GaugeConfig:
    rot_sigma: float = 1e-4
    trans_sigma: float = 1e-4
    frames: tuple = (0, 1)

    @property
    def covariance(self) -> np.ndarray:
        return np.diag([self.rot_sigma**2] * 3 + [self.trans_sigma**2] * 3)


NO_GAUGE = GaugeConfig(frames=())


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-8
    max_iters: int = 50
    damping: bool = True
    lambda0: float = 1e-4
    lambda_max: float = 1e12
    min_inv_depth: float = MIN_INV_DEPTH


class FactorGraph:
    """Immutable list of factors plus the column layout of the linear system.

    Column blocks are ordered depths first, then landmarks, then poses by
    keyframe id: depths hang off at most a handful of poses, so eliminating
    them first keeps the pose part of the factor small.
    """

    def __init__(self, factors: Iterable, intrinsics: PinholeIntrinsics | None = None):
        self.factors = tuple(factors)
        self.intrinsics = intrinsics
        keys = {k for f in self.factors for k in f.keys()}
        rank = {DEPTH: 0, LANDMARK: 1, POSE: 2}
        self.variable_order = tuple(sorted(keys, key=lambda k: (rank[k[0]], k[1])))
        self.block_dims = {k: key_dim(k) for k in self.variable_order}
        offs = np.cumsum([0] + [self.block_dims[k] for k in self.variable_order])
        self.offsets = {k: int(o) for k, o in zip(self.variable_order, offs[:-1])}
        self.num_cols = int(offs[-1])
        rows = np.cumsum([0] + [f.dim for f in self.factors])
        self.row_offsets = rows[:-1]
        self.num_rows = int(rows[-1])
        self._flow_idx = np.array([q for q, f in enumerate(self.factors) if isinstance(f, FlowFactor)], dtype=np.int64)
        if len(self._flow_idx) and intrinsics is None:
            raise ValueError("flow factors need camera intrinsics")

    def __len__(self):
        return len(self.factors)

    @property
    def pose_ids(self) -> list[int]:
        return [k[1] for k in self.variable_order if k[0] == POSE]

    def indices(self, key) -> np.ndarray:
        try:
            o = self.offsets[key]
        except KeyError:
            raise UnknownVariable(f"variable {key!r} is not in the graph") from None
        return np.arange(o, o + self.block_dims[key])

    @cached_property
    def blocks(self) -> dict:
        return {k: self.indices(k) for k in self.variable_order}

    def with_factors(self, extra: Iterable) -> "FactorGraph":
        return FactorGraph(self.factors + tuple(extra), self.intrinsics)

    def without(self, drop) -> "FactorGraph":
        return FactorGraph([f for f in self.factors if not drop(f)], self.intrinsics)

    def flow_factors(self) -> list[FlowFactor]:
        return [self.factors[q] for q in self._flow_idx]

    @cached_property
    def _flow_pack(self):
        flows = self.flow_factors()
        K = self.intrinsics
        return dict(
            fi=np.array([f.frame_i for f in flows], dtype=np.int64),
            fj=np.array([f.frame_j for f in flows], dtype=np.int64),
            dk=np.array([f.depth_var for f in flows], dtype=np.int64),
            bearings=np.array([bearing(K, f.pixel) for f in flows]).reshape(-1, 3),
            targets=np.array([f.target for f in flows]).reshape(-1, 2),
            W=np.array([f.sqrt_info for f in flows]).reshape(-1, 2, 2),
        )

    def adjacency(self) -> dict:
        """Block-level Markov blanket of every variable."""
        adj = {k: set() for k in self.variable_order}
        for f in self.factors:
            ks = f.keys()
            for a in ks:
                adj[a].update(b for b in ks if b != a)
        return adj

    def fill_reducing_order(self) -> np.ndarray:
        """Scalar permutation: depths and landmarks first, then poses by minimum degree."""
        adj = self.adjacency()
        first = [k for k in self.variable_order if k[0] != POSE]
        poses = [k for k in self.variable_order if k[0] == POSE]
        order = minimum_degree_order(adj, self.block_dims, [first, poses])
        return np.concatenate([self.indices(k) for k in order]) if order else np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """Whitened ``A`` and ``b`` such that the step minimizes ``|A dx - b|^2``."""

    A: sp.csr_matrix
    b: np.ndarray
    graph: FactorGraph

    @property
    def cost(self) -> float:
        return float(self.b @ self.b)


def _flow_eval(g: FactorGraph, x: Values, jacobians: bool):
    pk = g._flow_pack
    fi, fj, dk = pk["fi"], pk["fj"], pk["dk"]
    try:
        Ri = np.array([x.poses[i].R for i in fi]).reshape(-1, 3, 3)
        ti = np.array([x.poses[i].t for i in fi]).reshape(-1, 3)
        Rj = np.array([x.poses[j].R for j in fj]).reshape(-1, 3, 3)
        tj = np.array([x.poses[j].t for j in fj]).reshape(-1, 3)
        d = np.array([x.inv_depths[k] for k in dk], dtype=float)
    except KeyError as exc:
        raise UnknownVariable(f"no value for variable {exc.args[0]!r}") from None
    bad = np.flatnonzero(~(d > 0))
    if bad.size:
        f = g.factors[g._flow_idx[bad[0]]]
        raise InvalidInverseDepth(f"flow factor {f.name or bad[0]}: inverse depth {d[bad[0]]} is not positive")
    out = flow_batch(Ri, ti, Rj, tj, pk["bearings"], d, pk["targets"], g.intrinsics, jacobians)
    z = out[4]
    bad = np.flatnonzero(~(z > Z_MIN))
    if bad.size:
        f = g.factors[g._flow_idx[bad[0]]]
        raise CheiralityViolation(
            f"flow factor {f.name or bad[0]} ({f.frame_i}->{f.frame_j}): "
            f"point is behind keyframe {f.frame_j} (z={z[bad[0]]:.3g})"
        )
    return out


def cost(g: FactorGraph, x: Values) -> float:
    """Sum of ``e^T Sigma^-1 e`` over all factors."""
    total = 0.0
    if len(g._flow_idx):
        e = _flow_eval(g, x, jacobians=False)[0]
        we = np.einsum("nab,nb->na", g._flow_pack["W"], e)
        total += float(np.sum(we * we))
    flow_set = set(g._flow_idx.tolist())
    for q, f in enumerate(g.factors):
        if q not in flow_set:
            total += f.whitened_error(x, g.intrinsics)
    return total


def linearize(g: FactorGraph, x: Values) -> LinearSystem:
    rows, cols, vals = [], [], []
    b = np.zeros(g.num_rows)

    if len(g._flow_idx):
        e, Ji, Jj, Jd, _ = _flow_eval(g, x, jacobians=True)
        pk = g._flow_pack
        W = pk["W"]
        J = np.concatenate([Ji, Jj, Jd[:, :, None]], axis=2)  # (N, 2, 13)
        WJ = W @ J
        r0 = g.row_offsets[g._flow_idx]
        oi = np.array([g.offsets[pose_key(i)] for i in pk["fi"]], dtype=np.int64)
        oj = np.array([g.offsets[pose_key(j)] for j in pk["fj"]], dtype=np.int64)
        od = np.array([g.offsets[depth_key(k)] for k in pk["dk"]], dtype=np.int64)
        six = np.arange(6)
        col = np.concatenate([oi[:, None] + six, oj[:, None] + six, od[:, None]], axis=1)  # (N, 13)
        row = r0[:, None] + np.arange(2)
        rows.append(np.broadcast_to(row[:, :, None], WJ.shape).ravel())
        cols.append(np.broadcast_to(col[:, None, :], WJ.shape).ravel())
        vals.append(WJ.ravel())
        b[row.ravel()] = -np.einsum("nab,nb->na", W, e).ravel()

    flow_set = set(g._flow_idx.tolist())
    for q, f in enumerate(g.factors):
        if q in flow_set:
            continue
        e, Js = f.evaluate(x, g.intrinsics)
        W = f.sqrt_info
        r = g.row_offsets[q] + np.arange(f.dim)
        b[r] = -W @ e
        for key, Jk in zip(f.keys(), Js):
            WJ = W @ np.asarray(Jk).reshape(f.dim, -1)
            c = g.indices(key)
            rows.append(np.repeat(r, len(c)))
            cols.append(np.tile(c, len(r)))
            vals.append(WJ.ravel())

    if rows:
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(g.num_rows, g.num_cols),
        )
    else:
        A = sp.csr_matrix((g.num_rows, g.num_cols))
    return LinearSystem(A, b, g)


def information_matrix(sys: LinearSystem) -> sp.csc_matrix:
    """``A^T A`` with exact symmetry."""
    A = sys.A.tocsc()
    Lam = (A.T @ A).tocsc()
    Lam = 0.5 * (Lam + Lam.T)
    Lam.sort_indices()
    return Lam.tocsc()


def factorize(g: FactorGraph, x: Values, ordering: str = "fill_reducing") -> SquareRootInformation:
    """Square-root information of the undamped system at ``x``."""
    Lam = information_matrix(linearize(g, x))
    perm = g.fill_reducing_order() if ordering == "fill_reducing" else None
    return sparse_cholesky(Lam, perm, blocks=g.blocks)


def retract(g: FactorGraph, x: Values, dx: np.ndarray, min_inv_depth: float = MIN_INV_DEPTH) -> Values:
    poses = dict(x.poses)
    depths = dict(x.inv_depths)
    lms = dict(x.landmarks)
    for key in g.variable_order:
        o = g.offsets[key]
        kind, i = key
        if kind == POSE:
            poses[i] = lg.boxplus(poses[i], dx[o : o + 6])
        elif kind == DEPTH:
            depths[i] = max(depths[i] + dx[o], min_inv_depth)
        else:
            lms[i] = lms[i] + dx[o : o + 3]
    return Values(poses, depths, lms)


@dataclass
class SolveReport:
    iterations: int = 0
    costs: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    converged: bool = False

    @property
    def initial_cost(self) -> float:
        return self.costs[0]

    @property
    def final_cost(self) -> float:
        return self.costs[-1]


def gauss_newton_solve(g: FactorGraph, init: Values, cfg: SolverConfig = SolverConfig()):
    """Iterate ``dx = argmin |A dx - b|^2``, ``x <- x [+] dx``.

    With ``cfg.damping`` the normal equations get Levenberg-Marquardt damping
    ``lambda * diag(Lambda)`` and steps that raise the cost are rejected.
    Raises :class:`SingularSystem` if the undamped information matrix at the
    initial point is rank deficient (a missing gauge prior, typically).
    """
    x = init
    sys = linearize(g, x)
    Lam = information_matrix(sys)
    try:
        sparse_cholesky(Lam)
    except NotPositiveDefinite as exc:
        raise SingularSystem(f"normal equations are rank deficient ({exc}); is the gauge fixed?") from None

    report = SolveReport(costs=[sys.cost])
    lam = cfg.lambda0 if cfg.damping else 0.0
    for it in range(1, cfg.max_iters + 1):
        report.iterations = it
        rhs = sys.A.T @ sys.b
        cur = sys.cost
        while True:
            H = Lam + lam * sp.diags(Lam.diagonal()) if lam > 0 else Lam
            try:
                dx = sparse_cholesky(H).solve(rhs)
            except NotPositiveDefinite as exc:
                if not cfg.damping:
                    raise SingularSystem(str(exc)) from None
                lam *= 10.0
                if lam > cfg.lambda_max:
                    return x, report
                continue
            step = float(np.max(np.abs(dx))) if dx.size else 0.0
            cand = retract(g, x, dx, cfg.min_inv_depth)
            try:
                new_cost = cost(g, cand)
            except (CheiralityViolation, InvalidInverseDepth):
                if not cfg.damping:
                    raise
                new_cost = np.inf
            if step < cfg.tol:
                if new_cost <= cur:
                    x = cand
                    cur = new_cost
                report.step_norms.append(step)
                report.lambdas.append(lam)
                report.costs.append(cur)
                report.converged = True
                log.debug("converged after %d iterations, cost %.6g", it, cur)
                return x, report
            if not cfg.damping or new_cost <= cur:
                x = cand
                lam = max(lam / 10.0, 1e-12) if cfg.damping else 0.0
                report.step_norms.append(step)
                report.lambdas.append(lam)
                report.costs.append(new_cost)
                break
            lam *= 10.0
            if lam > cfg.lambda_max:
                log.debug("damping exhausted at iteration %d", it)
                return x, report
        sys = linearize(g, x)
        Lam = information_matrix(sys)
    return x, report


# ---------------------------------------------------------------------------
# graph construction from a keyframe dataset


def build_graph(dataset, gauge: GaugeConfig = GaugeConfig(), flow_sigma: float = 1.0):
    """Flow factors for every measurement plus gauge priors; returns ``(graph, values)``.

    Each pixel sample that at least one measurement uses becomes an inverse
    depth variable whose id is its global sample index.
    """
    K = dataset.intrinsics
    offsets = dataset.sample_offsets()
    n = dataset.num_keyframes
    factors = []
    depths = {}
    for q, m in enumerate(dataset.measurements):
        kf = dataset.keyframe(m.frame_i)
        smp = kf.samples[m.sample_index]
        did = offsets[m.frame_i] + m.sample_index
        depths[did] = smp.inv_depth
        factors.append(
            FlowFactor(
                m.frame_i, m.frame_j, smp.pixel, np.asarray(m.target, dtype=float), did,
                m.sigma_matrix(flow_sigma), name=f"M{q}",
            )
        )
    for i in gauge.frames:
        if i < n:
            factors.append(PriorFactor(i, dataset.keyframe(i).pose, gauge.covariance))
    poses = {kf.id: kf.pose for kf in dataset.keyframes}
    g = FactorGraph(factors, K)
    x = Values(poses, depths)
    if len(g._flow_idx):
        _flow_eval(g, x, jacobians=False)  # cheirality at the linearization point
    return g, x
