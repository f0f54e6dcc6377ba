"""D-optimality, co-visibility and per-keyframe uncertainty trends."""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite, ValidationError
from .factors import FlowFactor, pose_key
from .graph import GaugeConfig, SolverConfig, build_graph, factorize, gauss_newton_solve
from .marginals import CovarianceRecovery


def dopt(block: np.ndarray) -> float:
    """``log det`` of an SPD block via its Cholesky pivots."""
    block = np.asarray(block, dtype=float)
    try:
        L = np.linalg.cholesky(block)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("covariance block is not positive definite") from None
    return 2.0 * float(np.sum(np.log(np.diag(L))))


@dataclass(frozen=True, eq=False)
class CovisibilityGraph:
    n: int
    adjacency: np.ndarray  # (i, j): flow factors from keyframe i into keyframe j

    def upper(self) -> np.ndarray:
        """Both directions folded into the upper triangle, for display."""
        A = self.adjacency + self.adjacency.T
        return np.triu(A, 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("frame," + ",".join(str(j) for j in range(self.n)) + "\n")
        for i in range(self.n):
            buf.write(f"{i}," + ",".join(str(int(v)) for v in self.adjacency[i]) + "\n")
        return buf.getvalue()


def covisibility(g, n: int | None = None) -> CovisibilityGraph:
    flows = [f for f in g.factors if isinstance(f, FlowFactor)]
    if n is None:
        ids = [k[1] for k in g.variable_order if k[0] == "x"]
        n = max(ids) + 1 if ids else 0
    A = np.zeros((n, n), dtype=np.int64)
    for f in flows:
        A[f.frame_i, f.frame_j] += 1
    return CovisibilityGraph(n, A)


def pose_marginals(g, x, frames=None) -> dict:
    """Marginal 6x6 covariance of each pose at the linearization point ``x``."""
    frames = g.pose_ids if frames is None else list(frames)
    session = CovarianceRecovery(factorize(g, x))
    return {i: session.marginal(pose_key(i)) for i in frames}


@dataclass
class TrendSeries:
    keyframes: list = field(default_factory=list)
    dopt: list = field(default_factory=list)
    num_edges: list = field(default_factory=list)
    max_backlink_span: list = field(default_factory=list)
    covariances: list = field(default_factory=list)
    adjacency: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("keyframe,logdet,num_edges,max_backlink_span\n")
        for k, d, e, s in zip(self.keyframes, self.dopt, self.num_edges, self.max_backlink_span):
            buf.write(f"{k},{d!r},{e},{s}\n")
        return buf.getvalue()


def _window(dataset, k, cfg, gauge, flow_sigma):
    win = dataset.prefix(k + 1)
    touching = [m for m in win.measurements if k in (m.frame_i, m.frame_j)]
    if k >= 2 and not touching and k not in gauge.frames:
        raise ValidationError(f"keyframe {k} has no measurements inside its window")
    g, x0 = build_graph(win, gauge, flow_sigma)
    x, _ = gauss_newton_solve(g, x0, cfg)
    cov = pose_marginals(g, x, [k])[k]
    span = max((abs(m.frame_i - m.frame_j) for m in touching), default=0)
    return dopt(cov), len(touching), span, cov, covisibility(g, k + 1).adjacency


def trend_series(dataset, cfg: SolverConfig = SolverConfig(), gauge: GaugeConfig = GaugeConfig(),
                 flow_sigma: float = 1.0, workers: int = 1) -> TrendSeries:
    """Newest-keyframe D-opt over growing keyframe windows ``0..k`` for ``k >= 1``.

    Every window is solved from the dataset poses and depths independently, so
    windows may run concurrently; results come back in keyframe order.
    """
    ks = list(range(1, dataset.num_keyframes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(lambda k: _window(dataset, k, cfg, gauge, flow_sigma), ks))
    else:
        rows = [_window(dataset, k, cfg, gauge, flow_sigma) for k in ks]
    ts = TrendSeries()
    for k, (d, e, s, cov, adj) in zip(ks, rows):
        ts.keyframes.append(k)
        ts.dopt.append(d)
        ts.num_edges.append(e)
        ts.max_backlink_span.append(s)
        ts.covariances.append(cov)
        ts.adjacency.append(adj)
    return ts


def marginals_csv(covs: dict) -> str:
    iu = np.triu_indices(6)
    buf = io.StringIO()
    buf.write("keyframe," + ",".join(f"c{r}{c}" for r, c in zip(*iu)) + ",logdet\n")
    for k in sorted(covs):
        C = covs[k]
        buf.write(f"{k}," + ",".join(repr(float(v)) for v in C[iu]) + f",{dopt(C)!r}\n")
    return buf.getvalue()


def trend_svg(ts: TrendSeries, covis: CovisibilityGraph, title: str = "") -> str:
    """Standalone SVG: D-opt curve on the left, adjacency heat map on the right."""
    W, H, pad = 900, 420, 50
    pw = 400
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2}" y="22" text-anchor="middle" font-family="sans-serif" font-size="15">{_esc(title)}</text>',
    ]
    x0, y0, x1, y1 = pad, pad, pad + pw - 40, H - pad
    out.append(f'<rect x="{x0}" y="{y0}" width="{x1 - x0}" height="{y1 - y0}" fill="none" stroke="black"/>')
    if ts.keyframes:
        ks = np.asarray(ts.keyframes, dtype=float)
        ds = np.asarray(ts.dopt, dtype=float)
        kmin, kmax = ks.min(), max(ks.max(), ks.min() + 1)
        dmin, dmax = ds.min(), max(ds.max(), ds.min() + 1e-9)
        px = x0 + (ks - kmin) / (kmax - kmin) * (x1 - x0)
        py = y1 - (ds - dmin) / (dmax - dmin) * (y1 - y0)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="2"/>')
        for a, b in zip(px, py):
            out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="#1f4e9c"/>')
        lab = 'font-family="sans-serif" font-size="11"'
        out.append(f'<text x="{x0}" y="{y1 + 16}" {lab}>{int(kmin)}</text>')
        out.append(f'<text x="{x1}" y="{y1 + 16}" text-anchor="end" {lab}>{int(kmax)}</text>')
        out.append(f'<text x="{x0 - 4}" y="{y0 + 4}" text-anchor="end" {lab}>{dmax:.1f}</text>')
        out.append(f'<text x="{x0 - 4}" y="{y1}" text-anchor="end" {lab}>{dmin:.1f}</text>')
        out.append(f'<text x="{(x0 + x1) / 2}" y="{y1 + 30}" text-anchor="middle" {lab}>keyframe</text>')
        out.append(f'<text x="{x0}" y="{y0 - 8}" {lab}>log det of newest pose covariance</text>')

    n = covis.n
    if n:
        up = covis.upper()
        vmax = max(int(up.max()), 1)
        gx, gy, size = pad + pw + 20, pad, min(H - 2 * pad, W - pad - pw - 60)
        cell = size / n
        out.append(f'<rect x="{gx}" y="{gy}" width="{size}" height="{size}" fill="none" stroke="black"/>')
        for i in range(n):
            for j in range(i + 1, n):
                if up[i, j]:
                    shade = int(230 - 200 * up[i, j] / vmax)
                    out.append(
                        f'<rect x="{gx + j * cell:.2f}" y="{gy + i * cell:.2f}" width="{cell:.2f}" '
                        f'height="{cell:.2f}" fill="rgb({shade},{shade},255)"/>'
                    )
        out.append(
            f'<text x="{gx + size / 2}" y="{gy + size + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">co-visibility (upper triangle)</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
