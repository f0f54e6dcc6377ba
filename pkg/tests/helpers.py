"""Random generators and finite-difference oracles shared by the tests."""

import numpy as np

from vocovar import liegroup as lg
from vocovar.camera import PinholeIntrinsics, back_project, project

K_TEST = PinholeIntrinsics(fx=320.0, fy=300.0, cx=318.0, cy=242.0, width=640.0, height=480.0)


def random_rotation_vector(rng, max_angle=np.pi - 1e-3):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return axis * rng.uniform(0.0, max_angle)


def random_pose(rng, max_angle=np.pi - 1e-3, scale=2.0):
    return lg.Pose(lg.so3_exp(random_rotation_vector(rng, max_angle)), rng.uniform(-scale, scale, 3))


def random_tangent(rng, max_angle=np.pi - 1e-3, scale=2.0):
    return np.concatenate([random_rotation_vector(rng, max_angle), rng.uniform(-scale, scale, 3)])


def rodrigues_oracle(omega):
    """R = cos t I + sin t [a]x + (1 - cos t) a a^T, written out independently."""
    t = np.linalg.norm(omega)
    if t == 0:
        return np.eye(3)
    a = omega / t
    ax = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.cos(t) * np.eye(3) + np.sin(t) * ax + (1 - np.cos(t)) * np.outer(a, a)


def fd_pose(f, T, h=1e-6):
    """Central differences of ``f`` under right perturbations of ``T``."""
    cols = []
    for k in range(6):
        d = np.zeros(6)
        d[k] = h
        cols.append((f(lg.boxplus(T, d)) - f(lg.boxplus(T, -d))) / (2 * h))
    return np.column_stack(cols)


def fd_vec(f, x, h=1e-6):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    cols = []
    for k in range(len(x)):
        d = np.zeros_like(x)
        d[k] = h
        cols.append((np.atleast_1d(f(x + d)) - np.atleast_1d(f(x - d))) / (2 * h))
    return np.column_stack(cols)


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_flow_config(rng, K=K_TEST):
    """Ti, Tj, inverse depth and a pixel whose point lands in front of frame j."""
    while True:
        Ti = random_pose(rng)
        Tj = lg.boxplus(Ti, np.concatenate([random_rotation_vector(rng, 0.3), rng.uniform(-0.4, 0.4, 3)]))
        p = np.array([rng.uniform(0, K.width), rng.uniform(0, K.height)])
        d = rng.uniform(0.2, 1.5)
        X = back_project(K, p, d)
        Y = lg.between(Tj, Ti).act(X)
        if Y[2] > 0.3:
            target = p + rng.normal(0, 5.0, 2)
            return Ti, Tj, d, p, target


def random_spd(rng, n, density=0.1, blocks=None):
    """Sparse SPD matrix with a random pattern plus a diagonal shift."""
    import scipy.sparse as sp

    B = sp.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(1 << 31)))
    M = (B @ B.T + sp.eye(n) * rng.uniform(0.1, 1.0)).tocsc()
    return M


# ---------------------------------------------------------------------------
# per-factor finite-difference checks; each returns the worst block error


def flow_fd_error(rng, K=K_TEST):
    from vocovar.factors import FlowFactor, flow_jacobians, flow_residual

    Ti, Tj, d, p, target = random_flow_config(rng, K)
    f = FlowFactor(0, 1, p, target, 0)
    Ji, Jj, Jd = flow_jacobians(Ti, Tj, d, f, K)
    ni = fd_pose(lambda T: flow_residual(T, Tj, d, f, K), Ti)
    nj = fd_pose(lambda T: flow_residual(Ti, T, d, f, K), Tj)
    nd = fd_vec(lambda v: flow_residual(Ti, Tj, v[0], f, K), [d])
    return max(rel_err(Ji, ni), rel_err(Jj, nj), rel_err(Jd.reshape(2, 1), nd))


def prior_fd_error(rng):
    from vocovar.factors import PriorFactor, prior_jacobian, prior_residual

    Xp = random_pose(rng)
    X = lg.boxplus(Xp, random_tangent(rng, 2.5))
    f = PriorFactor(0, Xp)
    return rel_err(prior_jacobian(X, f), fd_pose(lambda T: prior_residual(T, f), X))


def between_fd_error(rng):
    from vocovar.factors import BetweenFactor, between_jacobians, between_residual

    Ti, Tj = random_pose(rng), random_pose(rng)
    Z = lg.boxplus(lg.between(Ti, Tj), random_tangent(rng, 1.5, 0.5))
    f = BetweenFactor(0, 1, Z)
    Ji, Jj = between_jacobians(Ti, Tj, f)
    ni = fd_pose(lambda T: between_residual(T, Tj, f), Ti)
    nj = fd_pose(lambda T: between_residual(Ti, T, f), Tj)
    return max(rel_err(Ji, ni), rel_err(Jj, nj))


def projection_fd_error(rng, K=K_TEST):
    from vocovar.factors import ProjectionFactor, projection_jacobians, projection_residual

    T = random_pose(rng)
    Y = np.array([rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.5, 6)])
    L = T.act(Y)
    f = ProjectionFactor(0, 0, rng.uniform(0, 640, 2))
    Jt, Jl = projection_jacobians(T, L, f, K)
    nt = fd_pose(lambda P: projection_residual(P, L, f, K), T)
    nl = fd_vec(lambda v: projection_residual(T, v, f, K), L)
    return max(rel_err(Jt, nt), rel_err(Jl, nl))


FD_CHECKS = {
    "flow": flow_fd_error,
    "prior": prior_fd_error,
    "between": between_fd_error,
    "projection": projection_fd_error,
}


# ---------------------------------------------------------------------------
# small graphs


def small_scene(seed=0, n=5, samples=6, kind="line", sigma=1.0, **kw):
    from vocovar.simulate import ScenarioSpec, simulate_scenario

    spec = ScenarioSpec(kind=kind, num_keyframes=n, samples_per_keyframe=samples, seed=seed,
                        pixel_sigma=sigma, num_landmarks=kw.pop("num_landmarks", 200), **kw)
    return simulate_scenario(spec)


def mixed_graph(rng, n_poses=4, n_landmarks=3, K=K_TEST):
    """Prior + odometry chain + landmark projections, all at a valid point."""
    from vocovar.factors import BetweenFactor, PriorFactor, ProjectionFactor
    from vocovar.graph import FactorGraph, Values

    poses = {0: lg.Pose.identity()}
    for i in range(1, n_poses):
        step = np.concatenate([rng.normal(0, 0.05, 3), [0.2, 0, 0] + rng.normal(0, 0.02, 3)])
        poses[i] = lg.boxplus(poses[i - 1], step)
    factors = [PriorFactor(0, lg.boxplus(poses[0], rng.normal(0, 0.01, 6)), np.diag(rng.uniform(0.01, 0.1, 6)))]
    for i in range(1, n_poses):
        Z = lg.boxplus(lg.between(poses[i - 1], poses[i]), rng.normal(0, 0.01, 6))
        factors.append(BetweenFactor(i - 1, i, Z, _random_cov(rng, 6, 0.01)))
    lms = {}
    for m in range(n_landmarks):
        lms[m] = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(3, 5)])
        for i in range(n_poses):
            if rng.random() < 0.7 or i < 2:  # two views pin a landmark down
                obs = project(K, lg.inverse(poses[i]).act(lms[m])) + rng.normal(0, 1, 2)
                factors.append(ProjectionFactor(i, m, obs, _random_cov(rng, 2, 1.0)))
    return FactorGraph(factors, K), Values(poses, {}, lms)


def _random_cov(rng, n, scale):
    A = rng.normal(size=(n, n)) * 0.3
    return scale * (A @ A.T + np.eye(n))
