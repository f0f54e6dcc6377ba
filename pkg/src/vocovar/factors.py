"""Residuals and analytic Jacobians for the factor types.

Pose Jacobians are taken with respect to right perturbations
``T -> T * Exp(xi)``. Residuals are returned unwhitened; each factor exposes
``sqrt_info`` (``W`` with ``W^T W = Sigma^-1``) for whitening.

Variables are addressed by keys: ``pose_key(i)``, ``depth_key(k)`` and
``landmark_key(m)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import liegroup as lg
from .camera import Z_MIN, PinholeIntrinsics, bearing, project_jacobian
from .errors import CheiralityViolation, InvalidInverseDepth, ValidationError
from .liegroup import Pose

POSE, DEPTH, LANDMARK = "x", "d", "l"
BLOCK_DIM = {POSE: 6, DEPTH: 1, LANDMARK: 3}


def pose_key(i: int):
    return (POSE, int(i))


def depth_key(k: int):
    return (DEPTH, int(k))


def landmark_key(m: int):
    return (LANDMARK, int(m))


def key_dim(key) -> int:
    return BLOCK_DIM[key[0]]


def _spd(S, dim, what):
    S = np.array(S, dtype=float).reshape(dim, dim)
    if not np.allclose(S, S.T, rtol=0, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValidationError(f"{what}: noise covariance is not symmetric")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValidationError(f"{what}: noise covariance is not positive definite") from None
    S.setflags(write=False)
    return S


class Factor:
    """Common whitening and bookkeeping; subclasses implement ``evaluate``."""

    noise_sigma: np.ndarray

    @cached_property
    def sqrt_info(self) -> np.ndarray:
        # W = L^-1 for Sigma = L L^T, so W^T W = Sigma^-1
        L = np.linalg.cholesky(self.noise_sigma)
        return np.linalg.solve(L, np.eye(L.shape[0]))

    @property
    def dim(self) -> int:
        return self.noise_sigma.shape[0]

    def keys(self) -> tuple:
        raise NotImplementedError

    def evaluate(self, values, K: PinholeIntrinsics | None = None):
        """Return ``(residual, [jacobian per key])`` at ``values``."""
        raise NotImplementedError

    def whitened_error(self, values, K=None) -> float:
        e, _ = self.evaluate(values, K)
        return float(e @ np.linalg.solve(self.noise_sigma, e))


# --------------------------------------------------------------------------
# flow factor


@dataclass(frozen=True, eq=False)
class FlowFactor(Factor):
    """Ternary factor between pose ``i``, pose ``j`` and a depth in frame ``i``."""

    frame_i: int
    frame_j: int
    pixel: np.ndarray
    target: np.ndarray
    depth_var: int
    noise_sigma: np.ndarray = field(default_factory=lambda: np.eye(2))
    name: str = ""

    def __post_init__(self):
        if self.frame_i == self.frame_j:
            raise ValidationError(f"flow factor {self.name or ''} links frame {self.frame_i} to itself")
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float).reshape(2))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(2))
        object.__setattr__(self, "noise_sigma", _spd(self.noise_sigma, 2, f"flow factor {self.name}"))

    def keys(self):
        return (pose_key(self.frame_i), pose_key(self.frame_j), depth_key(self.depth_var))

    def evaluate(self, values, K=None):
        Ti = values.pose(self.frame_i)
        Tj = values.pose(self.frame_j)
        d = values.inv_depth(self.depth_var)
        e, Ji, Jj, Jd = flow_jacobians(Ti, Tj, d, self, K, with_residual=True)
        return e, [Ji, Jj, Jd.reshape(2, 1)]


def flow_batch(Ri, ti, Rj, tj, bearings, d, targets, K: PinholeIntrinsics, jacobians=True):
    """Vectorized flow residuals and Jacobians for ``N`` measurements.

    ``Ri, Rj`` are ``(N, 3, 3)``, ``ti, tj`` and ``bearings`` ``(N, 3)``,
    ``d`` ``(N,)`` and ``targets`` ``(N, 2)``. Returns ``(e, Ji, Jj, Jd, z)``
    where ``z`` is the depth of each point in frame ``j``; callers decide what
    to do when ``z <= Z_MIN``.
    """
    d = np.asarray(d, dtype=float)
    RjT = np.swapaxes(Rj, 1, 2)
    R = RjT @ Ri
    t = np.einsum("nab,nb->na", RjT, ti - tj)
    X = bearings / d[:, None]
    Y = np.einsum("nab,nb->na", R, X) + t
    z = Y[:, 2]
    iz = 1.0 / z
    uv = np.stack([K.fx * Y[:, 0] * iz + K.cx, K.fy * Y[:, 1] * iz + K.cy], axis=1)
    e = targets - uv
    if not jacobians:
        return e, None, None, None, z

    n = len(d)
    Jp = np.zeros((n, 2, 3))
    Jp[:, 0, 0] = K.fx * iz
    Jp[:, 1, 1] = K.fy * iz
    Jp[:, 0, 2] = -K.fx * Y[:, 0] * iz * iz
    Jp[:, 1, 2] = -K.fy * Y[:, 1] * iz * iz

    # dY/dxi_i = R [-X^, I];  dY/dxi_j = [Y^, -I];  dY/dd = -R b / d^2
    dYi = np.empty((n, 3, 6))
    dYi[:, :, :3] = -R @ _hat_batch(X)
    dYi[:, :, 3:] = R
    dYj = np.empty((n, 3, 6))
    dYj[:, :, :3] = _hat_batch(Y)
    dYj[:, :, 3:] = -np.eye(3)
    dYd = -np.einsum("nab,nb->na", R, bearings) / (d * d)[:, None]

    Ji = -Jp @ dYi
    Jj = -Jp @ dYj
    Jd = -np.einsum("nab,nb->na", Jp, dYd)
    return e, Ji, Jj, Jd, z


def _hat_batch(V):
    n = V.shape[0]
    H = np.zeros((n, 3, 3))
    H[:, 0, 1] = -V[:, 2]
    H[:, 0, 2] = V[:, 1]
    H[:, 1, 0] = V[:, 2]
    H[:, 1, 2] = -V[:, 0]
    H[:, 2, 0] = -V[:, 1]
    H[:, 2, 1] = V[:, 0]
    return H


def _flow_single(Ti, Tj, d, f, K, jacobians):
    if not d > 0:
        raise InvalidInverseDepth(f"inverse depth must be positive, got {d}")
    e, Ji, Jj, Jd, z = flow_batch(
        Ti.R[None], Ti.t[None], Tj.R[None], Tj.t[None],
        bearing(K, f.pixel)[None], np.array([d]), f.target[None], K, jacobians,
    )
    if z[0] <= Z_MIN:
        raise CheiralityViolation(
            f"flow factor {f.name or (f.frame_i, f.frame_j)}: point is behind frame {f.frame_j} (z={z[0]:.3g})"
        )
    if not jacobians:
        return e[0]
    return e[0], Ji[0], Jj[0], Jd[0]


def flow_residual(Ti: Pose, Tj: Pose, d: float, f: FlowFactor, K: PinholeIntrinsics) -> np.ndarray:
    """``target - project_j(Tj^-1 Ti back_project_i(pixel, d))``."""
    return _flow_single(Ti, Tj, d, f, K, jacobians=False)


def flow_jacobians(Ti, Tj, d, f, K, with_residual=False):
    """``(J_i 2x6, J_j 2x6, J_d 2)``; prepends the residual if requested."""
    e, Ji, Jj, Jd = _flow_single(Ti, Tj, d, f, K, jacobians=True)
    if with_residual:
        return e, Ji, Jj, Jd
    return Ji, Jj, Jd


# --------------------------------------------------------------------------
# pose priors and relative-pose factors


@dataclass(frozen=True, eq=False)
class PriorFactor(Factor):
    frame: int
    predicted_pose: Pose
    noise_sigma: np.ndarray = field(default_factory=lambda: np.eye(6))

    def __post_init__(self):
        object.__setattr__(self, "noise_sigma", _spd(self.noise_sigma, 6, f"prior on {self.frame}"))

    def keys(self):
        return (pose_key(self.frame),)

    def evaluate(self, values, K=None):
        X = values.pose(self.frame)
        return prior_residual(X, self), [prior_jacobian(X, self)]


def prior_residual(X: Pose, f: PriorFactor) -> np.ndarray:
    return lg.boxminus(X, f.predicted_pose)


def prior_jacobian(X: Pose, f: PriorFactor) -> np.ndarray:
    return lg.se3_right_jacobian_inv(prior_residual(X, f))


@dataclass(frozen=True, eq=False)
class BetweenFactor(Factor):
    frame_i: int
    frame_j: int
    relative_pose: Pose
    noise_sigma: np.ndarray = field(default_factory=lambda: np.eye(6))

    def __post_init__(self):
        if self.frame_i == self.frame_j:
            raise ValidationError("between factor must link two distinct frames")
        object.__setattr__(self, "noise_sigma", _spd(self.noise_sigma, 6, "between factor"))

    def keys(self):
        return (pose_key(self.frame_i), pose_key(self.frame_j))

    def evaluate(self, values, K=None):
        Ti, Tj = values.pose(self.frame_i), values.pose(self.frame_j)
        r = between_residual(Ti, Tj, self)
        return r, list(between_jacobians(Ti, Tj, self))


def between_residual(Ti: Pose, Tj: Pose, f: BetweenFactor) -> np.ndarray:
    return lg.se3_log(lg.between(f.relative_pose, lg.between(Ti, Tj)))


def between_jacobians(Ti: Pose, Tj: Pose, f: BetweenFactor):
    r = between_residual(Ti, Tj, f)
    Jr_inv = lg.se3_right_jacobian_inv(r)
    Ji = -Jr_inv @ lg.adjoint(lg.between(Tj, Ti))
    return Ji, Jr_inv


# --------------------------------------------------------------------------
# landmark projection


@dataclass(frozen=True, eq=False)
class ProjectionFactor(Factor):
    frame: int
    landmark_var: int
    pixel: np.ndarray
    noise_sigma: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=float).reshape(2))
        object.__setattr__(self, "noise_sigma", _spd(self.noise_sigma, 2, "projection factor"))

    def keys(self):
        return (pose_key(self.frame), landmark_key(self.landmark_var))

    def evaluate(self, values, K=None):
        T = values.pose(self.frame)
        L = values.landmark(self.landmark_var)
        r = projection_residual(T, L, self, K)
        return r, list(projection_jacobians(T, L, self, K))


def _landmark_in_camera(T: Pose, L):
    Y = T.R.T @ (np.asarray(L, dtype=float) - T.t)
    if Y[2] <= Z_MIN:
        raise CheiralityViolation(f"landmark is behind the camera (z={Y[2]:.3g})")
    return Y


def projection_residual(T: Pose, L, f: ProjectionFactor, K: PinholeIntrinsics) -> np.ndarray:
    Y = _landmark_in_camera(T, L)
    return f.pixel - np.array([K.fx * Y[0] / Y[2] + K.cx, K.fy * Y[1] / Y[2] + K.cy])


def projection_jacobians(T: Pose, L, f: ProjectionFactor, K: PinholeIntrinsics):
    """``(J_pose 2x6, J_landmark 2x3)``."""
    Y = _landmark_in_camera(T, L)
    Jp = project_jacobian(K, Y)
    dY = np.hstack([lg.hat(Y), -np.eye(3)])
    return -Jp @ dY, -Jp @ T.R.T
