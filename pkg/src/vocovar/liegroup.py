"""SO(3) / SE(3) utilities.

Tangent vectors are ordered ``(phi, rho)``: rotation first, translation
second. Perturbations act on the right, ``T [+] xi = T * Exp(xi)``, so pose
uncertainty lives in the body frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

SMALL_ANGLE = 1e-6
# series expansions for the Jacobian coefficients, whose closed forms cancel badly
SERIES_ANGLE = 1e-2
# switch to the axis-from-diagonal log branch this close to pi
NEAR_PI = 1e-3


def hat(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=float
    )


def vee(W: np.ndarray) -> np.ndarray:
    return np.array([W[2, 1], W[0, 2], W[1, 0]], dtype=float)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with rotation ``R`` and translation ``t`` (camera-to-world)."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", _frozen(self.R).reshape(3, 3))
        object.__setattr__(self, "t", _frozen(self.t).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "Pose":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.R
        M[:3, 3] = self.t
        return M

    def act(self, X: np.ndarray) -> np.ndarray:
        """Apply the transform to a point (or an ``(N, 3)`` array of points)."""
        return np.asarray(X) @ self.R.T + self.t

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def to_vector7(self) -> np.ndarray:
        """``(qw, qx, qy, qz, tx, ty, tz)`` with ``qw >= 0``."""
        qx, qy, qz, qw = _ScipyRotation.from_matrix(self.R).as_quat()
        q = np.array([qw, qx, qy, qz])
        if q[0] < 0:
            q = -q
        return np.concatenate([q, self.t])

    @classmethod
    def from_vector7(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float)
        q = v[:4]
        nq = np.linalg.norm(q)
        if not np.isfinite(nq) or nq == 0.0:
            raise ValueError("quaternion has zero norm")
        qw, qx, qy, qz = q / nq
        R = _ScipyRotation.from_quat([qx, qy, qz, qw]).as_matrix()
        return cls(R, v[4:7])

    def __repr__(self):
        return f"Pose(q={np.round(self.to_vector7()[:4], 6)}, t={np.round(self.t, 6)})"


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Rodrigues formula; Taylor branch below ``SMALL_ANGLE``."""
    omega = np.asarray(omega, dtype=float)
    theta2 = float(omega @ omega)
    theta = np.sqrt(theta2)
    W = hat(omega)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    return np.eye(3) + a * W + b * (W @ W)


def so3_log(R: np.ndarray) -> np.ndarray:
    """Principal logarithm, ``|result| <= pi``."""
    R = np.asarray(R, dtype=float)
    w = vee(R - R.T)  # = 2 sin(theta) axis
    s = 0.5 * np.linalg.norm(w)
    c = 0.5 * (np.trace(R) - 1.0)
    theta = np.arctan2(s, c)
    if theta < SMALL_ANGLE:
        return 0.5 * (1.0 + theta * theta / 6.0) * w
    if np.pi - theta > NEAR_PI:
        return (theta / (2.0 * s)) * w
    # near the cut locus: axis from the symmetric part, sign from the skew part
    S = 0.5 * (R + R.T)
    aaT = (S - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(aaT)))
    axis = aaT[:, k] / np.sqrt(aaT[k, k])
    if axis @ w < 0:
        axis = -axis
    return theta * axis / np.linalg.norm(axis)


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    W = hat(phi)
    if theta < SERIES_ANGLE:
        a = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
        b = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
    else:
        a = (1.0 - np.cos(theta)) / theta2
        b = (theta - np.sin(theta)) / (theta2 * theta)
    return np.eye(3) + a * W + b * (W @ W)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    W = hat(phi)
    if theta < SERIES_ANGLE:
        b = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    else:
        b = 1.0 / theta2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * W + b * (W @ W)


def so3_right_jacobian(phi):
    return so3_left_jacobian(-np.asarray(phi, dtype=float))


def so3_right_jacobian_inv(phi):
    return so3_left_jacobian_inv(-np.asarray(phi, dtype=float))


def _se3_q(phi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    # translational off-diagonal block of the SE(3) left Jacobian
    theta2 = float(phi @ phi)
    theta = np.sqrt(theta2)
    P = hat(phi)
    Rh = hat(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    if theta < SERIES_ANGLE:
        c1 = 1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0
        c2 = 1.0 / 24.0 - theta2 / 720.0 + theta2 * theta2 / 40320.0
        c3 = 1.0 / 120.0 - theta2 / 2520.0 + theta2 * theta2 / 120960.0
    else:
        s, c = np.sin(theta), np.cos(theta)
        c1 = (theta - s) / (theta2 * theta)
        c2 = (theta2 + 2.0 * c - 2.0) / (2.0 * theta2 * theta2)
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta2 * theta2 * theta)
    return (
        0.5 * Rh
        + c1 * (PR + RP + PRP)
        + c2 * (P @ PR + RP @ P - 3.0 * PRP)
        + c3 * (PRP @ P + P @ PRP)
    )


def se3_exp(xi: np.ndarray) -> Pose:
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    return Pose(so3_exp(phi), so3_left_jacobian(phi) @ rho)


def se3_log(T: Pose) -> np.ndarray:
    phi = so3_log(T.R)
    return np.concatenate([phi, so3_left_jacobian_inv(phi) @ T.t])


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    J = so3_left_jacobian(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = J
    out[3:, 3:] = J
    out[3:, :3] = _se3_q(phi, rho)
    return out


def se3_right_jacobian(xi: np.ndarray) -> np.ndarray:
    return se3_left_jacobian(-np.asarray(xi, dtype=float))


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = -np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    Ji = so3_left_jacobian_inv(phi)
    out = np.zeros((6, 6))
    out[:3, :3] = Ji
    out[3:, 3:] = Ji
    out[3:, :3] = -Ji @ _se3_q(phi, rho) @ Ji
    return out


def adjoint(T: Pose) -> np.ndarray:
    """6x6 adjoint in ``(phi, rho)`` ordering: ``T Exp(xi) T^-1 = Exp(Ad xi)``."""
    out = np.zeros((6, 6))
    out[:3, :3] = T.R
    out[3:, 3:] = T.R
    out[3:, :3] = hat(T.t) @ T.R
    return out


def compose(Ta: Pose, Tb: Pose) -> Pose:
    return Pose(Ta.R @ Tb.R, Ta.R @ Tb.t + Ta.t)


def inverse(T: Pose) -> Pose:
    Rt = T.R.T
    return Pose(Rt, -Rt @ T.t)


def between(Ta: Pose, Tb: Pose) -> Pose:
    """``Ta^-1 * Tb``."""
    Rt = Ta.R.T
    return Pose(Rt @ Tb.R, Rt @ (Tb.t - Ta.t))


def boxplus(T: Pose, xi: np.ndarray) -> Pose:
    return compose(T, se3_exp(xi))


def boxminus(Ta: Pose, Tb: Pose) -> np.ndarray:
    """Local coordinates of ``Ta`` around ``Tb``; inverse of :func:`boxplus`."""
    return se3_log(between(Tb, Ta))
