"""Undistorted pinhole camera with inverse-depth back projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CheiralityViolation, InvalidInverseDepth, ValidationError

Z_MIN = 1e-4


@dataclass(frozen=True)
class PinholeIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: float
    height: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.width, self.height)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValidationError("principal point must lie inside the image")

    def in_frame(self, uv) -> bool:
        u, v = uv
        return 0.0 <= u < self.width and 0.0 <= v < self.height


def _check_depth(z, what="point"):
    if z <= Z_MIN:
        raise CheiralityViolation(f"{what} at z={z:.3g} is not in front of the camera")


def project(K: PinholeIntrinsics, X) -> np.ndarray:
    x, y, z = X
    _check_depth(z)
    return np.array([K.fx * x / z + K.cx, K.fy * y / z + K.cy])


def back_project(K: PinholeIntrinsics, p, d: float) -> np.ndarray:
    """Point along the ray through pixel ``p`` at inverse depth ``d``."""
    if not d > 0:
        raise InvalidInverseDepth(f"inverse depth must be positive, got {d}")
    return bearing(K, p) / d


def bearing(K: PinholeIntrinsics, p) -> np.ndarray:
    """Ray through ``p`` normalized to ``z = 1``."""
    u, v = p
    return np.array([(u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0])


def project_jacobian(K: PinholeIntrinsics, X) -> np.ndarray:
    """``d project / d X`` as a 2x3 matrix."""
    x, y, z = X
    _check_depth(z)
    iz = 1.0 / z
    return np.array(
        [
            [K.fx * iz, 0.0, -K.fx * x * iz * iz],
            [0.0, K.fy * iz, -K.fy * y * iz * iz],
        ]
    )
