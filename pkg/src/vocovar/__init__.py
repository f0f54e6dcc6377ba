"""Marginal pose covariance recovery for dense bundle-adjustment visual odometry."""

from .kernels import BACKEND
from .liegroup import Pose

__all__ = ["BACKEND", "Pose"]
__version__ = "0.1.0"
