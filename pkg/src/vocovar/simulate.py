"""Desk-scale synthetic scenes with exact ground truth.

Landmarks are scattered in front of a camera moving along a chosen
trajectory. Each keyframe samples a few of its visible landmarks as pixel
samples with true inverse depth; flow targets in co-visible keyframes are the
true projections plus Gaussian pixel noise.

Two keyframes are co-visible when they are at most ``covis_span`` apart in
index, or when they are spatially close (within ``revisit_radius`` of each
other with optical axes less than ``revisit_angle_deg`` apart). The second
rule is what produces off-band loop closures in the ``loop`` and ``revisit``
trajectories.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import liegroup as lg
from .camera import PinholeIntrinsics
from .dataset import FlowMeasurement, Keyframe, KeyframeDataset, PixelSample
from .errors import DegenerateScenario, ValidationError
from .liegroup import Pose

KINDS = ("line", "arc", "loop", "revisit")
DEFAULT_INTRINSICS = dict(fx=320.0, fy=320.0, cx=320.0, cy=240.0, width=640.0, height=480.0)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = "line"
    num_keyframes: int = 10
    num_landmarks: int = 400
    pixel_sigma: float = 1.0
    covis_span: int = 2
    seed: int = 0
    samples_per_keyframe: int = 24
    step: float = 0.15
    revisit_radius: float | None = None
    revisit_angle_deg: float = 30.0
    init_pose_sigma: float = 0.0
    noise_seed: int | None = None
    intrinsics: dict = field(default_factory=lambda: dict(DEFAULT_INTRINSICS))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown trajectory kind {self.kind!r}; expected one of {KINDS}")
        for name in ("num_keyframes", "num_landmarks", "covis_span", "samples_per_keyframe"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.num_keyframes < 2:
            raise ValidationError("a scenario needs at least two keyframes")
        if self.pixel_sigma < 0 or self.init_pose_sigma < 0:
            raise ValidationError("noise sigmas must be non-negative")
        if self.step <= 0:
            raise ValidationError("step must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            from .errors import ParseError

            raise ParseError(f"{path}: line {exc.lineno}: {exc.msg}") from None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    poses: dict
    landmarks: np.ndarray
    sample_landmarks: tuple  # per keyframe, landmark id of every sample
    inv_depths: dict  # global sample index -> true inverse depth


def look_at(center, target, up=(0.0, -1.0, 0.0)) -> Pose:
    """Camera-to-world pose at ``center`` with +z pointing at ``target`` (y down)."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(-np.asarray(up, dtype=float), z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Pose(np.column_stack([x, y, z]), center)


def _trajectory(spec: ScenarioSpec):
    n, step = spec.num_keyframes, spec.step
    if spec.kind == "line":
        return [Pose(np.eye(3), [k * step, 0.0, 0.0]) for k in range(n)]
    if spec.kind == "revisit":
        half = (n + 1) // 2
        poses = []
        for k in range(n):
            if k < half:
                poses.append(Pose(np.eye(3), [k * step, 0.0, 0.0]))
            else:
                back = 2 * half - 1 - k
                poses.append(Pose(np.eye(3), [back * step, 0.05, -0.05]))
        return poses
    if spec.kind == "arc":
        radius = 4.0
        span = step * (n - 1) / radius
        angles = np.linspace(-span / 2, span / 2, n)
        target = np.array([0.0, 0.0, radius])
        return [look_at([radius * np.sin(a), 0.0, radius - radius * np.cos(a)], target) for a in angles]
    # loop: circle in the horizontal plane, camera facing outward
    radius = max(step * n / (2 * np.pi), 0.3)
    angles = 2 * np.pi * np.arange(n) / n
    out = []
    for a in angles:
        c = np.array([radius * np.sin(a), 0.0, radius * np.cos(a)])
        out.append(look_at(c, 2.0 * c))
    return out


def _landmarks(spec: ScenarioSpec, poses, rng) -> np.ndarray:
    m = spec.num_landmarks
    if spec.kind in ("line", "revisit"):
        xs = [p.t[0] for p in poses]
        lo, hi = min(xs) - 2.0, max(xs) + 2.0
        return np.column_stack([rng.uniform(lo, hi, m), rng.uniform(-1.5, 1.5, m), rng.uniform(2.5, 5.0, m)])
    if spec.kind == "arc":
        c = np.array([0.0, 0.0, 4.0])
        return c + rng.uniform(-1.2, 1.2, (m, 3))
    radius = np.linalg.norm(poses[0].t)
    ang = rng.uniform(0, 2 * np.pi, m)
    rad = radius + rng.uniform(2.5, 5.0, m)
    return np.column_stack([rad * np.sin(ang), rng.uniform(-1.5, 1.5, m), rad * np.cos(ang)])


def _project_all(K: PinholeIntrinsics, T: Pose, L: np.ndarray, margin=10.0):
    Y = (L - T.t) @ T.R
    z = Y[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.column_stack([K.fx * Y[:, 0] / z + K.cx, K.fy * Y[:, 1] / z + K.cy])
    vis = (z > 0.5) & (uv[:, 0] > margin) & (uv[:, 0] < K.width - margin)
    vis &= (uv[:, 1] > margin) & (uv[:, 1] < K.height - margin)
    return uv, z, vis


def covisible_pairs(spec: ScenarioSpec, poses) -> set:
    """Unordered keyframe pairs that get measurements (index band plus revisits)."""
    n = len(poses)
    centers = np.array([p.t for p in poses])
    axes = np.array([p.R[:, 2] for p in poses])
    radius = spec.revisit_radius
    if radius is None:
        gaps = np.linalg.norm(np.diff(centers, axis=0), axis=1)
        radius = 1.5 * float(np.median(gaps))
    cos_max = np.cos(np.deg2rad(spec.revisit_angle_deg))
    pairs = set()
    for i in range(n):
        for j in range(i + 1, n):
            if j - i <= spec.covis_span:
                pairs.add((i, j))
            elif np.linalg.norm(centers[i] - centers[j]) <= radius and axes[i] @ axes[j] >= cos_max:
                pairs.add((i, j))
    return pairs


def simulate_scenario(spec: ScenarioSpec):
    """Returns ``(dataset, ground_truth)``; deterministic in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    # noise_seed redraws the noise while keeping the geometry fixed
    noise = rng if spec.noise_seed is None else np.random.default_rng([spec.seed, spec.noise_seed])
    K = PinholeIntrinsics(**spec.intrinsics)
    gt_poses = _trajectory(spec)
    L = _landmarks(spec, gt_poses, rng)
    n = len(gt_poses)

    proj = [_project_all(K, T, L) for T in gt_poses]
    for k, (_, _, vis) in enumerate(proj):
        if not vis.any():
            raise DegenerateScenario(f"no landmark is visible in keyframe {k}")

    pairs = covisible_pairs(spec, gt_poses)
    nbrs = {k: sorted({j for p in pairs for j in p if k in p} - {k}) for k in range(n)}

    sample_lm = []
    for k in range(n):
        vis = proj[k][2]
        shared = np.zeros(len(L), dtype=bool)
        for j in nbrs[k]:
            shared |= proj[j][2]
        cand = np.flatnonzero(vis & shared)
        if cand.size == 0:
            raise DegenerateScenario(f"keyframe {k} shares no visible landmark with its co-visible keyframes")
        take = min(spec.samples_per_keyframe, cand.size)
        sample_lm.append(np.sort(rng.choice(cand, size=take, replace=False)))

    keyframes = []
    gt_depth = {}
    offset = 0
    for k in range(n):
        uv, z, _ = proj[k]
        smp = tuple(PixelSample(float(uv[m, 0]), float(uv[m, 1]), float(1.0 / z[m])) for m in sample_lm[k])
        for s, p in enumerate(smp):
            gt_depth[offset + s] = p.inv_depth
        offset += len(smp)
        pose = gt_poses[k]
        if spec.init_pose_sigma > 0:
            pose = lg.boxplus(pose, noise.normal(0.0, spec.init_pose_sigma, 6))
        keyframes.append(Keyframe(k, pose, smp))

    sigma = None
    if spec.pixel_sigma > 0 and spec.pixel_sigma != 1.0:
        s2 = float(spec.pixel_sigma) ** 2
        sigma = (s2, 0.0, s2)
    meas = []
    for i in range(n):
        for j in nbrs[i]:
            uv_j, _, vis_j = proj[j]
            for s, m in enumerate(sample_lm[i]):
                if not vis_j[m]:
                    continue
                target = uv_j[m] + (noise.normal(0.0, spec.pixel_sigma, 2) if spec.pixel_sigma > 0 else 0.0)
                meas.append(FlowMeasurement(i, j, s, (float(target[0]), float(target[1])), sigma))

    for k in range(1, n):
        if not any(m.frame_i == k and m.frame_j < k for m in meas):
            raise DegenerateScenario(f"keyframe {k} has no measurement to an earlier keyframe")

    meta = {"pixel_scale": "1.0", "source": f"simulate:{spec.kind}:seed={spec.seed}"}
    ds = KeyframeDataset(K, tuple(keyframes), tuple(meas), meta).validate()
    gt = GroundTruth({k: T for k, T in enumerate(gt_poses)}, L, tuple(sample_lm), gt_depth)
    return ds, gt
