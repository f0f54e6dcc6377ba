"""Keyframe dataset: in-memory form, validation, and the line-oriented file format.

File layout (UTF-8, one record per line, ``#`` starts a comment)::

    vocovar-dataset v1
    K fx fy cx cy w h
    F id qw qx qy qz tx ty tz
    S frame u v d
    M i j sample_idx u* v* [s11 s12 s22]

Samples are indexed per frame in the order their ``S`` lines appear. Meta
data rides in comments of the form ``# meta <key> <value>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import PinholeIntrinsics
from .errors import ParseError, ValidationError
from .liegroup import Pose

HEADER = "vocovar-dataset"
VERSION = "v1"


@dataclass(frozen=True)
class PixelSample:
    u: float
    v: float
    inv_depth: float

    @property
    def pixel(self) -> np.ndarray:
        return np.array([self.u, self.v])


@dataclass(frozen=True, eq=False)
class Keyframe:
    id: int
    pose: Pose
    samples: tuple = ()


@dataclass(frozen=True, eq=False)
class FlowMeasurement:
    frame_i: int
    frame_j: int
    sample_index: int
    target: tuple
    sigma: tuple | None = None  # (s11, s12, s22), pixels^2

    def sigma_matrix(self, default_sigma: float = 1.0) -> np.ndarray:
        if self.sigma is None:
            return default_sigma**2 * np.eye(2)
        s11, s12, s22 = self.sigma
        return np.array([[s11, s12], [s12, s22]])


@dataclass(frozen=True, eq=False)
class KeyframeDataset:
    intrinsics: PinholeIntrinsics
    keyframes: tuple
    measurements: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def num_keyframes(self) -> int:
        return len(self.keyframes)

    def keyframe(self, i: int) -> Keyframe:
        return self.keyframes[i]

    def sample_offsets(self) -> list[int]:
        """Global index of the first sample of each keyframe."""
        out, acc = [], 0
        for kf in self.keyframes:
            out.append(acc)
            acc += len(kf.samples)
        return out

    def prefix(self, n: int) -> "KeyframeDataset":
        """Keyframes ``0..n-1`` and the measurements among them."""
        meas = tuple(m for m in self.measurements if m.frame_i < n and m.frame_j < n)
        return replace(self, keyframes=self.keyframes[:n], measurements=meas)

    def filter_measurements(self, keep) -> "KeyframeDataset":
        return replace(self, measurements=tuple(m for m in self.measurements if keep(m)))

    def with_poses(self, poses) -> "KeyframeDataset":
        kfs = tuple(replace(kf, pose=poses.get(kf.id, kf.pose)) for kf in self.keyframes)
        return replace(self, keyframes=kfs)

    def validate(self) -> "KeyframeDataset":
        ids = [kf.id for kf in self.keyframes]
        if ids != list(range(len(ids))):
            raise ValidationError(f"keyframe ids must be dense 0..n-1 in order, got {ids}")
        for kf in self.keyframes:
            for s, smp in enumerate(kf.samples):
                if not (math.isfinite(smp.u) and math.isfinite(smp.v)):
                    raise ValidationError(f"sample {s} of keyframe {kf.id} has a non-finite pixel")
                if not smp.inv_depth > 0:
                    raise ValidationError(
                        f"sample {s} of keyframe {kf.id} has non-positive inverse depth {smp.inv_depth}"
                    )
        n = len(ids)
        for q, m in enumerate(self.measurements):
            name = f"measurement {q} ({m.frame_i}->{m.frame_j})"
            if not (0 <= m.frame_i < n and 0 <= m.frame_j < n):
                raise ValidationError(f"{name} references a keyframe outside 0..{n - 1}")
            if m.frame_i == m.frame_j:
                raise ValidationError(f"{name} links a keyframe to itself")
            if not 0 <= m.sample_index < len(self.keyframes[m.frame_i].samples):
                raise ValidationError(f"{name} references missing sample {m.sample_index} of keyframe {m.frame_i}")
            if not all(math.isfinite(c) for c in m.target):
                raise ValidationError(f"{name} has a non-finite target")
            if m.sigma is not None:
                S = m.sigma_matrix()
                if not np.all(np.isfinite(S)) or np.linalg.eigvalsh(S).min() <= 0:
                    raise ValidationError(f"{name} has a sigma that is not positive definite")
        return self


# ---------------------------------------------------------------------------
# text format


def _fmt(x: float) -> str:
    return repr(float(x))


def dumps(ds: KeyframeDataset) -> str:
    K = ds.intrinsics
    lines = [f"{HEADER} {VERSION}"]
    for key in sorted(ds.meta):
        lines.append(f"# meta {key} {ds.meta[key]}")
    lines.append("K " + " ".join(_fmt(v) for v in (K.fx, K.fy, K.cx, K.cy, K.width, K.height)))
    for kf in ds.keyframes:
        lines.append(f"F {kf.id} " + " ".join(_fmt(v) for v in kf.pose.to_vector7()))
    for kf in ds.keyframes:
        for s in kf.samples:
            lines.append(f"S {kf.id} {_fmt(s.u)} {_fmt(s.v)} {_fmt(s.inv_depth)}")
    for m in ds.measurements:
        rec = f"M {m.frame_i} {m.frame_j} {m.sample_index} {_fmt(m.target[0])} {_fmt(m.target[1])}"
        if m.sigma is not None:
            rec += " " + " ".join(_fmt(v) for v in m.sigma)
        lines.append(rec)
    return "\n".join(lines) + "\n"


def save_dataset(ds: KeyframeDataset, path) -> None:
    Path(path).write_text(dumps(ds), encoding="utf-8")


def _numbers(fields, lineno, record, count, ints=0):
    if len(fields) not in count:
        raise ParseError(
            f"line {lineno}: {record} record expects {' or '.join(str(c) for c in count)} fields, got {len(fields)}"
        )
    out = []
    for k, tok in enumerate(fields):
        try:
            out.append(int(tok) if k < ints else float(tok))
        except ValueError:
            raise ParseError(f"line {lineno}, field {k + 2}: cannot parse {tok!r} in {record} record") from None
    return out


def loads(text: str) -> KeyframeDataset:
    lines = text.splitlines()
    if not lines:
        raise ParseError("line 1: empty file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != HEADER:
        raise ParseError(f"line 1: expected header '{HEADER} {VERSION}'")
    if head[1] != VERSION:
        raise ValidationError(f"line 1: unsupported dataset version {head[1]!r} (expected {VERSION})")

    meta: dict = {}
    K = None
    poses: dict[int, Pose] = {}
    pose_line: dict[int, int] = {}
    samples: dict[int, list] = {}
    sample_lines: list[tuple[int, int]] = []
    meas = []
    meas_lines = []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split(None, 2)
            if len(parts) == 3 and parts[0] == "meta":
                meta[parts[1]] = parts[2]
            continue
        tag, *fields = line.split()
        if tag == "K":
            if K is not None:
                raise ParseError(f"line {lineno}: duplicate K record")
            fx, fy, cx, cy, w, h = _numbers(fields, lineno, "K", (6,))
            try:
                K = PinholeIntrinsics(fx, fy, cx, cy, w, h)
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
        elif tag == "F":
            vals = _numbers(fields, lineno, "F", (8,), ints=1)
            fid = vals[0]
            if fid in poses:
                raise ValidationError(f"line {lineno}: duplicate keyframe {fid}")
            if not all(math.isfinite(v) for v in vals[1:]):
                raise ValidationError(f"line {lineno}: keyframe {fid} pose is not finite")
            try:
                poses[fid] = Pose.from_vector7(vals[1:])
            except ValueError as exc:
                raise ValidationError(f"line {lineno}: keyframe {fid}: {exc}") from None
            pose_line[fid] = lineno
        elif tag == "S":
            frame, u, v, d = _numbers(fields, lineno, "S", (4,), ints=1)
            if not d > 0:
                raise ValidationError(f"line {lineno}: sample has non-positive inverse depth {d}")
            samples.setdefault(frame, []).append(PixelSample(u, v, d))
            sample_lines.append((lineno, frame))
        elif tag == "M":
            vals = _numbers(fields, lineno, "M", (5, 8), ints=3)
            i, j, s = vals[:3]
            sigma = tuple(vals[5:8]) if len(vals) == 8 else None
            meas.append(FlowMeasurement(i, j, s, (vals[3], vals[4]), sigma))
            meas_lines.append(lineno)
        else:
            raise ParseError(f"line {lineno}, field 1: unknown record type {tag!r}")

    if K is None:
        raise ValidationError("missing K (intrinsics) record")
    n = len(poses)
    if sorted(poses) != list(range(n)):
        raise ValidationError(f"keyframe ids must be dense 0..{n - 1}, got {sorted(poses)}")
    for lineno, frame in sample_lines:
        if frame not in poses:
            raise ValidationError(f"line {lineno}: sample references unknown keyframe {frame}")
    kfs = tuple(Keyframe(i, poses[i], tuple(samples.get(i, ()))) for i in range(n))
    ds = KeyframeDataset(K, kfs, tuple(meas), meta)
    try:
        ds.validate()
    except ValidationError as exc:
        msg = str(exc)
        if msg.startswith("measurement "):
            q = int(msg.split()[1])
            msg = f"line {meas_lines[q]}: {msg}"
        raise ValidationError(msg) from None
    return ds


def load_dataset(path) -> KeyframeDataset:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from None
    return loads(text)
