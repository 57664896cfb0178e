"""Image-space primitives: boxes, IoU, similarity calibration and homographies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, FitError, ProjectionError


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box stored as centroid + size.

    The Hidden sentinel is the zero vector with ``hidden=True``; use ``HIDDEN``.
    """

    cx: float
    cy: float
    w: float
    h: float
    hidden: bool = False

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite box {vals}")
        if self.hidden:
            if any(vals):
                raise DomainError("Hidden box must be the zero vector")
        elif self.w <= 0 or self.h <= 0:
            raise DomainError(f"box size must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BoundingBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    @property
    def x1(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x2(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y2(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h

    def corners(self) -> list[Point2]:
        """Corners in TL, TR, BR, BL order."""
        return [Point2(self.x1, self.y1), Point2(self.x2, self.y1),
                Point2(self.x2, self.y2), Point2(self.x1, self.y2)]

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=float)

    def as_list(self) -> list[float]:
        return [self.cx, self.cy, self.w, self.h]


HIDDEN = BoundingBox(0.0, 0.0, 0.0, 0.0, hidden=True)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    if a.hidden or b.hidden:
        raise DomainError("IoU is undefined for Hidden boxes")
    if a == b:
        return 1.0
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    # corner arithmetic can overshoot by an ulp
    return min(1.0, inter / (a.area + b.area - inter))


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) centroid-size arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax1, ay1 = a[:, 0] - a[:, 2] / 2, a[:, 1] - a[:, 3] / 2
    ax2, ay2 = a[:, 0] + a[:, 2] / 2, a[:, 1] + a[:, 3] / 2
    bx1, by1 = b[:, 0] - b[:, 2] / 2, b[:, 1] - b[:, 3] / 2
    bx2, by2 = b[:, 0] + b[:, 2] / 2, b[:, 1] + b[:, 3] / 2
    iw = np.minimum(ax2[:, None], bx2[None]) - np.maximum(ax1[:, None], bx1[None])
    ih = np.minimum(ay2[:, None], by2[None]) - np.maximum(ay1[:, None], by1[None])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None] - inter
    return np.minimum(inter / union, 1.0)


# ---------------------------------------------------------------- similarity


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    residuals: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise DomainError(f"similarity scale must be positive, got {self.scale}")

    @property
    def translation(self) -> tuple[float, float]:
        return (self.tx, self.ty)

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        k = self.scale
        return np.array([[k * c, -k * s, self.tx], [k * s, k * c, self.ty], [0.0, 0.0, 1.0]])

    def apply(self, p: Point2) -> Point2:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        k = self.scale
        return Point2(k * (c * p.x - s * p.y) + self.tx, k * (s * p.x + c * p.y) + self.ty)

    def apply_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        m = self.matrix()
        return pts @ m[:2, :2].T + m[:2, 2]


def fit_similarity(src: Sequence[Point2], dst: Sequence[Point2]) -> SimilarityTransform:
    """Closed-form least-squares similarity (no reflection) mapping src onto dst.

    Treating points as complex numbers a, b (centred), the optimum of
    sum |b - z a|^2 is z = sum(conj(a) b) / sum(|a|^2); scale = |z|, angle = arg z.
    """
    a = np.asarray(src, dtype=float).reshape(-1, 2)
    b = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(a) != len(b):
        raise FitError("src and dst must have equal length")
    if len(a) < 2:
        raise FitError(f"need at least 2 correspondences, got {len(a)}")
    za = a[:, 0] + 1j * a[:, 1]
    zb = b[:, 0] + 1j * b[:, 1]
    ma, mb = za.mean(), zb.mean()
    ca, cb = za - ma, zb - mb
    denom = float(np.sum(np.abs(ca) ** 2))
    if denom <= 1e-18 * max(1.0, float(np.max(np.abs(za))) ** 2):
        raise FitError("degenerate correspondences: all source points coincide")
    z = np.sum(np.conj(ca) * cb) / denom
    if abs(z) == 0:
        raise FitError("degenerate correspondences: zero scale")
    t = mb - z * ma
    est = z * za + t
    res = tuple(float(r) for r in np.abs(est - zb))
    return SimilarityTransform(float(abs(z)), float(np.angle(z)), float(t.real), float(t.imag), res)


def transform_bbox(t: SimilarityTransform, b: BoundingBox) -> BoundingBox:
    """Map a box through t, keeping it axis-aligned.

    The result is the axis-aligned box whose edges pass through the midpoints
    of the four transformed edges (valid for small rotations).
    """
    if b.hidden:
        raise DomainError("cannot transform a Hidden box")
    tl, tr, br, bl = (t.apply(p) for p in b.corners())
    top = (tl.y + tr.y) / 2.0
    right = (tr.x + br.x) / 2.0
    bottom = (br.y + bl.y) / 2.0
    left = (bl.x + tl.x) / 2.0
    return BoundingBox.from_corners(min(left, right), min(top, bottom),
                                    max(left, right), max(top, bottom))


# ---------------------------------------------------------------- homography


@dataclass(frozen=True, eq=False)
class Homography:
    m: np.ndarray
    residuals: tuple[float, ...] = ()

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise DomainError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise DomainError("homography has non-finite entries")
        if abs(np.linalg.det(m)) < 1e-300:
            raise DomainError("homography is singular")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def project_many(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        hom = pts @ self.m[:, :2].T + self.m[:, 2]
        w = hom[:, 2]
        if np.any(w == 0):
            raise ProjectionError("point maps to infinity")
        return hom[:, :2] / w[:, None]


def project(h: Homography, p: Point2) -> Point2:
    x, y = float(p[0]), float(p[1])
    m = h.m
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    if w == 0:
        raise ProjectionError(f"point {p} maps to infinity")
    return Point2((m[0, 0] * x + m[0, 1] * y + m[0, 2]) / w,
                  (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / w)


def _isotropic_normaliser(pts: np.ndarray) -> np.ndarray:
    # translate to centroid, scale mean distance to sqrt(2)
    c = pts.mean(axis=0)
    d = np.mean(np.linalg.norm(pts - c, axis=1))
    if d < 1e-12:
        raise FitError("degenerate configuration: points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def fit_homography(world: Sequence[Point2], image: Sequence[Point2]) -> Homography:
    """Normalised direct linear transform from world to image points."""
    x1 = np.asarray(world, dtype=float).reshape(-1, 2)
    x2 = np.asarray(image, dtype=float).reshape(-1, 2)
    if len(x1) != len(x2):
        raise FitError("world and image must have equal length")
    n = len(x1)
    if n < 4:
        raise FitError(f"need at least 4 correspondences, got {n}")
    t1 = _isotropic_normaliser(x1)
    t2 = _isotropic_normaliser(x2)
    p1 = x1 @ t1[:2, :2].T + t1[:2, 2]
    p2 = x2 @ t2[:2, :2].T + t2[:2, 2]
    a = np.zeros((2 * n, 9))
    ones = np.ones(n)
    X = np.column_stack([p1, ones])
    a[0::2, 0:3] = X
    a[0::2, 6:9] = -p2[:, 0:1] * X
    a[1::2, 3:6] = X
    a[1::2, 6:9] = -p2[:, 1:2] * X
    if len(a) < 9:
        # pad so the economy SVD still exposes the null vector
        a = np.vstack([a, np.zeros((9 - len(a), 9))])
    _, sv, vt = np.linalg.svd(a, full_matrices=False)
    # a well-posed fit has a one-dimensional null space
    if sv[7] <= 1e-10 * sv[0]:
        raise FitError("rank-deficient correspondences (collinear or repeated points)")
    hn = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t2) @ hn @ t1
    if abs(m[2, 2]) < 1e-15:
        raise FitError("fitted homography cannot be normalised (m22 == 0)")
    m = m / m[2, 2]
    h = Homography(m)
    res = np.linalg.norm(h.project_many(x1) - x2, axis=1)
    return Homography(m, tuple(float(r) for r in res))
