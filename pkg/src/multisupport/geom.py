"""Planar pose algebra, rotation encodings, and polygon overlap computations.

Conventions: angles in radians normalized to (-pi, pi], polygons are
counter-clockwise vertex arrays of shape (V, 2) in meters, rotations are
3x3 orthonormal matrices with det +1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Vertices closer than this are considered coincident when clipping.
_CLIP_EPS = 1e-12


class DegenerateInputError(ValueError):
    """Raised when a rotation encoding cannot be reconstructed."""


class ShapeMismatchError(ValueError):
    """Raised when two shapes expected to be congruent have different areas."""


def wrap_angle(angle: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    return math.pi - (math.pi - angle) % TWO_PI


@dataclass
class Pose2:
    """Planar pose: position in meters, heading normalized to (-pi, pi]."""

    position: np.ndarray
    heading: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(2)
        self.heading = wrap_angle(float(self.heading))

    @classmethod
    def identity(cls) -> "Pose2":
        return cls(np.zeros(2), 0.0)

    def copy(self) -> "Pose2":
        return Pose2(self.position.copy(), self.heading)

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.heading), math.sin(self.heading)
        return np.array([[c, -s], [s, c]])

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map body-frame points (..., 2) into the world frame."""
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation().T + self.position

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return (points - self.position) @ self.rotation()

    def compose(self, other: "Pose2") -> "Pose2":
        """self * other: apply other in self's frame."""
        return Pose2(self.transform(other.position), self.heading + other.heading)

    def relative_to(self, reference: "Pose2") -> "Pose2":
        """Express self in reference's frame (reference^-1 * self)."""
        return Pose2(
            reference.inverse_transform(self.position),
            self.heading - reference.heading,
        )

    def almost_equal(self, other: "Pose2", tol: float = 1e-9) -> bool:
        return (
            float(np.max(np.abs(self.position - other.position))) <= tol
            and abs(wrap_angle(self.heading - other.heading)) <= tol
        )


# ---------------------------------------------------------------------------
# 6D rotation representation and axis-angle maps
# ---------------------------------------------------------------------------


@dataclass
class Rot6:
    """First two columns of a rotation matrix, possibly unnormalized."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(3)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(3)


def rot6_encode(rotation: np.ndarray) -> Rot6:
    """Encode a rotation matrix as its first two columns."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return Rot6(rotation[:, 0].copy(), rotation[:, 1].copy())


def rot6_decode(r: Rot6) -> np.ndarray:
    """Reconstruct a rotation matrix by Gram-Schmidt on the two columns."""
    na = np.linalg.norm(r.a)
    if na < 1e-9:
        raise DegenerateInputError("first column has near-zero norm")
    c0 = r.a / na
    b_orth = r.b - np.dot(c0, r.b) * c0
    nb = np.linalg.norm(b_orth)
    if nb < 1e-9 or np.linalg.norm(np.cross(r.a, r.b)) < 1e-9:
        raise DegenerateInputError("columns are parallel or second is zero")
    c1 = b_orth / nb
    c2 = np.cross(c0, c1)
    return np.stack([c0, c1, c2], axis=1)


def _hat(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, stable near zero angle."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(w))
    big_w = _hat(w)
    if theta < 1e-10:
        return np.eye(3) + big_w + 0.5 * (big_w @ big_w)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * big_w + b * (big_w @ big_w)


def so3_log(rotation: np.ndarray) -> np.ndarray:
    """Log map to a rotation vector with magnitude in [0, pi].

    At angle pi the axis sign is ambiguous; the axis is flipped so its
    largest-magnitude component is positive.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    trace = float(np.trace(rotation))
    cos_theta = max(-1.0, min(1.0, (trace - 1.0) * 0.5))
    theta = math.acos(cos_theta)
    if theta < 1e-10:
        return np.zeros(3)
    if theta > math.pi - 1e-6:
        # Near pi: recover the axis from the symmetric part.
        sym = 0.5 * (rotation + np.eye(3))
        axis = np.sqrt(np.clip(np.diag(sym), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0.0:
            for i in range(3):
                if i != k and abs(sym[k, i]) > 1e-12:
                    axis[i] = math.copysign(axis[i], sym[k, i] / axis[k])
        j = int(np.argmax(np.abs(axis)))
        if axis[j] < 0.0:
            axis = -axis
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            return np.array([math.pi, 0.0, 0.0])
        return axis / norm * theta
    skew = (rotation - rotation.T) / (2.0 * math.sin(theta))
    return np.array([skew[2, 1], skew[0, 2], skew[1, 0]]) * theta


def axis_angle_between(rot_a: np.ndarray, rot_b: np.ndarray) -> np.ndarray:
    """Axis-angle vector of the relative rotation rot_a^-1 * rot_b."""
    return so3_log(np.asarray(rot_a).T @ np.asarray(rot_b))


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# Convex polygons
# ---------------------------------------------------------------------------


def polygon_area(poly: np.ndarray) -> float:
    """Shoelace area; positive for CCW winding."""
    poly = np.asarray(poly, dtype=np.float64)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    poly = np.asarray(poly, dtype=np.float64)
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return np.array([cx, cy])


def convex_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman intersection of two convex CCW polygons."""
    output = [tuple(p) for p in np.asarray(subject, dtype=np.float64)]
    clip = np.asarray(clip, dtype=np.float64)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay
        points = output
        output = []
        prev = points[-1]
        prev_in = ex * (prev[1] - ay) - ey * (prev[0] - ax) >= -_CLIP_EPS
        for cur in points:
            cur_in = ex * (cur[1] - ay) - ey * (cur[0] - ax) >= -_CLIP_EPS
            if cur_in != prev_in:
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                den = ex * dy - ey * dx
                if abs(den) > _CLIP_EPS:
                    t = (ey * (prev[0] - ax) - ex * (prev[1] - ay)) / den
                    output.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    if len(output) < 3:
        return np.zeros((0, 2))
    return np.asarray(output)


def convex_clip_area(subject: np.ndarray, clip: np.ndarray) -> float:
    """Area of the intersection of two convex CCW polygons."""
    inter = convex_clip(subject, clip)
    if len(inter) < 3:
        return 0.0
    return abs(polygon_area(inter))


def point_in_convex(point: np.ndarray, poly: np.ndarray, tol: float = 1e-12) -> bool:
    px, py = float(point[0]), float(point[1])
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -tol:
            return False
    return True


def closest_point_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(np.dot(ab, ab))
    if denom < 1e-18:
        return a.copy()
    t = float(np.dot(p - a, ab)) / denom
    return a + min(1.0, max(0.0, t)) * ab


def closest_point_on_polygon(p: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Closest point on the polygon boundary to p."""
    best, best_d2 = None, math.inf
    n = len(poly)
    for i in range(n):
        q = closest_point_on_segment(p, poly[i], poly[(i + 1) % n])
        d2 = float(np.dot(p - q, p - q))
        if d2 < best_d2:
            best, best_d2 = q, d2
    return best


# ---------------------------------------------------------------------------
# Shape unions (convex decompositions with disjoint interiors)
# ---------------------------------------------------------------------------


@dataclass
class ShapeUnion:
    """Union of convex CCW polygons with pairwise disjoint interiors."""

    parts: list = field(default_factory=list)

    def __post_init__(self):
        self.parts = [np.asarray(p, dtype=np.float64) for p in self.parts]

    @property
    def area(self) -> float:
        return sum(abs(polygon_area(p)) for p in self.parts)

    @property
    def centroid(self) -> np.ndarray:
        total = self.area
        acc = np.zeros(2)
        for p in self.parts:
            acc += abs(polygon_area(p)) * polygon_centroid(p)
        return acc / total

    @property
    def bounding_radius(self) -> float:
        """Max vertex distance from the centroid."""
        c = self.centroid
        return max(float(np.max(np.linalg.norm(p - c, axis=1))) for p in self.parts)

    def transformed(self, pose: Pose2) -> "ShapeUnion":
        return ShapeUnion([pose.transform(p) for p in self.parts])

    def contains(self, point: np.ndarray) -> bool:
        return any(point_in_convex(point, p) for p in self.parts)

    def contains_many(self, points: np.ndarray) -> np.ndarray:
        """Vectorized membership test for an (N, 2) array of points."""
        points = np.asarray(points, dtype=np.float64)
        inside = np.zeros(len(points), dtype=bool)
        for poly in self.parts:
            part_inside = np.ones(len(points), dtype=bool)
            n = len(poly)
            for i in range(n):
                ax, ay = poly[i]
                bx, by = poly[(i + 1) % n]
                cross = (bx - ax) * (points[:, 1] - ay) - (by - ay) * (points[:, 0] - ax)
                part_inside &= cross >= -1e-12
                if not part_inside.any():
                    break
            inside |= part_inside
        return inside

    def bounding_box(self) -> tuple:
        all_pts = np.vstack(self.parts)
        return all_pts.min(axis=0), all_pts.max(axis=0)


def overlap_area(a: ShapeUnion, b: ShapeUnion) -> float:
    """Intersection area; exact for disjoint-interior decompositions."""
    total = 0.0
    for pa in a.parts:
        for pb in b.parts:
            total += convex_clip_area(pa, pb)
    return total


def overlap_distance(a: ShapeUnion, b: ShapeUnion) -> float:
    """Normalized overlapping distance sqrt(1 - overlap/area) in [0, 1].

    0 iff the shapes coincide, 1 iff they are disjoint. Both arguments must
    be the same shape placed at (possibly) different poses.
    """
    area_a, area_b = a.area, b.area
    if abs(area_a - area_b) / area_a > 1e-6:
        raise ShapeMismatchError(
            f"shape areas differ: {area_a:.9f} vs {area_b:.9f}"
        )
    ratio = overlap_area(a, b) / area_a
    return math.sqrt(max(0.0, 1.0 - min(1.0, ratio)))


def _rect(cx: float, cy: float, w: float, h: float) -> np.ndarray:
    hw, hh = 0.5 * w, 0.5 * h
    return np.array(
        [[cx - hw, cy - hh], [cx + hw, cy - hh], [cx + hw, cy + hh], [cx - hw, cy + hh]]
    )


def make_t_shape(
    bar_w: float = 0.30,
    bar_h: float = 0.10,
    stem_w: float = 0.10,
    stem_h: float = 0.20,
) -> ShapeUnion:
    """T-shape in body frame: horizontal bar on top, stem hanging below."""
    return ShapeUnion(
        [
            _rect(0.0, 0.5 * bar_h, bar_w, bar_h),
            _rect(0.0, -0.5 * stem_h, stem_w, stem_h),
        ]
    )


def make_u_shape(
    base_w: float = 0.30,
    base_h: float = 0.10,
    arm_w: float = 0.10,
    arm_h: float = 0.20,
) -> ShapeUnion:
    """U-shape in body frame: base bar on top, two arms hanging below."""
    return ShapeUnion(
        [
            _rect(0.0, 0.5 * base_h, base_w, base_h),
            _rect(-0.5 * (base_w - arm_w), -0.5 * arm_h, arm_w, arm_h),
            _rect(0.5 * (base_w - arm_w), -0.5 * arm_h, arm_w, arm_h),
        ]
    )
