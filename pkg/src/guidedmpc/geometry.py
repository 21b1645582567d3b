"""Planar geometry helpers shared by maps, simulator, and controller."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Normalize an angle (scalar or array) to (-pi, pi]."""
    return math.pi - (math.pi - np.asarray(theta)) % TWO_PI if np.ndim(theta) else float(
        math.pi - (math.pi - theta) % TWO_PI
    )


class Polyline:
    """Piecewise-linear curve with arc-length parameterization.

    Supports open and closed (loop) polylines; arc positions on closed
    polylines wrap modulo the total length.
    """

    def __init__(self, points: Sequence[Sequence[float]], closed: bool = False):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least 2 planar points")
        if closed and not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[0]])
        self.points = pts
        self.closed = closed
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len < 1e-9):
            raise ValueError("degenerate polyline segment")
        self._seg_dir = seg / self._seg_len[:, None]
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum[-1])

    def _locate(self, s: float) -> tuple[int, float]:
        if self.closed:
            s = s % self.length
        else:
            s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(max(i, 0), len(self._seg_len) - 1)
        return i, s - self._cum[i]

    def point_at(self, s: float) -> np.ndarray:
        i, ds = self._locate(s)
        return self.points[i] + self._seg_dir[i] * ds

    def heading_at(self, s: float) -> float:
        i, _ = self._locate(s)
        d = self._seg_dir[i]
        return math.atan2(d[1], d[0])

    def project(self, point: Sequence[float]) -> tuple[float, float]:
        """Closest arc position and signed lateral offset (left positive)."""
        p = np.asarray(point, dtype=float)
        rel = p - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg_dir) / self._seg_len
        t = np.clip(t, 0.0, 1.0)
        foot = self.points[:-1] + self._seg_dir * (t * self._seg_len)[:, None]
        d2 = np.sum((p - foot) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = float(self._cum[i] + t[i] * self._seg_len[i])
        off = p - foot[i]
        lateral = float(self._seg_dir[i, 0] * off[1] - self._seg_dir[i, 1] * off[0])
        return s, lateral

    def distance_to(self, point: Sequence[float]) -> float:
        p = np.asarray(point, dtype=float)
        rel = p - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg_dir) / self._seg_len
        t = np.clip(t, 0.0, 1.0)
        foot = self.points[:-1] + self._seg_dir * (t * self._seg_len)[:, None]
        return float(np.sqrt(np.min(np.sum((p - foot) ** 2, axis=1))))


def rect_corners(cx: float, cy: float, heading: float, length: float, width: float) -> np.ndarray:
    """Corners of an oriented rectangle centered at (cx, cy)."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def rects_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis overlap test for two convex quads (touching counts)."""
    for quad in (corners_a, corners_b):
        for k in range(4):
            edge = quad[(k + 1) % 4] - quad[k]
            axis = np.array([-edge[1], edge[0]])
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def point_in_polygon(point: Sequence[float], polygon: Sequence[Sequence[float]]) -> bool:
    """Point-in-polygon with closed-boundary semantics (on-edge -> True)."""
    p = np.asarray(point, dtype=float)
    poly = np.asarray(polygon, dtype=float)
    n = len(poly)
    inside = False
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        ab = b - a
        seg_len2 = float(ab @ ab)
        if seg_len2 > 0.0:
            t = float(np.clip((p - a) @ ab / seg_len2, 0.0, 1.0))
            if float(np.hypot(*(p - (a + t * ab)))) < 1e-9:
                return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            x_cross = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0])
            if p[0] < x_cross:
                inside = not inside
    return inside
