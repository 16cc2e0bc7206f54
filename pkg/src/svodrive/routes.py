"""Arc-length parameterized routes, path intersections and conflict points."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import DegeneratePath, InvalidThreshold, NoInteraction

RESAMPLE_STEP = 0.5
CONFLICT_THRESHOLD = 5.0
MERGE_THRESHOLD = 1.0


@dataclass(frozen=True, eq=False)
class Route:
    points: np.ndarray  # (n, 2)
    cumulative_arclength: np.ndarray  # (n,)
    total_length: float
    conflict_arclength: float | None = None

    def pose_at(self, s: float) -> tuple[float, float, float]:
        """Position and tangent heading at arc-length ``s`` (clamped to the route)."""
        cum = self.cumulative_arclength
        s = min(max(s, 0.0), self.total_length)
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(max(i, 0), len(cum) - 2)
        (x0, y0), (x1, y1) = self.points[i], self.points[i + 1]
        frac = (s - cum[i]) / (cum[i + 1] - cum[i])
        return x0 + frac * (x1 - x0), y0 + frac * (y1 - y0), math.atan2(y1 - y0, x1 - x0)

    def with_conflict(self, conflict_arclength: float) -> "Route":
        return replace(self, conflict_arclength=float(conflict_arclength))

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "cumulative_arclength": self.cumulative_arclength.tolist(),
            "total_length": self.total_length,
            "conflict_arclength": self.conflict_arclength,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Route":
        return cls(
            points=np.asarray(data["points"], dtype=float).reshape(-1, 2),
            cumulative_arclength=np.asarray(data["cumulative_arclength"], dtype=float),
            total_length=float(data["total_length"]),
            conflict_arclength=data["conflict_arclength"],
        )


def polyline_arclength(positions: Sequence[Sequence[float]]) -> np.ndarray:
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    return np.concatenate([[0.0], np.cumsum(seg)])


def build_route(positions: Sequence[Sequence[float]], resample_step: float = RESAMPLE_STEP) -> Route:
    if resample_step <= 0:
        raise ValueError("resample_step must be positive")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegeneratePath("a route needs at least two positions")
    # drop repeated consecutive points so the arc-length grid is strictly increasing
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    pts = pts[keep]
    if len(pts) < 2:
        raise DegeneratePath("all route positions coincide")
    raw_cum = polyline_arclength(pts)
    total = float(raw_cum[-1])

    n_full = int(math.floor(total / resample_step))
    s = np.arange(n_full + 1, dtype=float) * resample_step
    if total - s[-1] > 1e-9:
        s = np.append(s, total)
    else:
        s[-1] = total
    if len(s) < 2:
        s = np.array([0.0, total])
    xs = np.interp(s, raw_cum, pts[:, 0])
    ys = np.interp(s, raw_cum, pts[:, 1])
    return Route(points=np.column_stack([xs, ys]), cumulative_arclength=s, total_length=total)


def _segment_crossings(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameters (ta, i) of all proper crossings between polylines a and b."""
    p, r = a[:-1], np.diff(a, axis=0)
    q, s = b[:-1], np.diff(b, axis=0)
    denom = r[:, None, 0] * s[None, :, 1] - r[:, None, 1] * s[None, :, 0]
    qp = q[None, :, :] - p[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[None, :, 1] - qp[..., 1] * s[None, :, 0]) / denom
        u = (qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]) / denom
    ok = (np.abs(denom) > 1e-12) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    i, j = np.nonzero(ok)
    return t[i, j], i


def point_polyline_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each point to the nearest segment of ``poly``."""
    a, ab = poly[:-1], np.diff(poly, axis=0)
    ap = points[:, None, :] - a[None, :, :]
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("nmj,mj->nm", ap, ab) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.hypot(*(points[:, None, :] - closest).transpose(2, 0, 1)).min(axis=1)


def find_path_intersection(
    route_a: Route, route_b: Route, merge_threshold: float = MERGE_THRESHOLD
) -> tuple[float, float]:
    """First crossing of two routes, ordered by arc-length along ``route_a``.

    Routes that never cross but merge fall back to the first point of
    ``route_a`` lying within ``merge_threshold`` of ``route_b``.
    """
    a, b = route_a.points, route_b.points
    t, i = _segment_crossings(a, b)
    if len(t):
        s_along = route_a.cumulative_arclength[i] + t * np.diff(route_a.cumulative_arclength)[i]
        k = int(np.argmin(s_along))
        x, y = a[i[k]] + t[k] * (a[i[k] + 1] - a[i[k]])
        return float(x), float(y)
    close = np.nonzero(point_polyline_distance(a, b) < merge_threshold)[0]
    if len(close) == 0:
        raise NoInteraction("routes neither cross nor merge")
    x, y = a[close[0]]
    return float(x), float(y)


def first_within(route: Route, point: tuple[float, float], threshold: float) -> float:
    d = np.hypot(route.points[:, 0] - point[0], route.points[:, 1] - point[1])
    idx = np.nonzero(d < threshold)[0]
    if len(idx) == 0:
        raise NoInteraction("no route point lies within the conflict threshold")
    return float(route.cumulative_arclength[idx[0]])


def assign_conflict_points(
    route_a: Route,
    route_b: Route,
    threshold: float = CONFLICT_THRESHOLD,
    merge_threshold: float = MERGE_THRESHOLD,
) -> tuple[Route, Route, tuple[float, float]]:
    """Set each route's conflict arc-length; also returns the intersection point."""
    if threshold <= 0:
        raise InvalidThreshold("conflict threshold must be positive")
    point = find_path_intersection(route_a, route_b, merge_threshold)
    return (
        route_a.with_conflict(first_within(route_a, point, threshold)),
        route_b.with_conflict(first_within(route_b, point, threshold)),
        point,
    )
