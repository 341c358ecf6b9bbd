"""Reference trajectories scaled into the sampled workspace.

The shapes match the tracking experiments: a rhodonea "flower" and a closed
"box" rectangle, a Lissajous figure-8, and an "L" path that deliberately runs
into the near-singular boundary region.  Sizes and placement are derived from
the dataset's task-space samples: every waypoint (except on the L path) must
stay inside the 70%-scaled workspace box and within reach of the sampled
cloud, enforced by a deterministic shrink loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .robots import ValidationError, WorkspaceStats

TRAJECTORY_KINDS = ("flower", "box", "figure8", "L_path", "custom")


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str
    waypoint_count: int = 120
    scale: float = 0.7        # fraction of the available extent for sizing
    petals: int = 5           # flower lobe count
    aspect: float = 0.5       # figure8 height/width, box height/width
    waypoints: np.ndarray | None = None  # used by kind="custom"

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValidationError(f"unknown trajectory kind {self.kind!r}")
        if self.waypoint_count < 2 and self.kind != "custom":
            raise ValidationError("waypoint_count must be at least 2")
        if not 0.0 < self.scale <= 1.0:
            raise ValidationError("scale must be in (0, 1]")


def _cumulative_arc_length(poly: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_uniform(poly: np.ndarray, count: int, closed: bool = False
                     ) -> np.ndarray:
    """Resample a dense polyline at `count` uniform arc-length positions.

    closed=True keeps the duplicate endpoint (first == last waypoint); loops
    sampled open instead spread the points over [0, total), so the wrap gap
    equals every other gap.
    """
    s = _cumulative_arc_length(poly)
    total = s[-1]
    if total <= 0:
        raise ValidationError("polyline has zero length")
    if closed:
        targets = np.linspace(0.0, total, count)
    elif _is_loop(poly):
        targets = np.arange(count) * total / count
    else:
        targets = np.linspace(0.0, total, count)
    idx = np.clip(np.searchsorted(s, targets, side="right") - 1, 0, len(s) - 2)
    seg_len = np.where(s[idx + 1] > s[idx], s[idx + 1] - s[idx], 1.0)
    frac = (targets - s[idx]) / seg_len
    return poly[idx] + frac[:, None] * (poly[idx + 1] - poly[idx])


def _is_loop(poly: np.ndarray) -> bool:
    span = np.linalg.norm(poly.max(axis=0) - poly.min(axis=0))
    return bool(np.linalg.norm(poly[-1] - poly[0]) < 1e-9 * max(span, 1.0))


class WorkspacePlacer:
    """Reachability oracle over the sampled task-space cloud."""

    def __init__(self, stats: WorkspaceStats, points: np.ndarray):
        self.stats = stats
        self.points = np.asarray(points, dtype=float)
        self.tree = cKDTree(self.points)
        sub = self.points[:: max(1, len(self.points) // 2000)]
        nn = cKDTree(sub).query(sub, k=2)[0][:, 1]
        self.reach_tol = 3.0 * float(np.median(nn))
        self.centroid = self.points.mean(axis=0)

    def covered(self, waypoints: np.ndarray) -> bool:
        d, _ = self.tree.query(waypoints)
        return bool(np.max(d) <= self.reach_tol)

    def inner_box(self, frac: float = 0.7) -> tuple[np.ndarray, np.ndarray]:
        center = 0.5 * (self.stats.aabb_min + self.stats.aabb_max)
        half = 0.5 * frac * (self.stats.aabb_max - self.stats.aabb_min)
        return center - half, center + half

    def clip_anchor_extent(self, anchor: np.ndarray, dims) -> np.ndarray:
        """Largest per-axis half extent at `anchor` staying in the 70% box."""
        lo, hi = self.inner_box()
        room = np.minimum(anchor - lo, hi - anchor)
        return room[list(dims)]

    def disk_radius(self, anchor: np.ndarray, axes: tuple, r_cap: float) -> float:
        """Largest radius whose in-plane disk around `anchor` stays covered."""
        angles = np.linspace(0, 2 * math.pi, 24, endpoint=False)
        ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)

        def ok(r):
            pts = []
            for f in (0.33, 0.66, 1.0):
                p = np.tile(anchor, (len(ring), 1))
                p[:, axes[0]] += f * r * ring[:, 0]
                p[:, axes[1]] += f * r * ring[:, 1]
                pts.append(p)
            return self.covered(np.concatenate(pts))

        lo_r, hi_r = 0.0, r_cap
        if not ok(1e-9):
            return 0.0
        for _ in range(24):
            mid = 0.5 * (lo_r + hi_r)
            if ok(mid):
                lo_r = mid
            else:
                hi_r = mid
        return lo_r

    def best_disk_anchor(self, axes: tuple) -> tuple[np.ndarray, float]:
        """In-plane anchor with the largest covered disk inside the 70% box.

        The sampled cloud is not convex (the finger workspace has a sparse
        core), so shapes anchor at the best-covered spot rather than at the
        centroid.
        """
        lo, hi = self.inner_box()
        inside = self.points[np.all((self.points >= lo) & (self.points <= hi),
                                    axis=1)]
        cand = inside[:: max(1, len(inside) // 256)]
        best_anchor, best_r = self.centroid, 0.0
        for a in cand:
            cap = float(self.clip_anchor_extent(a, axes).min())
            r = self.disk_radius(a, axes, cap)
            if r > best_r:
                best_anchor, best_r = a.copy(), r
        return best_anchor, best_r


def _dense_curve(fn, samples: int = 4096) -> np.ndarray:
    t = np.linspace(0.0, 1.0, samples)
    return fn(t)


def _embed_plane(xy: np.ndarray, anchor: np.ndarray, axes: tuple) -> np.ndarray:
    out = np.tile(anchor, (xy.shape[0], 1))
    out[:, axes[0]] = xy[:, 0]
    out[:, axes[1]] = xy[:, 1]
    return out


def _horizontal_anchor(placer: WorkspacePlacer) -> tuple[np.ndarray, tuple]:
    """Anchor point and in-plane axis pair for planar shapes.

    The sampled region is not convex (below the rest length the chambered
    actuator reaches an annulus, not a disk; the finger cloud has a sparse
    core), so the anchor maximizes the covered in-plane disk instead of
    using centroids or the widest slice.
    """
    n = placer.points.shape[1]
    if n == 2:
        anchor, _ = placer.best_disk_anchor((0, 1))
        return anchor, (0, 1)
    z = placer.points[:, 2]
    cx, cy = placer.centroid[:2]
    best_anchor, best_r = None, -1.0
    for zc in np.linspace(np.quantile(z, 0.1), np.quantile(z, 0.9), 30):
        anchor = np.array([cx, cy, zc])
        cap = float(placer.clip_anchor_extent(anchor, (0, 1)).min())
        r = placer.disk_radius(anchor, (0, 1), cap)
        if r > best_r:
            best_anchor, best_r = anchor, r
    return best_anchor, (0, 1)


def _shrink_to_fit(placer, build, scale0: float) -> np.ndarray:
    scale = scale0
    for _ in range(60):
        wp = build(scale)
        if placer.covered(wp):
            return wp
        scale *= 0.93
    raise ValidationError("could not place trajectory inside the reachable workspace")


def make_trajectory(tspec: TrajectorySpec, stats: WorkspaceStats,
                    points: np.ndarray) -> np.ndarray:
    """Generate waypoints for the requested shape inside the workspace."""
    if stats.width <= 0:
        raise ValidationError("workspace width must be positive")
    if tspec.kind == "custom":
        wp = np.asarray(tspec.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[0] < 1:
            raise ValidationError("custom trajectory needs a (count, n) array")
        return wp
    placer = WorkspacePlacer(stats, points)
    if tspec.kind == "flower":
        return _flower(tspec, placer)
    if tspec.kind == "box":
        return _box(tspec, placer)
    if tspec.kind == "figure8":
        return _figure8(tspec, placer)
    return _l_path(tspec, placer)


def _flower(tspec, placer) -> np.ndarray:
    anchor, axes = _horizontal_anchor(placer)
    avail = float(placer.clip_anchor_extent(anchor, axes).min())

    def build(scale):
        rmax = scale * avail
        # soft petals keep the chord spacing of the resampled waypoints
        # within 1% of uniform
        r0, r1 = 0.82 * rmax, 0.18 * rmax

        def fn(t):
            th = 2 * math.pi * t
            r = r0 + r1 * np.cos(tspec.petals * th)
            xy = np.stack([anchor[axes[0]] + r * np.cos(th),
                           anchor[axes[1]] + r * np.sin(th)], axis=1)
            return _embed_plane(xy, anchor, axes)

        poly = _dense_curve(fn, 8192)
        return resample_uniform(poly, tspec.waypoint_count)

    return _shrink_to_fit(placer, build, tspec.scale)


def _box(tspec, placer) -> np.ndarray:
    n = placer.points.shape[1]
    if n == 2:
        anchor, _ = placer.best_disk_anchor((0, 1))
        axes = (0, 1)
    else:
        # vertical plane through the axis: x spans sideways, z vertically
        anchor = placer.centroid.copy()
        axes = (0, 2)
    room = placer.clip_anchor_extent(anchor, axes)

    def build(scale):
        w = scale * room[0]
        h = min(scale * room[1], 2.0 * tspec.aspect * w)
        corners = np.array([[-w, -h], [w, -h], [w, h], [-w, h], [-w, -h]])
        corners = corners + np.array([anchor[axes[0]], anchor[axes[1]]])
        dense = []
        for a, b in zip(corners[:-1], corners[1:]):
            seg = np.linspace(0, 1, 2048)[:, None]
            dense.append(a + seg * (b - a))
        poly = _embed_plane(np.concatenate(dense), anchor, axes)
        return resample_uniform(poly, tspec.waypoint_count, closed=True)

    return _shrink_to_fit(placer, build, tspec.scale)


def _figure8_polyline(anchor, axes, a, b, count):
    def fn(t):
        th = 2 * math.pi * t
        xy = np.stack([anchor[axes[0]] + a * np.sin(th),
                       anchor[axes[1]] + b * np.sin(th) * np.cos(th)], axis=1)
        return _embed_plane(xy, anchor, axes)

    return resample_uniform(_dense_curve(fn, 16384), count)


def _figure8(tspec, placer) -> np.ndarray:
    n = placer.points.shape[1]
    if n == 2:
        # center the waist on the mirror axis so the loop crosses the
        # redundancy-ambiguous region; scan the axis for the best-covered spot
        lo, hi = placer.inner_box()
        best = None
        for y0 in np.linspace(lo[1] + 0.1 * (hi[1] - lo[1]), hi[1], 14):
            anchor = np.array([0.0, y0])
            room = placer.clip_anchor_extent(anchor, (0, 1))
            if room[1] < 0.04 * placer.stats.width:
                continue
            for scale in [tspec.scale * 0.93 ** k for k in range(30)]:
                a = scale * room[0]
                b = min(scale * room[1], 2.0 * tspec.aspect * a)
                wp = _figure8_polyline(anchor, (0, 1), a, b, tspec.waypoint_count)
                if placer.covered(wp):
                    if best is None or a * b > best[0]:
                        best = (a * b, wp)
                    break
        if best is None:
            raise ValidationError("could not place the figure-8")
        return best[1]
    anchor, axes = _horizontal_anchor(placer)
    room = placer.clip_anchor_extent(anchor, axes)

    def build(scale):
        a = scale * room[0]
        b = min(scale * room[1], 2.0 * tspec.aspect * a)
        return _figure8_polyline(anchor, axes, a, b, tspec.waypoint_count)

    return _shrink_to_fit(placer, build, tspec.scale)


def _l_path(tspec, placer) -> np.ndarray:
    """Two orthogonal segments; the second ends near the straight-pose
    boundary of the workspace, where the model Jacobian loses rank."""
    n = placer.points.shape[1]
    up = n - 1  # +y for the finger, +z for the chambered actuator
    top = placer.stats.aabb_max[up]
    anchor = placer.centroid.copy()

    def build(scale):
        lateral = scale * placer.clip_anchor_extent(anchor, (0,))[0]
        start = anchor.copy()
        start[0] = anchor[0] - lateral
        corner = anchor.copy()
        corner[0] = 0.0 if n == 2 else anchor[0]
        end = corner.copy()
        end[up] = top - 0.015 * placer.stats.width
        dense = np.concatenate([
            start + np.linspace(0, 1, 4096)[:, None] * (corner - start),
            corner + np.linspace(0, 1, 4096)[:, None] * (end - corner),
        ])
        return resample_uniform(dense, tspec.waypoint_count)

    # boundary approach is intentional: only require the lateral leg reachable
    scale = tspec.scale
    for _ in range(60):
        wp = build(scale)
        d, _ = placer.tree.query(wp)
        if np.max(d) <= 3.0 * placer.reach_tol:
            return wp
        scale *= 0.93
    raise ValidationError("could not place the L path")
