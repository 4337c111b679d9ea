"""Geometric kernel: convex polygons, 2.5D prisms, sampling and visibility.

Coordinates are metres with ``y`` pointing up. Horizontal footprints are
expressed in the ``(x, z)`` plane and stored as ``(k, 2)`` arrays of
counter-clockwise vertices, where counter-clockwise means positive shoelace
area with ``x`` as the first axis and ``z`` as the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from sceneupdate._kernels import poisson_kernel, visibility_kernel

# Collinearity / containment slack for hull and polygon predicates.
EPS = 1e-9
# Segment overlap (metres) tolerated where a ray touches the face it ends on.
SELF_CONTACT_TOL = 1e-3
#: Relative distance below which a polygon vertex counts as collinear.
COLLINEAR_TOL = 1e-12


class GeometryError(ValueError):
    """Raised for degenerate or invalid geometric input."""


# ---------------------------------------------------------------------------
# Convex polygons
# ---------------------------------------------------------------------------


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull_2d(points) -> np.ndarray:
    """Return the convex hull of 2D points as CCW vertices.

    Andrew's monotone chain. Collinear points on hull edges are dropped.

    Raises
    ------
    GeometryError
        If fewer than three non-collinear points are given.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 3:
        raise GeometryError("degenerate hull: fewer than 3 points")
    uniq = np.unique(pts, axis=0)
    if len(uniq) < 3:
        raise GeometryError("degenerate hull: fewer than 3 distinct points")
    scale = max(float(np.ptp(uniq, axis=0).max()), 1.0)
    order = np.lexsort((uniq[:, 1], uniq[:, 0]))
    srt = [tuple(p) for p in uniq[order]]

    lower: list[tuple[float, float]] = []
    for p in srt:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0.0:
            lower.pop()
        lower.append(p)
    upper: list[tuple[float, float]] = []
    for p in reversed(srt):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0.0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    # Drop vertices lying (within tolerance) on the chord of their neighbours.
    changed = True
    while changed and len(hull) >= 3:
        changed = False
        for i in range(len(hull)):
            a, b, c = hull[i - 1], hull[i], hull[(i + 1) % len(hull)]
            chord = math.hypot(c[0] - a[0], c[1] - a[1])
            straight = (b[0] - a[0]) * (c[0] - b[0]) + (b[1] - a[1]) * (c[1] - b[1]) > 0
            if straight and _cross(a, b, c) <= COLLINEAR_TOL * scale * chord:
                del hull[i]
                changed = True
                break
    if len(hull) < 3 or not is_convex_ccw(np.array(hull)):
        raise GeometryError("degenerate hull: points are collinear")
    first = min(range(len(hull)), key=lambda i: hull[i])
    hull = hull[first:] + hull[:first]
    return np.array(hull, dtype=float)


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for CCW vertex order."""
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=float)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    c = x * yn - xn * y
    a = 0.5 * c.sum()
    if abs(a) < EPS:
        return p.mean(axis=0)
    return np.array([((x + xn) * c).sum(), ((y + yn) * c).sum()]) / (6.0 * a)


def is_convex_ccw(poly, tol: float | None = None) -> bool:
    """True if ``poly`` is a strictly convex polygon in CCW order.

    A vertex closer than ``tol * extent`` to the chord of its neighbours
    counts as collinear and makes the polygon invalid.
    """
    tol = COLLINEAR_TOL if tol is None else tol
    p = np.asarray(poly, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or len(p) < 3:
        return False
    scale = max(float(np.ptp(p, axis=0).max()), 1.0)
    a = np.roll(p, 1, axis=0)
    c = np.roll(p, -1, axis=0)
    cross = (p[:, 0] - a[:, 0]) * (c[:, 1] - p[:, 1]) - (p[:, 1] - a[:, 1]) * (c[:, 0] - p[:, 0])
    chord = np.hypot(c[:, 0] - a[:, 0], c[:, 1] - a[:, 1])
    return bool(np.all(cross > tol * scale * chord)) and polygon_area(p) > 0


def points_in_convex_polygon(points, poly, tol: float = EPS) -> np.ndarray:
    """Vectorised inclusive point-in-convex-polygon test for CCW ``poly``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = np.asarray(poly, dtype=float)
    a = p
    b = np.roll(p, -1, axis=0)
    ex = (b[:, 0] - a[:, 0])[None, :]
    ey = (b[:, 1] - a[:, 1])[None, :]
    elen = np.hypot(ex, ey)
    cross = ex * (pts[:, 1:2] - a[None, :, 1]) - ey * (pts[:, 0:1] - a[None, :, 0])
    return np.all(cross >= -tol * elen, axis=1)


def clip_convex(subject, clip) -> np.ndarray:
    """Intersect two CCW convex polygons (Sutherland-Hodgman).

    Returns an empty ``(0, 2)`` array when the intersection has no area.
    """
    output = [tuple(v) for v in np.asarray(subject, dtype=float)]
    c = np.asarray(clip, dtype=float)
    for i in range(len(c)):
        if not output:
            break
        a, b = c[i], c[(i + 1) % len(c)]
        inp, output = output, []

        def inside(q):
            return _cross(a, b, q) >= 0.0

        def meet(p, q):
            d1 = _cross(a, b, p)
            d2 = _cross(a, b, q)
            t = d1 / (d1 - d2)
            return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

        prev = inp[-1]
        for cur in inp:
            if inside(cur):
                if not inside(prev):
                    output.append(meet(prev, cur))
                output.append(cur)
            elif inside(prev):
                output.append(meet(prev, cur))
            prev = cur
    if len(output) < 3:
        return np.empty((0, 2))
    return np.array(output, dtype=float)


def dilate_convex(poly, distance: float, n_sides: int = 16) -> np.ndarray:
    """Minkowski sum of a convex polygon with a regular ``n_sides``-gon.

    The polygon circumscribes the disk of radius ``distance``, so the result
    always contains the exact offset region.
    """
    p = np.asarray(poly, dtype=float)
    if distance <= 0:
        return p.copy()
    r = distance / math.cos(math.pi / n_sides)
    ang = 2 * math.pi * np.arange(n_sides) / n_sides
    disk = r * np.column_stack([np.cos(ang), np.sin(ang)])
    return convex_hull_2d((p[:, None, :] + disk[None, :, :]).reshape(-1, 2))


def rectangle(xmin: float, zmin: float, xmax: float, zmax: float) -> np.ndarray:
    return np.array([[xmin, zmin], [xmax, zmin], [xmax, zmax], [xmin, zmax]], dtype=float)


# ---------------------------------------------------------------------------
# Prisms
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HullPrism:
    """Vertical prism over a convex footprint, used for change targets."""

    footprint: np.ndarray
    base_height: float
    top_height: float

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        if not is_convex_ccw(fp):
            raise GeometryError("footprint not convex")
        if self.top_height < self.base_height:
            raise GeometryError("top_height below base_height")
        object.__setattr__(self, "footprint", fp)

    @property
    def area(self) -> float:
        return polygon_area(self.footprint)

    @property
    def height(self) -> float:
        return self.top_height - self.base_height

    @property
    def volume(self) -> float:
        return self.area * self.height

    def __eq__(self, other):
        if not isinstance(other, HullPrism):
            return NotImplemented
        return (
            self.footprint.shape == other.footprint.shape
            and bool(np.array_equal(self.footprint, other.footprint))
            and self.base_height == other.base_height
            and self.top_height == other.top_height
        )

    def to_dict(self) -> dict:
        return {
            "footprint": self.footprint.tolist(),
            "base": float(self.base_height),
            "top": float(self.top_height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HullPrism":
        return cls(np.asarray(d["footprint"], dtype=float), float(d["base"]), float(d["top"]))


def hull_prism_of(points) -> HullPrism:
    """Prism spanned by the plan-view hull and height range of a 3D cloud."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise GeometryError("degenerate hull: fewer than 3 points")
    fp = convex_hull_2d(pts[:, [0, 2]])
    return HullPrism(fp, float(pts[:, 1].min()), float(pts[:, 1].max()))


def iou_prism(a, b) -> float:
    """Volume intersection-over-union of two vertical convex prisms.

    Flat prisms (zero height) fall back to footprint-area IoU when both are
    flat at the same elevation, and are otherwise disjoint by volume.
    """
    fa = np.asarray(a.footprint, dtype=float)
    fb = np.asarray(b.footprint, dtype=float)
    inter_fp = clip_convex(fa, fb)
    inter_area = polygon_area(inter_fp) if len(inter_fp) else 0.0
    area_a, area_b = polygon_area(fa), polygon_area(fb)
    ha = a.top_height - a.base_height
    hb = b.top_height - b.base_height
    if ha == 0.0 and hb == 0.0:
        if a.base_height != b.base_height:
            return 0.0
        union = area_a + area_b - inter_area
        return float(min(max(inter_area / union, 0.0), 1.0)) if union > 0 else 0.0
    overlap_h = max(0.0, min(a.top_height, b.top_height) - max(a.base_height, b.base_height))
    inter = inter_area * overlap_h
    union = area_a * ha + area_b * hb - inter
    if union <= 0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


def prism_planes(footprint, base: float, top: float) -> np.ndarray:
    """Half-spaces ``n . x <= c`` bounding a prism, as rows ``(nx, ny, nz, c)``."""
    fp = np.asarray(footprint, dtype=float)
    rows = []
    for i in range(len(fp)):
        a, b = fp[i], fp[(i + 1) % len(fp)]
        dx, dz = b[0] - a[0], b[1] - a[1]
        n = np.array([dz, 0.0, -dx]) / math.hypot(dx, dz)
        rows.append([n[0], n[1], n[2], n[0] * a[0] + n[2] * a[1]])
    rows.append([0.0, 1.0, 0.0, top])
    rows.append([0.0, -1.0, 0.0, -base])
    return np.array(rows, dtype=float)


def points_in_prism(points, footprint, base: float, top: float, tol: float = 0.0) -> np.ndarray:
    """Points strictly deeper than ``tol`` inside the prism (all faces)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    planes = prism_planes(footprint, base, top)
    slack = planes[:, 3][None, :] - pts @ planes[:, :3].T
    return np.all(slack > tol, axis=1)


# ---------------------------------------------------------------------------
# Surface sampling
# ---------------------------------------------------------------------------


def _axis_nodes(lo: float, hi: float, spacing: float, boundary: bool) -> np.ndarray:
    extent = hi - lo
    n = max(1, math.ceil(extent / spacing - 1e-12))
    if boundary:
        return lo + extent * np.arange(n + 1) / n
    return lo + extent * (np.arange(n) + 0.5) / n


def sample_polygon(poly, spacing: float, boundary: bool = False) -> np.ndarray:
    """Grid samples over a convex polygon.

    With ``boundary=False`` samples are cell centres of an axis grid whose
    pitch is at most ``spacing``; a polygon too small to contain any centre
    gets its centroid. With ``boundary=True`` grid nodes are used and the
    outline (vertices included) is sampled at the same pitch.
    """
    p = np.asarray(poly, dtype=float)
    (x0, z0), (x1, z1) = p.min(axis=0), p.max(axis=0)
    xs = _axis_nodes(x0, x1, spacing, boundary)
    zs = _axis_nodes(z0, z1, spacing, boundary)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    grid = np.column_stack([gx.ravel(), gz.ravel()])
    inside = grid[points_in_convex_polygon(grid, p, tol=1e-9)]
    if boundary:
        edge_pts = []
        for i in range(len(p)):
            a, b = p[i], p[(i + 1) % len(p)]
            n = max(1, math.ceil(np.linalg.norm(b - a) / spacing - 1e-12))
            t = np.arange(n)[:, None] / n
            edge_pts.append(a + t * (b - a))
        inside = np.vstack([inside] + edge_pts)
        inside = np.unique(np.round(inside, 9), axis=0)
    if len(inside) == 0:
        inside = polygon_centroid(p)[None, :]
    return inside


def sample_prism_surface(
    footprint,
    base: float,
    top: float,
    spacing: float,
    boundary: bool = False,
    top_face: bool = True,
    walls: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample the top face and side walls of a prism.

    Returns ``(points, normals)`` as ``(n, 3)`` arrays. Walls are skipped for
    zero-height prisms. Sampling is deterministic in its inputs.
    """
    fp = np.asarray(footprint, dtype=float)
    pts: list[np.ndarray] = []
    nrm: list[np.ndarray] = []
    if top_face:
        t2 = sample_polygon(fp, spacing, boundary)
        pts.append(np.column_stack([t2[:, 0], np.full(len(t2), top), t2[:, 1]]))
        nrm.append(np.tile([0.0, 1.0, 0.0], (len(t2), 1)))
    if walls and top > base:
        for i in range(len(fp)):
            a, b = fp[i], fp[(i + 1) % len(fp)]
            length = float(np.linalg.norm(b - a))
            us = _axis_nodes(0.0, length, spacing, boundary) / length
            vs = _axis_nodes(base, top, spacing, boundary)
            uu, vv = np.meshgrid(us, vs, indexing="ij")
            uu, vv = uu.ravel(), vv.ravel()
            xz = a[None, :] + uu[:, None] * (b - a)[None, :]
            pts.append(np.column_stack([xz[:, 0], vv, xz[:, 1]]))
            dx, dz = b[0] - a[0], b[1] - a[1]
            n = np.array([dz, 0.0, -dx]) / length
            nrm.append(np.tile(n, (len(uu), 1)))
    if not pts:
        return np.empty((0, 3)), np.empty((0, 3))
    return np.vstack(pts), np.vstack(nrm)


# ---------------------------------------------------------------------------
# Poisson-disk sampling
# ---------------------------------------------------------------------------


def poisson_disk(region, radius: float, seed: int, k: int = 30) -> np.ndarray:
    """Maximal Poisson-disk samples inside a convex polygon.

    Bridson dart throwing seeded at the polygon centroid, followed by a
    deterministic fill pass over a fine lattice and the polygon outline so
    that no gap of width ``radius`` survives at lattice resolution.

    Returns an ``(n, 2)`` array; pairwise distances are all ``>= radius``.
    """
    if radius <= 0:
        raise GeometryError("radius must be positive")
    poly = np.asarray(region, dtype=float)
    if polygon_area(poly) <= 0:
        poly = convex_hull_2d(poly)
    lo = poly.min(axis=0)
    hi = poly.max(axis=0)
    # Fill probes: lattice at radius/8 plus the outline, scanned in a fixed order.
    step = radius / 8.0
    xs = np.arange(lo[0], hi[0] + step, step)
    zs = np.arange(lo[1], hi[1] + step, step)
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    lattice = np.column_stack([gx.ravel(), gz.ravel()])
    lattice = lattice[points_in_convex_polygon(lattice, poly, tol=0.0)]
    outline = []
    for i in range(len(poly)):
        a, b = poly[i], poly[(i + 1) % len(poly)]
        n = max(1, math.ceil(np.linalg.norm(b - a) / step))
        outline.append(a + (np.arange(n)[:, None] / n) * (b - a))
    probes = np.ascontiguousarray(np.vstack([poly, *outline, lattice]))
    return poisson_kernel(
        np.ascontiguousarray(poly), polygon_centroid(poly), float(lo[0]), float(lo[1]),
        float(hi[0]), float(hi[1]), float(radius), int(k), int(seed) % (2**32), probes,
    )


# ---------------------------------------------------------------------------
# Frusta and visibility
# ---------------------------------------------------------------------------

_WORLD_UP = np.array([0.0, 1.0, 0.0])


def camera_frame(direction) -> tuple[np.ndarray, np.ndarray]:
    """Right and up image axes for a viewing direction.

    The image's vertical axis lies in the vertical plane through the
    viewing direction; for a nadir camera it is aligned with world ``+z``.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    right = np.cross(d, _WORLD_UP)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    up = np.cross(right, d)
    return right, up / np.linalg.norm(up)


@dataclass(frozen=True)
class Frustum:
    apex: tuple[float, float, float]
    direction: tuple[float, float, float]
    horizontal_half_angle: float
    vertical_half_angle: float
    far: float

    def __post_init__(self):
        for a in (self.horizontal_half_angle, self.vertical_half_angle):
            if not 0.0 < a < math.pi / 2:
                raise GeometryError("half-angles must lie in (0, pi/2)")
        if self.far <= 0:
            raise GeometryError("far must be positive")

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = pts - np.asarray(self.apex)[None, :]
        f = np.asarray(self.direction, dtype=float)
        f = f / np.linalg.norm(f)
        right, up = camera_frame(f)
        depth = d @ f
        return (
            (depth > 0)
            & (np.linalg.norm(d, axis=1) <= self.far)
            & (np.abs(d @ right) <= depth * math.tan(self.horizontal_half_angle))
            & (np.abs(d @ up) <= depth * math.tan(self.vertical_half_angle))
        )


class Occluders:
    """Convex prisms packed into flat arrays for the visibility kernel."""

    def __init__(self, prisms: Iterable = ()):
        prisms = list(prisms)
        self.n = len(prisms)
        kmax = max((len(p.footprint) + 2 for p in prisms), default=1)
        self.planes = np.zeros((max(self.n, 1), kmax, 4))
        self.nplanes = np.zeros(max(self.n, 1), dtype=np.int64)
        self.aabb = np.zeros((max(self.n, 1), 6))
        for i, p in enumerate(prisms):
            pl = prism_planes(p.footprint, p.base_height, p.top_height)
            self.planes[i, : len(pl)] = pl
            self.nplanes[i] = len(pl)
            fp = np.asarray(p.footprint, dtype=float)
            self.aabb[i] = [
                fp[:, 0].min(),
                p.base_height,
                fp[:, 1].min(),
                fp[:, 0].max(),
                p.top_height,
                fp[:, 1].max(),
            ]
        if self.n == 0:
            self.planes = self.planes[:0]
            self.nplanes = self.nplanes[:0]
            self.aabb = self.aabb[:0]


def pack_views(views: Sequence) -> dict[str, np.ndarray]:
    """Stack view poses and intrinsics into arrays for the kernel."""
    n = len(views)
    out = {
        "pos": np.empty((n, 3)),
        "dir": np.empty((n, 3)),
        "right": np.empty((n, 3)),
        "up": np.empty((n, 3)),
        "tan_h": np.empty(n),
        "tan_v": np.empty(n),
        "far": np.empty(n),
    }
    frames: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}
    for j, v in enumerate(views):
        out["pos"][j] = v.position
        out["dir"][j] = v.direction
        key = tuple(v.direction)
        if key not in frames:
            frames[key] = camera_frame(v.direction)
        out["right"][j], out["up"][j] = frames[key]
        out["tan_h"][j] = math.tan(v.horizontal_half_angle)
        out["tan_v"][j] = math.tan(v.vertical_half_angle)
        out["far"][j] = v.far
    return out


def visibility_matrix(views: Sequence, points, normals, occluders) -> np.ndarray:
    """Boolean ``(n_views, n_points)`` visibility.

    A point is visible from a view when it lies inside the view frustum, its
    surface normal faces the camera, and the open segment camera -> point
    crosses no occluding prism (contact shorter than ``SELF_CONTACT_TOL`` at
    the far end is ignored so points on a prism face see past that face).
    ``occluders`` is an :class:`Occluders` or an iterable of prisms.
    """
    if not isinstance(occluders, Occluders):
        occluders = Occluders(occluders)
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
    nrm = np.ascontiguousarray(np.asarray(normals, dtype=float).reshape(-1, 3))
    out = np.zeros((len(views), len(pts)), dtype=np.bool_)
    if len(views) == 0 or len(pts) == 0:
        return out
    pv = pack_views(views)
    visibility_kernel(
        pv["pos"],
        pv["dir"],
        pv["right"],
        pv["up"],
        pv["tan_h"],
        pv["tan_v"],
        pv["far"],
        pts,
        nrm,
        occluders.planes,
        occluders.nplanes,
        occluders.aabb,
        SELF_CONTACT_TOL,
        out,
    )
    return out


def visible(sample, view, scene) -> int:
    """1 if ``sample`` is visible from ``view`` among ``scene``'s prisms, else 0."""
    occ = scene.occluders() if hasattr(scene, "occluders") else Occluders(scene.prisms)
    m = visibility_matrix([view], np.asarray(sample.position)[None, :], np.asarray(sample.normal)[None, :], occ)
    return int(m[0, 0])
