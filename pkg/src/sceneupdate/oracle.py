"""Geometric change detector standing in for image matching and MVS.

The detector knows both epochs. For every view it returns the surface
points of ground-truth change regions that the view can see, optionally
thinned and jittered. Detected points from the most recent views are pooled,
clustered into change areas and merged into exploration targets.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from sceneupdate.geometry import (
    GeometryError,
    HullPrism,
    Occluders,
    hull_prism_of,
    iou_prism,
    sample_prism_surface,
    visibility_matrix,
)
from sceneupdate.scene import SampleSet, Scene, diff_scenes, unchanged_prisms

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleNoise:
    """Imperfection model: per-view point dropout and Gaussian jitter (m)."""

    dropout_prob: float = 0.0
    jitter_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.jitter_sigma < 0:
            raise ValueError("jitter_sigma must be non-negative")

    def to_dict(self) -> dict:
        return {"dropout_prob": self.dropout_prob, "jitter_sigma": self.jitter_sigma, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleNoise":
        return cls(float(d["dropout_prob"]), float(d["jitter_sigma"]), int(d["seed"]))


class DetectionWindow:
    """The most recent visited views, oldest first."""

    def __init__(self, capacity: int = 8):
        self.capacity = capacity
        self._views: deque = deque(maxlen=capacity)
        self.diff_masks: dict[int, frozenset[int]] = {}

    def push(self, view) -> None:
        if len(self._views) == self.capacity:
            self.diff_masks.pop(self._views[0].id, None)
        self._views.append(view)

    @property
    def recent_views(self) -> list:
        return list(self._views)

    def __len__(self) -> int:
        return len(self._views)


class ChangeOracle:
    """Per-view detections of the ground-truth changes between two scenes.

    Change regions are sampled once (outline included, so corners and wall
    bases are represented). Occlusion uses prisms common to both epochs plus
    the change regions themselves.
    """

    def __init__(self, t1: Scene, t2: Scene, spacing: float = 5.0, noise: OracleNoise | None = None):
        self.noise = noise or OracleNoise()
        self.regions = diff_scenes(t1, t2)
        pts, nrm, reg = [], [], []
        for k, r in enumerate(self.regions):
            p, n = sample_prism_surface(r.footprint, r.base_height, r.top_height, spacing, boundary=True)
            pts.append(p)
            nrm.append(n)
            reg.append(np.full(len(p), k))
        self.points = np.vstack(pts) if pts else np.empty((0, 3))
        self.normals = np.vstack(nrm) if nrm else np.empty((0, 3))
        self.region_of = np.concatenate(reg) if reg else np.empty(0, dtype=int)
        self.occluders = Occluders(unchanged_prisms(t1, t2) + list(self.regions))
        self._cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def view_detections(self, view) -> tuple[np.ndarray, np.ndarray]:
        """Noisy change points seen by one view and the region each came from."""
        if view.id in self._cache:
            return self._cache[view.id]
        if len(self.points) == 0:
            out = (np.empty((0, 3)), np.empty(0, dtype=int))
        else:
            vis = visibility_matrix([view], self.points, self.normals, self.occluders)[0]
            pts = self.points[vis]
            reg = self.region_of[vis]
            rng = np.random.default_rng([self.noise.seed, view.id])
            if self.noise.dropout_prob > 0 and len(pts):
                keep = rng.random(len(pts)) >= self.noise.dropout_prob
                pts, reg = pts[keep], reg[keep]
            if self.noise.jitter_sigma > 0 and len(pts):
                pts = pts + rng.normal(0.0, self.noise.jitter_sigma, size=pts.shape)
            out = (pts, reg)
        self._cache[view.id] = out
        return out

    def observe(self, window: DetectionWindow) -> np.ndarray:
        """Change points pooled over the views in ``window``."""
        parts = []
        for v in window.recent_views:
            pts, reg = self.view_detections(v)
            window.diff_masks[v.id] = frozenset(int(r) for r in np.unique(reg))
            parts.append(pts)
        if not parts:
            return np.empty((0, 3))
        return _dedupe(np.vstack(parts))


def _dedupe(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points.reshape(0, 3)
    _, idx = np.unique(points, axis=0, return_index=True)
    return points[np.sort(idx)]


def observe(view, t1: Scene, t2: Scene, window: DetectionWindow, noise: OracleNoise | None = None,
            spacing: float = 5.0) -> np.ndarray:
    """One-shot detection for ``window`` (which should already hold ``view``).

    Builds a fresh :class:`ChangeOracle`; long runs should keep one instead.
    """
    if not window.recent_views or window.recent_views[-1].id != view.id:
        window.push(view)
    return ChangeOracle(t1, t2, spacing, noise).observe(window)


# ---------------------------------------------------------------------------
# Targets
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ChangeTarget:
    """Accumulated change cloud, its hull prism and the samples on that hull.

    ``hull`` is ``None`` while the cloud is too degenerate to span a
    footprint; such targets are kept but cannot be explored yet.
    """

    cloud: np.ndarray
    hull: HullPrism | None = None
    target_samples: SampleSet = field(default_factory=SampleSet.empty)
    explored: bool = False
    tid: int = -1
    version: int = 0

    @property
    def centroid(self) -> np.ndarray:
        return self.cloud.mean(axis=0)


def target_samples_on(hull: HullPrism | None, spacing: float) -> SampleSet:
    """Samples with ``q = 1`` on the top and walls of a target hull."""
    if hull is None:
        return SampleSet.empty()
    pts, nrm = sample_prism_surface(hull.footprint, hull.base_height, hull.top_height, spacing)
    return SampleSet(pts, nrm, np.ones(len(pts)), [None] * len(pts))


def _try_hull(cloud: np.ndarray) -> HullPrism | None:
    try:
        return hull_prism_of(cloud)
    except GeometryError:
        return None


def merge_target(
    current: ChangeTarget | None,
    new_points,
    phi: float,
    spacing: float = 5.0,
    always_union: bool = False,
) -> ChangeTarget | None:
    """Fold a fresh detection into the current target.

    With no current target the new cloud starts one. Otherwise the hull IoU
    decides: below ``phi`` the clouds are united, at or above it the new
    cloud replaces the old. A new cloud too degenerate to have a hull is
    added to the current cloud without the IoU test.
    """
    new = _dedupe(np.asarray(new_points, dtype=float).reshape(-1, 3))
    if not 0.0 < phi < 1.0:
        raise ValueError("phi must lie in (0, 1)")
    if len(new) == 0:
        return current
    new_hull = _try_hull(new)
    if current is None:
        return ChangeTarget(new, new_hull, target_samples_on(new_hull, spacing))
    if current.hull is None or new_hull is None or always_union:
        cloud = _dedupe(np.vstack([current.cloud, new]))
    elif iou_prism(current.hull, new_hull) < phi:
        cloud = _dedupe(np.vstack([current.cloud, new]))
    else:
        cloud = new
    hull = _try_hull(cloud)
    return ChangeTarget(
        cloud,
        hull,
        target_samples_on(hull, spacing),
        explored=current.explored,
        tid=current.tid,
        version=current.version + 1,
    )


def split_targets(points, gap: float, origin=None) -> list[np.ndarray]:
    """Single-linkage clusters of ``points`` at distance ``gap``.

    Clusters are ordered by the distance of their centroid to ``origin``
    (the drone position), nearest first; ties keep first-point order.
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return []
    pairs = cKDTree(pts).query_pairs(gap, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    clusters = [pts[labels == k] for k in range(labels.max() + 1)]
    first = [int(np.flatnonzero(labels == k)[0]) for k in range(len(clusters))]
    o = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    dist = [float(np.linalg.norm(c.mean(axis=0) - o)) for c in clusters]
    order = sorted(range(len(clusters)), key=lambda k: (dist[k], first[k]))
    return [clusters[k] for k in order]


def cloud_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Smallest distance between two point sets."""
    if len(a) == 0 or len(b) == 0:
        return float("inf")
    d, _ = cKDTree(b).query(a)
    return float(d.min())


def outside_hull(points, hull: HullPrism, margin: float) -> bool:
    """True if any point lies more than ``margin`` outside ``hull``."""
    from sceneupdate.geometry import prism_planes

    planes = prism_planes(hull.footprint, hull.base_height, hull.top_height)
    excess = np.asarray(points, dtype=float) @ planes[:, :3].T - planes[:, 3][None, :]
    return bool(np.any(excess.max(axis=1) > margin))


__all__: Sequence[str] = [
    "ChangeOracle",
    "ChangeTarget",
    "DetectionWindow",
    "OracleNoise",
    "cloud_distance",
    "merge_target",
    "observe",
    "split_targets",
    "target_samples_on",
]
