"""Prior path: redundancy-driven view reduction and tour construction."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from sceneupdate._kernels import greedy_reduce_kernel
from sceneupdate.changeability import ScoreParams
from sceneupdate.geometry import visibility_matrix
from sceneupdate.scene import SampleSet, Scene, sample_surface
from sceneupdate.views import View, generate_candidates

log = logging.getLogger(__name__)


@dataclass
class Trajectory:
    """Open tour through views; ``length_m`` sums consecutive hop lengths."""

    view_ids: list[int]
    length_m: float

    def to_dict(self) -> dict:
        return {"view_ids": list(self.view_ids), "length_m": self.length_m}

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls([int(v) for v in d["view_ids"]], float(d["length_m"]))


def path_length(positions) -> float:
    p = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(p) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


# ---------------------------------------------------------------------------
# Greedy reduction
# ---------------------------------------------------------------------------


@dataclass
class Reduction:
    """Outcome of :func:`reduce_by_visibility`.

    ``kept`` indexes rows of the input matrix; ``events`` logs every step as
    ``("removed" | "reverted" | "stopped", view_id)``.
    """

    kept: np.ndarray
    removed_ids: list[int] = field(default_factory=list)
    events: list[tuple[str, int]] = field(default_factory=list)
    uncoverable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))


def reduce_by_visibility(
    vis: np.ndarray,
    p: np.ndarray,
    params: ScoreParams,
    ids: Sequence[int] | None = None,
    tau: float = 0.05,
) -> Reduction:
    """Greedily drop the most redundant views while keeping every sample seen.

    Parameters
    ----------
    vis : (n_views, n_samples) bool
        Visibility of each sample from each candidate view.
    p : (n_samples,) float
        Prior change probabilities.
    params : ScoreParams
    ids : sequence of int, optional
        View ids used for tie-breaking (lowest first); defaults to row index.
    tau : float
        A removal that would lower the summed importance of the remaining
        views below ``(1 - tau)`` of its starting value ends the reduction.

    Notes
    -----
    Each round removes the view of least importance ``g``. If it is the only
    remaining observer of some sample the removal is reverted and the view
    is kept for good, since observer counts never grow again.
    """
    vis = np.asarray(vis, dtype=bool)
    n_views = vis.shape[0]
    ids = np.arange(n_views) if ids is None else np.asarray(ids)
    counts_all = vis.sum(axis=0)
    uncoverable = counts_all == 0
    if uncoverable.any():
        log.warning("%d samples are not visible from any candidate view", int(uncoverable.sum()))
    sub = vis[:, ~uncoverable]
    A = sparse.csr_matrix(sub.astype(np.int8))
    Ac = sparse.csc_matrix(sub.astype(np.int8))
    w = params.beta_prior * np.asarray(p, dtype=float)[~uncoverable]
    counts = counts_all[~uncoverable].astype(np.int64)
    alive, kinds, who = greedy_reduce_kernel(
        A.indptr.astype(np.int64),
        A.indices.astype(np.int64),
        Ac.indptr.astype(np.int64),
        Ac.indices.astype(np.int64),
        w,
        counts,
        ids.astype(np.int64),
        float(tau),
    )
    names = ("removed", "reverted", "stopped")
    out = Reduction(kept=np.zeros(0, dtype=np.int64), uncoverable=uncoverable)
    out.events = [(names[k], int(ids[j])) for k, j in zip(kinds, who)]
    out.removed_ids = [int(ids[j]) for k, j in zip(kinds, who) if k == 0]
    out.kept = np.flatnonzero(alive)
    log.debug("reduction kept %d of %d views", len(out.kept), n_views)
    return out


def reduce_views(
    candidates: Sequence[View],
    samples: SampleSet,
    scene: Scene,
    params: ScoreParams,
    tau: float = 0.05,
    visibility: np.ndarray | None = None,
) -> list[View]:
    """Subset of ``candidates`` that still sees every coverable sample."""
    if visibility is None:
        visibility = visibility_matrix(candidates, samples.positions, samples.normals, scene.occluders())
    red = reduce_by_visibility(visibility, samples.q, params, [v.id for v in candidates], tau)
    return [candidates[i] for i in red.kept]


# ---------------------------------------------------------------------------
# Tour
# ---------------------------------------------------------------------------


def _two_opt(order: np.ndarray, D: np.ndarray) -> np.ndarray:
    # Open path with a fixed first node; the last node may move.
    order = order.copy()
    n = len(order)
    if n < 3:
        return order
    improved = True
    while improved:
        improved = False
        for i in range(1, n - 1):
            a, b = order[i - 1], order[i]
            js = np.arange(i + 1, n)
            cs = order[js]
            nxt = np.where(js + 1 < n, order[np.minimum(js + 1, n - 1)], -1)
            delta = D[a, cs] - D[a, b]
            has_next = nxt >= 0
            delta[has_next] += D[b, nxt[has_next]] - D[cs[has_next], nxt[has_next]]
            k = int(np.argmin(delta))
            if delta[k] < -1e-9:
                j = int(js[k])
                order[i : j + 1] = order[i : j + 1][::-1]
                improved = True
    return order


def _or_opt(order: np.ndarray, D: np.ndarray, max_seg: int = 3) -> np.ndarray:
    # Move a run of up to ``max_seg`` nodes (optionally reversed) elsewhere;
    # the first node stays fixed. Returns after the first improving move.
    n = len(order)
    path = list(order)
    for L in range(1, min(max_seg, n - 1) + 1):
        for i in range(1, n - L + 1):
            seg = path[i : i + L]
            prev = path[i - 1]
            nxt = path[i + L] if i + L < n else None
            removed = D[prev, seg[0]] + (D[seg[-1], nxt] - D[prev, nxt] if nxt is not None else 0.0)
            rest = path[:i] + path[i + L :]
            for k in range(len(rest)):
                if k == i - 1:
                    continue
                a = rest[k]
                b = rest[k + 1] if k + 1 < len(rest) else None
                for s in (seg, seg[::-1]):
                    added = D[a, s[0]] + (D[s[-1], b] - D[a, b] if b is not None else 0.0)
                    if added < removed - 1e-9:
                        return np.array(rest[: k + 1] + s + rest[k + 1 :])
    return order


def _local_search(order: np.ndarray, D: np.ndarray) -> np.ndarray:
    while True:
        order = _two_opt(order, D)
        moved = _or_opt(order, D)
        if moved is order:
            return order
        order = moved


def _nearest_neighbour(start: int, D: np.ndarray) -> np.ndarray:
    n = len(D)
    order = [start]
    free = np.ones(n, dtype=bool)
    free[start] = False
    cur = start
    for _ in range(n - 1):
        d = np.where(free, D[cur], np.inf)
        cur = int(np.argmin(d))
        order.append(cur)
        free[cur] = False
    return np.array(order)


def tour_order(positions, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-neighbour order improved by 2-opt and Or-opt; returns ``(nn, improved)``."""
    P = np.asarray(positions, dtype=float)
    D = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=2)
    nn = _nearest_neighbour(start, D)
    return nn, _local_search(nn, D)


def tsp_tour(views: Sequence[View], start: int) -> Trajectory:
    """Open tour over ``views`` beginning at the view with id ``start``."""
    if not views:
        raise ValueError("tsp_tour needs at least one view")
    ids = [v.id for v in views]
    if start not in ids:
        raise ValueError(f"start view {start} not among views")
    pos = np.array([v.position for v in views])
    _, order = tour_order(pos, ids.index(start))
    return Trajectory([ids[i] for i in order], path_length(pos[order]))


# ---------------------------------------------------------------------------
# Prior plan
# ---------------------------------------------------------------------------


@dataclass
class PriorPlan:
    views: list[View]
    trajectory: Trajectory
    samples: SampleSet
    candidates: list[View]
    visibility: np.ndarray  # retained views x samples
    coverable: np.ndarray
    reduction: Reduction

    @property
    def ordered_views(self) -> list[View]:
        by_id = {v.id: v for v in self.views}
        return [by_id[i] for i in self.trajectory.view_ids]

    def to_dict(self) -> dict:
        return {
            "views": [v.to_dict() for v in self.ordered_views],
            "trajectory": self.trajectory.to_dict(),
            "n_candidates": len(self.candidates),
            "n_samples": len(self.samples),
            "n_uncoverable": int((~self.coverable).sum()),
        }


def start_view(views: Sequence[View], bounds) -> View:
    """View nearest the ``(xmin, zmin)`` corner of the bounds, lowest id on ties."""
    corner = np.array([bounds[0], bounds[1]])
    pos = np.array([[v.position[0], v.position[2]] for v in views])
    d = np.linalg.norm(pos - corner, axis=1)
    best = np.flatnonzero(d == d.min())
    return min((views[i] for i in best), key=lambda v: v.id)


def plan_prior(scene_t1: Scene, cfg, seed: int | None = None) -> PriorPlan:
    """Sample the T1 scene, generate candidates, reduce them and route a tour."""
    seed = cfg.seed if seed is None else seed
    scene_t1.validate_height(cfg.h)
    samples = sample_surface(scene_t1, cfg.sample_spacing_m)
    candidates = generate_candidates(scene_t1, cfg, seed, radius=cfg.prior_radius_m)
    vis = visibility_matrix(candidates, samples.positions, samples.normals, scene_t1.occluders())
    params = ScoreParams.from_config(cfg)
    red = reduce_by_visibility(vis, samples.q, params, [v.id for v in candidates], cfg.tau)
    kept = [candidates[i] for i in red.kept]
    traj = tsp_tour(kept, start_view(kept, scene_t1.bounds).id)
    coverable = ~red.uncoverable
    return PriorPlan(kept, traj, samples, candidates, vis[red.kept], coverable, red)
