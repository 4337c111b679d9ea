"""Online mission: follow the prior route, explore detected changes, resume.

The loop visits a view, asks the detector for change points in the recent
window, folds them into targets and then either picks a next-best view for
the active target or continues along the prior route.
"""

from __future__ import annotations

import logging
import time
from typing import Sequence

import numpy as np

from sceneupdate.changeability import ScoreParams, realtime_gains
from sceneupdate.geometry import (
    HullPrism,
    Occluders,
    clip_convex,
    iou_prism,
    polygon_area,
    visibility_matrix,
)
from sceneupdate.metrics import match_hulls
from sceneupdate.oracle import (
    ChangeOracle,
    ChangeTarget,
    DetectionWindow,
    OracleNoise,
    cloud_distance,
    merge_target,
    outside_hull,
    split_targets,
)
from sceneupdate.prior import PriorPlan, path_length, plan_prior, tsp_tour
from sceneupdate.results import MissionResult, StepRecord, TargetRecord
from sceneupdate.scene import SampleSet, Scene, diff_scenes
from sceneupdate.views import View, generate_candidates

log = logging.getLogger(__name__)


def target_occluders(scene: Scene, hull: HullPrism) -> Occluders:
    """T1 prisms that can hide a target: those whose footprint misses its hull.

    Prisms overlapping the hull are the ones that changed, so they are not
    trusted as occluders. The hull is not an occluder of its own samples
    since back-face culling already handles a convex solid.
    """
    keep = []
    for p in scene.prisms:
        inter = clip_convex(p.footprint, hull.footprint)
        if len(inter) < 3 or abs(polygon_area(inter)) <= 1e-9:
            keep.append(p)
    return Occluders(keep)


def _seed_for(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


class PlannerState:
    """Mutable mission state plus visibility caches.

    ``prior_remaining`` keeps the order in which prior views will be flown.
    Observer counts of prior and target samples are kept as integer arrays
    updated on every visit.
    """

    def __init__(self, plan: PriorPlan, scene_t1: Scene, cfg):
        self.cfg = cfg
        self.scene = scene_t1
        self.plan = plan
        self.visited: list[View] = []
        self.visited_ids: set[int] = set()
        self.prior_remaining: list[View] = list(plan.ordered_views)
        self.realtime_views: list[View] = []
        self.active_target: ChangeTarget | None = None
        self.target_queue: list[ChangeTarget] = []
        self.finished_targets: list[ChangeTarget] = []
        self.unreachable: dict[int, int] = {}
        self.prior_samples: SampleSet = plan.samples
        self.prior_counts = np.zeros(len(plan.samples), dtype=np.int64)
        self.target_counts = np.zeros(0, dtype=np.int64)
        self.next_view_id = max((v.id for v in plan.candidates), default=-1) + 1
        self.next_target_id = 0
        self._occ_t1 = scene_t1.occluders()
        self._prior_rows: dict[int, np.ndarray] = {
            v.id: plan.visibility[i] for i, v in enumerate(plan.views)
        }
        self._target_key: tuple | None = None
        self._target_occ: Occluders | None = None
        self._target_rows: dict[int, np.ndarray] = {}
        self._rt_hull: HullPrism | None = None
        self._rt_generation = 0

    # -- visibility caches -------------------------------------------------

    @property
    def current(self) -> View | None:
        return self.visited[-1] if self.visited else None

    @property
    def samples(self) -> SampleSet:
        parts = [self.prior_samples]
        if self.active_target is not None:
            parts.append(self.active_target.target_samples)
        return SampleSet.concat(parts)

    def prior_rows(self, views: Sequence[View]) -> np.ndarray:
        missing = [v for v in views if v.id not in self._prior_rows]
        if missing:
            s = self.prior_samples
            rows = visibility_matrix(missing, s.positions, s.normals, self._occ_t1)
            for v, r in zip(missing, rows):
                self._prior_rows[v.id] = r
        if not views:
            return np.zeros((0, len(self.prior_samples)), dtype=bool)
        return np.array([self._prior_rows[v.id] for v in views])

    def _sync_target(self, target: ChangeTarget) -> None:
        key = (target.tid, target.version)
        if key == self._target_key:
            return
        self._target_key = key
        self._target_rows = {}
        self._target_occ = target_occluders(self.scene, target.hull)
        self.target_counts = np.zeros(len(target.target_samples), dtype=np.int64)
        if self.visited and len(target.target_samples):
            self.target_counts = self.target_rows(target, self.visited).sum(axis=0).astype(np.int64)

    def target_rows(self, target: ChangeTarget, views: Sequence[View]) -> np.ndarray:
        self._sync_target(target)
        s = target.target_samples
        missing = [v for v in views if v.id not in self._target_rows]
        if missing:
            rows = visibility_matrix(missing, s.positions, s.normals, self._target_occ)
            for v, r in zip(missing, rows):
                self._target_rows[v.id] = r
        if not views:
            return np.zeros((0, len(s)), dtype=bool)
        return np.array([self._target_rows[v.id] for v in views])

    # -- bookkeeping -------------------------------------------------------

    def visit(self, view: View) -> None:
        if view.id in self.visited_ids:
            raise RuntimeError(f"view {view.id} visited twice")
        self.visited.append(view)
        self.visited_ids.add(view.id)
        self.prior_remaining = [v for v in self.prior_remaining if v.id != view.id]
        self.prior_counts += self.prior_rows([view])[0]
        if self.active_target is not None and self._target_key == (
            self.active_target.tid,
            self.active_target.version,
        ):
            self.target_counts += self.target_rows(self.active_target, [view])[0]

    def realtime_candidates(self, target: ChangeTarget) -> list[View]:
        """Real-time views over the target hull, regenerated on large hull change."""
        hull = target.hull
        if self._rt_hull is None or iou_prism(self._rt_hull, hull) < self.cfg.hull_regen_iou:
            seed = _seed_for(self.cfg.seed, target.tid, self._rt_generation)
            self.realtime_views = generate_candidates(
                hull, self.cfg, seed, radius=self.cfg.realtime_radius_m,
                first_id=self.next_view_id, source="realtime",
            )
            self.next_view_id += len(self.realtime_views)
            self._rt_hull = hull
            self._rt_generation += 1
        return self.realtime_views

    def activate(self, target: ChangeTarget) -> None:
        self.active_target = target
        self._rt_hull = None
        self.realtime_views = []
        self._sync_target(target)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def candidate_pool(state: PlannerState, target: ChangeTarget, cfg=None) -> list[View]:
    """Unvisited prior and real-time views that see an unobserved target sample."""
    if target.hull is None or len(target.target_samples) == 0:
        return []
    state._sync_target(target)
    unseen = state.target_counts == 0
    if not unseen.any():
        return []
    pool = [v for v in state.prior_remaining if v.id not in state.visited_ids]
    pool += [v for v in state.realtime_candidates(target) if v.id not in state.visited_ids]
    if not pool:
        return []
    rows = state.target_rows(target, pool)
    ok = rows[:, unseen].any(axis=1)
    return [v for v, k in zip(pool, ok) if k]


def pool_gains(state: PlannerState, pool: Sequence[View], params: ScoreParams) -> np.ndarray:
    """Changeability gain of every pool view over prior and active-target samples."""
    target = state.active_target
    vis_p = state.prior_rows(pool)
    q = state.prior_samples.q
    counts = state.prior_counts
    if target is not None and len(target.target_samples):
        vis = np.hstack([vis_p, state.target_rows(target, pool)])
        q = np.concatenate([q, target.target_samples.q])
        counts = np.concatenate([counts, state.target_counts])
    else:
        vis = vis_p
    return realtime_gains(vis, q, counts, params, observed_only=state.cfg.gain_observed_only)


def select_top_k_nearest(ids, gains, positions, current, K: int) -> int:
    """Index of the nearest of the ``K`` highest-gain entries.

    Gain ties favour lower ids, distance ties too.
    """
    ids = np.asarray(ids)
    gains = np.asarray(gains, dtype=float)
    order = np.lexsort((ids, -gains))[:K]
    d = np.linalg.norm(np.asarray(positions, dtype=float)[order] - np.asarray(current, dtype=float), axis=1)
    best = min(range(len(order)), key=lambda k: (d[k], ids[order[k]]))
    return int(order[best])


def next_best_view(state: PlannerState, pool: Sequence[View], params: ScoreParams, K: int = 10):
    """Top-``K`` views by gain, then the one closest to the current view.

    Returns ``(view, gain)``.
    """
    if not pool:
        raise ValueError("no candidates")
    if K < 1:
        raise ValueError("K must be >= 1")
    gains = pool_gains(state, pool, params)
    cur = state.current.xyz if state.current is not None else pool[0].xyz
    k = select_top_k_nearest([v.id for v in pool], gains, [v.position for v in pool], cur, K)
    return pool[k], float(gains[k])


def target_complete(target: ChangeTarget, visited: Sequence[View], scene: Scene) -> bool:
    """True iff every target sample is seen by some visited view."""
    s = target.target_samples
    if len(s) == 0:
        return True
    if not visited:
        return False
    vis = visibility_matrix(list(visited), s.positions, s.normals, target_occluders(scene, target.hull))
    return bool(vis.any(axis=0).all())


def resume_prior(state: PlannerState) -> View | None:
    """Next prior view along the route that still sees an unseen prior sample.

    Views that would only re-observe seen samples are dropped.
    """
    unseen = (state.prior_counts == 0) & state.plan.coverable
    while state.prior_remaining:
        v = state.prior_remaining[0]
        if (state.prior_rows([v])[0] & unseen).any():
            return v
        state.prior_remaining.pop(0)
        log.debug("prior view %d skipped, nothing new to see", v.id)
    return None


def reroute_prior(state: PlannerState) -> None:
    """Re-order the useful remaining prior views into a tour from the current view."""
    unseen = (state.prior_counts == 0) & state.plan.coverable
    useful = [v for v in state.prior_remaining if (state.prior_rows([v])[0] & unseen).any()]
    if not useful:
        state.prior_remaining = []
        return
    cur = state.current.xyz
    d = [float(np.linalg.norm(v.xyz - cur)) for v in useful]
    start = min(range(len(useful)), key=lambda k: (d[k], useful[k].id))
    traj = tsp_tour(useful, useful[start].id)
    by_id = {v.id: v for v in useful}
    state.prior_remaining = [by_id[i] for i in traj.view_ids]


# ---------------------------------------------------------------------------
# Detection handling
# ---------------------------------------------------------------------------


def _new_target(state: PlannerState, points) -> ChangeTarget | None:
    t = merge_target(None, points, state.cfg.phi, state.cfg.target_spacing_m)
    if t is not None:
        t.tid = state.next_target_id
        state.next_target_id += 1
    return t


def absorb_detections(state: PlannerState, points: np.ndarray) -> None:
    """Associate detected clusters with known targets and update them.

    A cluster within the cluster gap of an existing target's cloud feeds
    that target (the nearest one). Clusters near a finished target reopen
    it only if they reach beyond its hull by more than the reopen margin.
    Everything else starts a new queued target.
    """
    cfg = state.cfg
    if len(points) == 0:
        return
    origin = state.current.xyz if state.current is not None else None
    clusters = split_targets(points, cfg.cluster_gap_m, origin)
    known: list[tuple[str, ChangeTarget]] = []
    if state.active_target is not None:
        known.append(("active", state.active_target))
    known += [("queued", t) for t in state.target_queue]
    known += [("finished", t) for t in state.finished_targets]
    fresh: dict[int, list[np.ndarray]] = {}
    new_clusters = []
    for c in clusters:
        best, best_d = None, np.inf
        for k, (_, t) in enumerate(known):
            d = cloud_distance(c, t.cloud)
            if d <= cfg.cluster_gap_m and d < best_d:
                best, best_d = k, d
        if best is None:
            new_clusters.append(c)
            continue
        kind, t = known[best]
        if kind == "finished" and (t.hull is None or not outside_hull(c, t.hull, cfg.reopen_margin_m)):
            continue
        fresh.setdefault(best, []).append(c)
    for k, parts in fresh.items():
        kind, t = known[k]
        merged = merge_target(t, np.vstack(parts), cfg.phi, cfg.target_spacing_m, cfg.merge_always_union)
        if kind == "active":
            state.active_target = merged
        elif kind == "queued":
            state.target_queue[state.target_queue.index(t)] = merged
        else:
            log.info("reopening target %d", t.tid)
            state.finished_targets.remove(t)
            merged.explored = False
            state.target_queue.append(merged)
    for c in new_clusters:
        t = _new_target(state, c)
        if t is not None:
            state.target_queue.append(t)


def _pick_queued(state: PlannerState) -> ChangeTarget | None:
    ready = [t for t in state.target_queue if t.hull is not None]
    if not ready:
        return None
    cur = state.current.xyz
    return min(ready, key=lambda t: (float(np.linalg.norm(t.centroid - cur)), t.tid))


def _finish(state: PlannerState, target: ChangeTarget) -> None:
    state._sync_target(target)
    missing = int((state.target_counts == 0).sum())
    if missing:
        log.warning("target %d closed with %d unreachable samples", target.tid, missing)
    state.unreachable[target.tid] = missing
    target.explored = True
    state.finished_targets.append(target)
    state.active_target = None
    state.realtime_views = []
    state._rt_hull = None


# ---------------------------------------------------------------------------
# Mission
# ---------------------------------------------------------------------------


def run_mission(
    t1: Scene,
    t2: Scene,
    cfg,
    noise: OracleNoise | None = None,
    seed: int | None = None,
    plan: PriorPlan | None = None,
) -> MissionResult:
    """Fly the prior route with change-triggered exploration.

    ``seed`` overrides ``cfg.seed``; a precomputed ``plan`` for ``t1`` may
    be passed to skip prior planning.
    """
    if seed is not None:
        cfg = cfg.with_(seed=int(seed))
    noise = noise or OracleNoise(seed=cfg.seed)
    if plan is None:
        plan = plan_prior(t1, cfg)
    params = ScoreParams.from_config(cfg)
    oracle = ChangeOracle(t1, t2, cfg.target_spacing_m, noise)
    state = PlannerState(plan, t1, cfg)
    window = DetectionWindow(cfg.window)
    steps: list[StepRecord] = []

    nxt: View | None = state.prior_remaining[0] if state.prior_remaining else None
    mode, gain, n_cand, elapsed = "prior", None, 0, 0.0
    while nxt is not None:
        state.visit(nxt)
        steps.append(StepRecord(len(steps), nxt.id, mode, gain, n_cand, elapsed))
        window.push(nxt)
        points = oracle.observe(window)

        t0 = time.perf_counter()
        absorb_detections(state, points)
        nxt, mode, gain, n_cand = None, "prior", None, 0
        rerouted = False
        while True:
            if state.active_target is None:
                t = _pick_queued(state)
                if t is None:
                    break
                state.target_queue.remove(t)
                state.activate(t)
            target = state.active_target
            pool = candidate_pool(state, target, cfg)
            if pool:
                nxt, gain = next_best_view(state, pool, params, cfg.K)
                mode, n_cand = "nbv", len(pool)
                break
            _finish(state, target)
            rerouted = True
        if nxt is None:
            if rerouted:
                reroute_prior(state)
            nxt = resume_prior(state)
        elapsed = time.perf_counter() - t0

    for t in state.target_queue:
        if t.hull is not None:
            log.warning("target %d left unexplored", t.tid)

    return _result("ours", state.visited, state.finished_targets, state.unreachable, steps, cfg, noise,
                   t1, t2, [v.id for v in plan.ordered_views])


def _result(method, visited, targets, unreachable, steps, cfg, noise, t1, t2, prior_ids) -> MissionResult:
    finished = [t for t in targets if t.hull is not None]
    records = [
        TargetRecord(t.tid, t.hull, int(len(t.cloud)), int(unreachable.get(t.tid, 0))) for t in finished
    ]
    gt = [p.as_hull() for p in diff_scenes(t1, t2)]
    per_target = []
    for i, j, iou in match_hulls([r.hull for r in records], gt):
        per_target.append({"target_id": records[i].target_id, "gt_index": j, "iou": iou})
    return MissionResult(
        method=method,
        views=list(visited),
        path_length_m=path_length([v.position for v in visited]),
        targets=records,
        steps=steps,
        config=cfg,
        seeds={"mission": cfg.seed, "noise": noise.seed},
        prior_view_ids=list(prior_ids),
        per_target_iou=per_target,
        noise=noise.to_dict(),
    )
