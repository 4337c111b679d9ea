"""Changeability scores of samples and views.

Scalar functions mirror the per-term definitions and are used in tests and
small examples; the ``*_gains`` / ``*_importance`` helpers evaluate the same
quantities for whole view sets from a precomputed visibility matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from sceneupdate.geometry import Occluders, visibility_matrix


@dataclass(frozen=True)
class ScoreParams:
    """Weights for unvisited (``omega``), visited (``gamma``) and prior (``beta_prior``) terms."""

    omega: float = 3.0
    gamma: float = 2.0
    beta_prior: float = 3.0

    def __post_init__(self):
        if not (self.omega > 0 and self.gamma > 0 and self.beta_prior > 0):
            raise ValueError("score weights must be positive")

    @classmethod
    def from_config(cls, cfg) -> "ScoreParams":
        return cls(cfg.omega, cfg.gamma, cfg.beta_prior_value)


def _occluders(scene) -> Occluders:
    if isinstance(scene, Occluders):
        return scene
    if hasattr(scene, "occluders"):
        return scene.occluders()
    return Occluders(scene.prisms)


def _arrays(samples):
    if hasattr(samples, "positions"):
        return samples.positions, samples.normals, np.asarray(samples.q, dtype=float)
    pos = np.array([s.position for s in samples], dtype=float).reshape(-1, 3)
    nrm = np.array([s.normal for s in samples], dtype=float).reshape(-1, 3)
    q = np.array([s.q for s in samples], dtype=float)
    return pos, nrm, q


def f_sample_view(q: float, vis: int, visited: bool, params: ScoreParams) -> float:
    """Changeability of one sample w.r.t. one view.

    ``omega * q * vis`` for an unvisited view and ``-gamma * vis`` for a
    visited one; the visited branch carries no ``q`` factor.
    """
    if visited:
        return -params.gamma * vis
    return params.omega * q * vis


def coverage(sample, views: Sequence, scene) -> int:
    """Number of ``views`` that see ``sample``."""
    if not views:
        return 0
    vis = visibility_matrix(
        views, np.asarray(sample.position)[None, :], np.asarray(sample.normal)[None, :], _occluders(scene)
    )
    return int(vis.sum())


def f_sample_prior(p: float, n_observers: int, params: ScoreParams) -> float:
    """Prior-phase changeability ``beta * p / |observers|`` (0 when unobserved)."""
    if n_observers <= 0:
        return 0.0
    return params.beta_prior * p / n_observers


def prior_importance(vis: np.ndarray, p: np.ndarray, params: ScoreParams) -> np.ndarray:
    """Importance of every view (rows of ``vis``) against the whole view set.

    Observer counts are the column sums of ``vis``.
    """
    vis = np.asarray(vis, dtype=bool)
    counts = vis.sum(axis=0)
    w = np.zeros(vis.shape[1])
    seen = counts > 0
    w[seen] = params.beta_prior * np.asarray(p, dtype=float)[seen] / counts[seen]
    return vis.astype(float) @ w


def g_view_prior(view, samples, scene, params: ScoreParams, views: Sequence | None = None) -> float:
    """Importance of ``view`` within the view set ``views``.

    Each sample it sees contributes ``f_sample_prior`` with its observer
    count taken over ``views`` (``view`` alone when omitted).
    """
    views = [view] if views is None else list(views)
    if view not in views:
        views = views + [view]
    pos, nrm, q = _arrays(samples)
    vis = visibility_matrix(views, pos, nrm, _occluders(scene))
    row = vis[views.index(view)]
    counts = vis.sum(axis=0)
    total = 0.0
    for i in np.flatnonzero(row):
        total += f_sample_prior(q[i], int(counts[i]), params)
    return total


def realtime_gains(
    cand_vis: np.ndarray,
    q: np.ndarray,
    visited_counts: np.ndarray,
    params: ScoreParams,
    observed_only: bool = False,
) -> np.ndarray:
    """Gain of each candidate given how often visited views saw each sample.

    The default sums the visited-view terms over every sample, so they add
    the same constant to all candidates. ``observed_only`` restricts those
    terms to samples the candidate itself sees.
    """
    cv = np.asarray(cand_vis, dtype=float)
    q = np.asarray(q, dtype=float)
    n = np.asarray(visited_counts, dtype=float)
    gain = params.omega * (cv @ q)
    if observed_only:
        return gain - params.gamma * (cv @ n)
    return gain - params.gamma * float(n.sum())


def g_view_realtime(
    candidate,
    visited: Sequence,
    samples,
    scene,
    params: ScoreParams,
    observed_only: bool = False,
) -> float:
    """Changeability gain of appending ``candidate`` to the visited sequence."""
    pos, nrm, q = _arrays(samples)
    occ = _occluders(scene)
    cand = visibility_matrix([candidate], pos, nrm, occ)[0]
    seen = visibility_matrix(list(visited), pos, nrm, occ)
    total = 0.0
    for i in range(len(q)):
        if observed_only and not cand[i]:
            continue
        term = f_sample_view(q[i], int(cand[i]), False, params)
        for k in range(seen.shape[0]):
            term += f_sample_view(q[i], int(seen[k, i]), True, params)
        total += term
    return total
