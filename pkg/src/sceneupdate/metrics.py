"""Evaluation: hull IoU against ground truth, point-set error and completeness."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from sceneupdate.geometry import HullPrism, iou_prism, sample_prism_surface


def _points(a, name: str) -> np.ndarray:
    p = np.asarray(a, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError(f"{name} point set is empty")
    return p


def error_percentile(recon, gt, pct: float) -> float:
    """``pct``-th percentile of recon-to-gt nearest distances.

    Uses the inverted-CDF definition: the smallest distance below or at
    which at least ``pct`` percent of recon points fall.
    """
    r, g = _points(recon, "recon"), _points(gt, "gt")
    if not 0 <= pct <= 100:
        raise ValueError("pct must lie in [0, 100]")
    d, _ = cKDTree(g).query(r)
    return float(np.percentile(d, pct, method="inverted_cdf"))


def completeness(recon, gt, d: float) -> float:
    """Percentage of gt points whose nearest recon point is closer than ``d``."""
    r, g = _points(recon, "recon"), _points(gt, "gt")
    if not d > 0:
        raise ValueError("d must be positive")
    dist, _ = cKDTree(r).query(g)
    return 100.0 * float(np.count_nonzero(dist < d)) / len(g)


def match_hulls(found: Sequence[HullPrism], gt: Sequence[HullPrism]) -> list[tuple[int, int | None, float]]:
    """Greedy one-to-one matching by descending IoU.

    Returns ``(found index, gt index or None, iou)`` per found hull, in
    found order. Unmatched hulls get ``None`` and IoU 0.
    """
    pairs = []
    for i, a in enumerate(found):
        for j, b in enumerate(gt):
            iou = iou_prism(a, b)
            if iou > 0:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_f, used_g = {}, set()
    for neg, i, j in pairs:
        if i in used_f or j in used_g:
            continue
        used_f[i] = (j, -neg)
        used_g.add(j)
    return [(i, *used_f.get(i, (None, 0.0))) for i in range(len(found))]


def densify(hulls: Sequence[HullPrism], spacing: float) -> np.ndarray:
    """Points on the tops and walls of ``hulls`` at ``spacing``."""
    parts = [
        sample_prism_surface(h.footprint, h.base_height, h.top_height, spacing, boundary=True)[0]
        for h in hulls
    ]
    return np.vstack(parts) if parts else np.empty((0, 3))


@dataclass
class QualityReport:
    method: str
    per_target_iou: list[tuple[int, float]]
    false_positives: list[int]
    n_gt: int
    n_views: int
    path_len_m: float
    error_p85: float | None
    error_p90: float | None
    error_p95: float | None
    completeness_at: dict[float, float | None] = field(default_factory=dict)
    avg_nbv_time_s: float = 0.0

    @property
    def n_detected(self) -> int:
        return len(self.per_target_iou) - len(self.false_positives)

    @property
    def mean_iou(self) -> float:
        vals = [iou for tid, iou in self.per_target_iou if tid not in self.false_positives]
        return float(np.mean(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "per_target_iou": [[tid, iou] for tid, iou in self.per_target_iou],
            "false_positives": list(self.false_positives),
            "n_gt": self.n_gt,
            "n_views": self.n_views,
            "path_len_m": self.path_len_m,
            "error_p85": self.error_p85,
            "error_p90": self.error_p90,
            "error_p95": self.error_p95,
            "completeness_at": [[d, c] for d, c in self.completeness_at.items()],
            "avg_nbv_time_s": self.avg_nbv_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QualityReport":
        return cls(
            method=d["method"],
            per_target_iou=[(int(t), float(i)) for t, i in d["per_target_iou"]],
            false_positives=[int(t) for t in d["false_positives"]],
            n_gt=int(d["n_gt"]),
            n_views=int(d["n_views"]),
            path_len_m=float(d["path_len_m"]),
            error_p85=d["error_p85"],
            error_p90=d["error_p90"],
            error_p95=d["error_p95"],
            completeness_at={float(k): v for k, v in d["completeness_at"]},
            avg_nbv_time_s=float(d["avg_nbv_time_s"]),
        )

    def __eq__(self, other):
        if not isinstance(other, QualityReport):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "QualityReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_mission(result, t1, t2) -> QualityReport:
    """Score a finished mission against the changes between ``t1`` and ``t2``."""
    from sceneupdate.scene import diff_scenes

    cfg = result.config
    gt = [p.as_hull() for p in diff_scenes(t1, t2)]
    found = [t.hull for t in result.targets]
    matches = match_hulls(found, gt)
    per_target = [(result.targets[i].target_id, float(iou)) for i, _, iou in matches]
    fps = [result.targets[i].target_id for i, j, _ in matches if j is None]
    recon = densify(found, cfg.metric_spacing_m)
    truth = densify(gt, cfg.metric_spacing_m)
    errs: list[float | None] = [None, None, None]
    comp: dict[float, float | None] = {}
    if len(recon) and len(truth):
        errs = [error_percentile(recon, truth, p) for p in (85, 90, 95)]
    for d in cfg.completeness_thresholds_m:
        if len(truth) == 0:
            comp[d] = None
        elif len(recon) == 0:
            comp[d] = 0.0
        else:
            comp[d] = completeness(recon, truth, d)
    return QualityReport(
        method=result.method,
        per_target_iou=per_target,
        false_positives=fps,
        n_gt=len(gt),
        n_views=result.n_views,
        path_len_m=result.path_length_m,
        error_p85=errs[0],
        error_p90=errs[1],
        error_p95=errs[2],
        completeness_at=comp,
        avg_nbv_time_s=result.avg_nbv_time_s,
    )


def _fmt(x, nd: int = 3) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    return f"{x:.{nd}f}"


def format_table(reports: Sequence[QualityReport]) -> str:
    """Aligned plain-text comparison of one or more reports."""
    thresholds = sorted({d for r in reports for d in r.completeness_at})
    head = ["Method", "Found", "FP", "mIoU", "#Views", "Path(m)", "E85", "E90", "E95"]
    head += [f"C@{d:g}m" for d in thresholds] + ["NBV(s)"]
    rows = [head]
    for r in reports:
        row = [
            r.method,
            f"{r.n_detected}/{r.n_gt}",
            str(len(r.false_positives)),
            _fmt(r.mean_iou),
            str(r.n_views),
            _fmt(r.path_len_m, 1),
            _fmt(r.error_p85),
            _fmt(r.error_p90),
            _fmt(r.error_p95),
        ]
        row += [_fmt(r.completeness_at.get(d), 1) for d in thresholds]
        row.append(_fmt(r.avg_nbv_time_s, 4))
        rows.append(row)
    widths = [max(len(row[k]) for row in rows) for k in range(len(head))]
    lines = ["  ".join(c.rjust(w) if k else c.ljust(w) for k, (c, w) in enumerate(zip(row, widths))) for row in rows]
    lines.insert(1, "-" * len(lines[0]))
    for r in reports:
        if r.per_target_iou:
            cells = ", ".join(f"#{t}:{iou:.3f}" for t, iou in r.per_target_iou)
            lines.append(f"{r.method} per-target IoU: {cells}")
    return "\n".join(lines) + "\n"
