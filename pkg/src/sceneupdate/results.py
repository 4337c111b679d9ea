"""Serializable mission records."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from sceneupdate.config import PlannerConfig
from sceneupdate.geometry import HullPrism
from sceneupdate.views import View


@dataclass
class StepRecord:
    """One visited view and the cost of choosing it.

    ``wall_time_s`` covers planning only; detector time is excluded. ``gain``
    is ``None`` for views taken from the prior route.
    """

    step_index: int
    view_id: int
    mode: str
    gain: float | None
    candidates_considered: int
    wall_time_s: float

    def __post_init__(self):
        if self.wall_time_s < 0:
            raise ValueError("wall_time_s must be non-negative")

    def to_dict(self) -> dict:
        return {
            "step_index": self.step_index,
            "view_id": self.view_id,
            "mode": self.mode,
            "gain": self.gain,
            "candidates_considered": self.candidates_considered,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StepRecord":
        gain = d["gain"]
        return cls(
            int(d["step_index"]),
            int(d["view_id"]),
            str(d["mode"]),
            None if gain is None else float(gain),
            int(d["candidates_considered"]),
            float(d["wall_time_s"]),
        )


@dataclass
class TargetRecord:
    target_id: int
    hull: HullPrism
    n_points: int
    unreachable_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "target_id": self.target_id,
            "hull": self.hull.to_dict(),
            "n_points": self.n_points,
            "unreachable_samples": self.unreachable_samples,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TargetRecord":
        return cls(
            int(d["target_id"]),
            HullPrism.from_dict(d["hull"]),
            int(d["n_points"]),
            int(d.get("unreachable_samples", 0)),
        )


@dataclass
class MissionResult:
    """Everything needed to evaluate, render or reproduce one mission."""

    method: str
    views: list[View]
    path_length_m: float
    targets: list[TargetRecord]
    steps: list[StepRecord]
    config: PlannerConfig
    seeds: dict
    prior_view_ids: list[int] = field(default_factory=list)
    per_target_iou: list[dict] = field(default_factory=list)
    noise: dict = field(default_factory=dict)

    @property
    def view_ids(self) -> list[int]:
        return [v.id for v in self.views]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def hulls(self) -> list[HullPrism]:
        return [t.hull for t in self.targets]

    @property
    def avg_nbv_time_s(self) -> float:
        times = [s.wall_time_s for s in self.steps if s.mode == "nbv"]
        return sum(times) / len(times) if times else 0.0

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "trajectory": {
                "view_ids": self.view_ids,
                "length_m": self.path_length_m,
                "views": [v.to_dict() for v in self.views],
            },
            "prior_view_ids": list(self.prior_view_ids),
            "targets": [t.to_dict() for t in self.targets],
            "per_target_iou": [dict(r) for r in self.per_target_iou],
            "steps": [s.to_dict() for s in self.steps],
            "config": self.config.to_dict(),
            "seeds": dict(self.seeds),
            "noise": dict(self.noise),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MissionResult":
        traj = d["trajectory"]
        return cls(
            method=d["method"],
            views=[View.from_dict(v) for v in traj["views"]],
            path_length_m=float(traj["length_m"]),
            targets=[TargetRecord.from_dict(t) for t in d["targets"]],
            steps=[StepRecord.from_dict(s) for s in d["steps"]],
            config=PlannerConfig.from_dict(d["config"]),
            seeds=dict(d["seeds"]),
            prior_view_ids=[int(i) for i in d.get("prior_view_ids", [])],
            per_target_iou=[dict(r) for r in d.get("per_target_iou", [])],
            noise=dict(d.get("noise", {})),
        )

    def __eq__(self, other):
        if not isinstance(other, MissionResult):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def save(self, path, timings: bool = True) -> None:
        d = self.to_dict()
        if not timings:
            for s in d["steps"]:
                s["wall_time_s"] = 0.0
        Path(path).write_text(json.dumps(d, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "MissionResult":
        return cls.from_dict(json.loads(Path(path).read_text()))
