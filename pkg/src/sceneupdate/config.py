"""Planner configuration."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class PlannerConfig:
    """Every tunable scalar of the planner.

    Angles are stored in degrees (``*_deg`` fields, as in JSON files) and
    read in radians through the ``alpha``, ``beta`` and
    ``horizontal_half_fov`` properties. ``alpha`` is the rig tilt from nadir
    and ``beta - alpha`` the vertical half field of view. ``beta_prior``
    and ``d_pad`` default to ``omega`` and the active Poisson radius when
    left as ``None``.
    """

    h: float = 120.0
    omega: float = 3.0
    gamma: float = 2.0
    beta_prior: float | None = None
    phi: float = 0.3
    K: int = 10
    prior_radius_m: float = 15.0
    realtime_radius_m: float = 5.0
    alpha_deg: float = 30.0
    beta_deg: float = 57.0
    horizontal_half_fov_deg: float = 37.0
    d_pad: float | None = None
    far_factor: float = 3.0
    sample_spacing_m: float = 10.0
    target_spacing_m: float = 5.0
    cluster_gap_m: float = 25.0
    tau: float = 0.05
    window: int = 8
    merge_always_union: bool = False
    hull_regen_iou: float = 0.95
    reopen_margin_m: float = 2.0
    gain_observed_only: bool = False
    metric_spacing_m: float = 1.0
    completeness_thresholds_m: tuple[float, ...] = field(default=(1.0, 2.0, 5.0))
    seed: int = 0

    def __post_init__(self):
        positive = (
            "h", "omega", "gamma", "prior_radius_m", "realtime_radius_m", "far_factor",
            "sample_spacing_m", "target_spacing_m", "cluster_gap_m", "metric_spacing_m",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.beta_prior is not None and not self.beta_prior > 0:
            raise ValueError("beta_prior must be positive")
        if not 0.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (0, 1)")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0.0 <= self.alpha <= self.beta < math.pi / 2:
            raise ValueError("need 0 <= alpha <= beta < pi/2")
        if not (0.0 < self.beta - self.alpha < math.pi / 2):
            raise ValueError("vertical half field of view (beta - alpha) must be positive")
        if not 0.0 < self.horizontal_half_fov < math.pi / 2:
            raise ValueError("horizontal_half_fov must lie in (0, pi/2)")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        object.__setattr__(
            self, "completeness_thresholds_m", tuple(float(t) for t in self.completeness_thresholds_m)
        )

    @property
    def alpha(self) -> float:
        return math.radians(self.alpha_deg)

    @property
    def beta(self) -> float:
        return math.radians(self.beta_deg)

    @property
    def horizontal_half_fov(self) -> float:
        return math.radians(self.horizontal_half_fov_deg)

    @property
    def beta_prior_value(self) -> float:
        return self.omega if self.beta_prior is None else self.beta_prior

    def with_(self, **changes) -> "PlannerConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["completeness_thresholds_m"] = list(self.completeness_thresholds_m)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "completeness_thresholds_m" in d:
            d["completeness_thresholds_m"] = tuple(d["completeness_thresholds_m"])
        return cls(**d)


def load_config(path) -> PlannerConfig:
    return PlannerConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(cfg: PlannerConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
