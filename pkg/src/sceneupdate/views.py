"""Candidate views on the safe-height plane."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sceneupdate.geometry import (
    GeometryError,
    HullPrism,
    dilate_convex,
    is_convex_ccw,
    poisson_disk,
)

#: Rig slots in generation order.
RIG_SLOTS = ("nadir", "+x", "-x", "+z", "-z")
TILTED_SLOTS = RIG_SLOTS[1:]


def slot_direction(slot: str, tilt: float) -> tuple[float, float, float]:
    """Unit viewing direction for a rig slot, tilted ``tilt`` rad from nadir."""
    s, c = math.sin(tilt), math.cos(tilt)
    dirs = {
        "nadir": (0.0, -1.0, 0.0),
        "+x": (s, -c, 0.0),
        "-x": (-s, -c, 0.0),
        "+z": (0.0, -c, s),
        "-z": (0.0, -c, -s),
    }
    return dirs[slot]


@dataclass(frozen=True)
class View:
    """A camera pose with its field of view.

    Angles are half-angles in radians; ``far`` bounds the viewing distance.
    """

    id: int
    position: tuple[float, float, float]
    direction: tuple[float, float, float]
    rig_slot: str
    horizontal_half_angle: float
    vertical_half_angle: float
    far: float
    source: str = "prior"

    @property
    def xyz(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": list(self.position),
            "direction": list(self.direction),
            "rig_slot": self.rig_slot,
            "horizontal_half_angle_deg": math.degrees(self.horizontal_half_angle),
            "vertical_half_angle_deg": math.degrees(self.vertical_half_angle),
            "far": self.far,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "View":
        return cls(
            int(d["id"]),
            tuple(float(x) for x in d["position"]),
            tuple(float(x) for x in d["direction"]),
            d["rig_slot"],
            math.radians(d["horizontal_half_angle_deg"]),
            math.radians(d["vertical_half_angle_deg"]),
            float(d["far"]),
            d.get("source", "prior"),
        )


def padding(h: float, alpha: float, beta: float, d: float) -> float:
    """Margin ``h * tan(beta - alpha) + d`` added around a target footprint.

    ``alpha`` is the camera tilt and ``beta`` the tilt plus the vertical
    half field of view, both in radians.
    """
    if not (0.0 <= alpha <= beta < math.pi / 2):
        raise ValueError("need 0 <= alpha <= beta < pi/2")
    if d < 0:
        raise ValueError("d must be non-negative")
    return h * math.tan(beta - alpha) + d


def make_view(view_id: int, xz, h: float, slot: str, cfg, source: str = "prior") -> View:
    return View(
        view_id,
        (float(xz[0]), float(h), float(xz[1])),
        slot_direction(slot, cfg.alpha),
        slot,
        cfg.horizontal_half_fov,
        cfg.beta - cfg.alpha,
        cfg.far_factor * h,
        source,
    )


def generate_candidates(
    target,
    cfg,
    seed: int,
    radius: float | None = None,
    first_id: int = 0,
    source: str = "prior",
) -> list[View]:
    """Rig views at Poisson-disk positions over the padded target footprint.

    Parameters
    ----------
    target : HullPrism, Scene or (k, 2) array
        Region to cover. A scene contributes its bounds rectangle.
    cfg : PlannerConfig
    seed : int
        Seed for the Poisson-disk sampler.
    radius : float, optional
        Minimum spacing of positions; defaults to ``cfg.prior_radius_m``.
    first_id : int
        Id of the first generated view; ids are consecutive.

    Returns
    -------
    list of View
        Five views per position, in :data:`RIG_SLOTS` order.
    """
    radius = cfg.prior_radius_m if radius is None else radius
    if radius <= 0:
        raise ValueError("radius must be positive")
    if isinstance(target, HullPrism):
        fp = target.footprint
    elif hasattr(target, "ground"):
        fp = target.ground
    else:
        fp = np.asarray(target, dtype=float)
    if not is_convex_ccw(fp):
        raise GeometryError("degenerate target footprint")
    d = cfg.d_pad if cfg.d_pad is not None else radius
    pad = padding(cfg.h, cfg.alpha, cfg.beta, d)
    region = dilate_convex(fp, pad)
    positions = poisson_disk(region, radius, seed)
    views = []
    vid = first_id
    for xz in positions:
        for slot in RIG_SLOTS:
            views.append(make_view(vid, xz, cfg.h, slot, cfg, source))
            vid += 1
    return views
