"""Labelled 2.5D urban scenes, their ground-truth differences and surface samples."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from sceneupdate.geometry import (
    GeometryError,
    HullPrism,
    Occluders,
    clip_convex,
    convex_hull_2d,
    is_convex_ccw,
    points_in_convex_polygon,
    points_in_prism,
    polygon_area,
    rectangle,
    sample_polygon,
    sample_prism_surface,
)

log = logging.getLogger(__name__)

#: Height (m) separating low from high buildings in the prior table.
HIGH_BUILDING_M = 40.0


class SceneError(ValueError):
    """Raised when a scene file cannot be parsed or violates an invariant."""


class Label(str, Enum):
    TERRAIN = "Terrain"
    VEGETATION = "Vegetation"
    WATER = "Water"
    BRIDGE = "Bridge"
    VEHICLE = "Vehicle"
    BOAT = "Boat"
    BUILDING_LOW = "BuildingLow"
    BUILDING_HIGH = "BuildingHigh"


# WUSU change statistics per land-cover class: (#changed, #total, change prob).
WUSU_CHANGE_STATS: dict[str, tuple[int, int, float]] = {
    "Road": (568778, 31893692, 0.017833558),
    "Low building": (2960276, 39230330, 0.075458861),
    "High building": (1228858, 68012494, 0.018068121),
    "Arable land": (0, 317516, 0.0),
    "Woodland": (1748983, 42439196, 0.041211502),
    "Grassland": (4459227, 17008223, 0.262180652),
    "River": (916, 38543080, 2.37656e-05),
    "Lake": (94552, 39519696, 0.002392529),
    "Structure": (978756, 16369858, 0.059790134),
    "Excavation": (8293856, 29785891, 0.278449149),
    "Bare surface": (32640, 65788, 0.496139114),
    "Unclassified": (0, 261919644, 0.0),
}

LABEL_TO_WUSU: dict[Label, str] = {
    Label.TERRAIN: "Road",
    Label.VEHICLE: "Road",
    Label.BUILDING_LOW: "Low building",
    Label.BUILDING_HIGH: "High building",
    Label.VEGETATION: "Woodland",
    Label.WATER: "Lake",
    Label.BOAT: "Lake",
    Label.BRIDGE: "Structure",
}

DEFAULT_PRIOR_TABLE: dict[Label, float] = {
    lab: WUSU_CHANGE_STATS[cls][2] for lab, cls in LABEL_TO_WUSU.items()
}


def prior_probability(label, table: Mapping[Label, float] | None = None) -> float:
    """Prior change probability of a semantic label.

    >>> prior_probability(Label.BUILDING_LOW)
    0.075458861
    """
    table = DEFAULT_PRIOR_TABLE if table is None else table
    try:
        lab = Label(label)
    except ValueError:
        raise KeyError(f"unknown label {label!r}") from None
    if lab not in table:
        raise KeyError(f"label {lab.value!r} missing from prior table")
    return table[lab]


def parse_label(name: str, top_height: float) -> Label:
    """Map a file label to a :class:`Label`, splitting buildings by height."""
    if name in ("Building", Label.BUILDING_LOW.value, Label.BUILDING_HIGH.value):
        return Label.BUILDING_HIGH if top_height > HIGH_BUILDING_M else Label.BUILDING_LOW
    return Label(name)


@dataclass(frozen=True, eq=False)
class Prism:
    """A labelled convex prism standing in for a building or object."""

    footprint: np.ndarray
    base_height: float
    top_height: float
    label: Label = Label.BUILDING_LOW
    name: str = ""

    def __post_init__(self):
        fp = np.asarray(self.footprint, dtype=float)
        object.__setattr__(self, "footprint", fp)
        tag = self.name or "<unnamed>"
        if fp.ndim != 2 or fp.shape[1] != 2 or len(fp) < 3:
            raise SceneError(f"prism {tag}: footprint needs >= 3 vertices")
        if polygon_area(fp) < 0 and is_convex_ccw(fp[::-1]):
            raise SceneError(f"prism {tag}: footprint not counter-clockwise")
        if not is_convex_ccw(fp):
            raise SceneError(f"prism {tag}: footprint not convex")
        if not self.top_height > self.base_height >= 0:
            raise SceneError(f"prism {tag}: need top_height > base_height >= 0")

    def same_geometry(self, other: "Prism", tol: float = 1e-9) -> bool:
        return (
            self.label == other.label
            and self.footprint.shape == other.footprint.shape
            and bool(np.allclose(self.footprint, other.footprint, atol=tol, rtol=0))
            and abs(self.base_height - other.base_height) <= tol
            and abs(self.top_height - other.top_height) <= tol
        )

    def __eq__(self, other):
        if not isinstance(other, Prism):
            return NotImplemented
        return self.same_geometry(other, tol=0.0) and self.name == other.name

    def as_hull(self) -> HullPrism:
        return HullPrism(self.footprint, self.base_height, self.top_height)

    def to_dict(self) -> dict:
        d = {
            "footprint": self.footprint.tolist(),
            "base": float(self.base_height),
            "top": float(self.top_height),
            "label": self.label.value,
        }
        if self.name:
            d["name"] = self.name
        return d


@dataclass(eq=False)
class Scene:
    """Prisms standing on a rectangular Terrain ground plane at ``y = 0``."""

    bounds: tuple[float, float, float, float]
    prisms: list[Prism] = field(default_factory=list)
    _occluders: Occluders | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.bounds = tuple(float(b) for b in self.bounds)
        xmin, zmin, xmax, zmax = self.bounds
        if not (xmax > xmin and zmax > zmin):
            raise SceneError("bounds must have positive extent")
        rect = self.ground
        for p in self.prisms:
            if not points_in_convex_polygon(p.footprint, rect, tol=1e-9).all():
                raise SceneError(f"prism {p.name or '<unnamed>'}: footprint outside bounds")

    @property
    def ground(self) -> np.ndarray:
        return rectangle(*self.bounds)

    def occluders(self) -> Occluders:
        if self._occluders is None:
            self._occluders = Occluders(self.prisms)
        return self._occluders

    def validate_height(self, h: float) -> None:
        for p in self.prisms:
            if p.top_height >= h:
                raise SceneError(f"prism {p.name or '<unnamed>'}: reaches safe-height plane {h}")

    def __eq__(self, other):
        if not isinstance(other, Scene):
            return NotImplemented
        return self.bounds == other.bounds and self.prisms == other.prisms

    def to_dict(self) -> dict:
        return {"bounds": list(self.bounds), "prisms": [p.to_dict() for p in self.prisms]}


def scene_from_dict(data: Mapping, source: str = "<scene>") -> Scene:
    """Build a :class:`Scene` from the JSON-decoded scene format."""
    if not isinstance(data, Mapping):
        raise SceneError(f"{source}: top level must be an object")
    bounds = data.get("bounds")
    if bounds is not None and not (isinstance(bounds, (list, tuple)) and len(bounds) == 4):
        raise SceneError(f"{source}: 'bounds' must be [xmin, zmin, xmax, zmax]")
    prisms = []
    for i, rec in enumerate(data.get("prisms", [])):
        where = f"{source}: prisms[{i}]"
        for key in ("footprint", "base", "top", "label"):
            if key not in rec:
                raise SceneError(f"{where}: missing field {key!r}")
        try:
            top = float(rec["top"])
            label = parse_label(rec["label"], top)
            fp = np.asarray(rec["footprint"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise SceneError(f"{where}: {exc}") from None
        prisms.append(Prism(fp, float(rec["base"]), top, label, str(rec.get("name", f"p{i}"))))
    if bounds is None:
        # Without explicit bounds the scene is the box around its prisms.
        if not prisms:
            raise SceneError(f"{source}: missing field 'bounds'")
        allfp = np.vstack([p.footprint for p in prisms])
        bounds = (*allfp.min(axis=0), *allfp.max(axis=0))
    return Scene(tuple(bounds), prisms)


def load_scene(path, h: float | None = None) -> Scene:
    """Read and validate a scene JSON file.

    Parameters
    ----------
    path : path-like
        Scene file in the ``{bounds, prisms: [...]}`` format.
    h : float, optional
        Safe-height plane; prisms reaching it are rejected.
    """
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    scene = scene_from_dict(data, str(path))
    if h is not None:
        scene.validate_height(h)
    return scene


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2) + "\n")


BUNDLED_SCENES = ("five_changes", "three_removed")


def load_bundled(name: str) -> tuple[Scene, Scene]:
    """Load a bundled ``(t1, t2)`` scene pair by name."""
    if name not in BUNDLED_SCENES:
        raise KeyError(f"no bundled scene {name!r}; choose from {BUNDLED_SCENES}")
    pkg = resources.files("sceneupdate") / "data"
    out = []
    for epoch in ("t1", "t2"):
        res = pkg / f"{name}_{epoch}.json"
        out.append(scene_from_dict(json.loads(res.read_text()), f"{name}_{epoch}.json"))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    position: tuple[float, float, float]
    normal: tuple[float, float, float]
    q: float
    label: Label


@dataclass(eq=False)
class SampleSet:
    """Surface samples held as parallel arrays.

    ``labels`` is ``None`` for change-target samples, which carry ``q = 1``.
    """

    positions: np.ndarray
    normals: np.ndarray
    q: np.ndarray
    labels: list[Label | None]

    def __len__(self) -> int:
        return len(self.q)

    def __getitem__(self, i: int) -> Sample:
        return Sample(
            tuple(float(x) for x in self.positions[i]),
            tuple(float(x) for x in self.normals[i]),
            float(self.q[i]),
            self.labels[i],
        )

    def __iter__(self) -> Iterator[Sample]:
        return (self[i] for i in range(len(self)))

    def subset(self, mask) -> "SampleSet":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        return SampleSet(
            self.positions[idx], self.normals[idx], self.q[idx], [self.labels[i] for i in idx]
        )

    @classmethod
    def empty(cls) -> "SampleSet":
        return cls(np.empty((0, 3)), np.empty((0, 3)), np.empty(0), [])

    @classmethod
    def concat(cls, parts: Sequence["SampleSet"]) -> "SampleSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.vstack([p.positions for p in parts]),
            np.vstack([p.normals for p in parts]),
            np.concatenate([p.q for p in parts]),
            [lab for p in parts for lab in p.labels],
        )


def _hidden_by_other(points, prisms: Sequence[Prism], own: int | None) -> np.ndarray:
    hidden = np.zeros(len(points), dtype=bool)
    for k, p in enumerate(prisms):
        if k == own:
            continue
        hidden |= points_in_prism(points, p.footprint, p.base_height, p.top_height, tol=1e-6)
    return hidden


def sample_surface(
    scene: Scene, spacing: float, prior_table: Mapping[Label, float] | None = None
) -> SampleSet:
    """Discretise prism tops, prism walls and the ground into scored samples.

    Ground samples use an inclusive grid over the bounds (a 10 m square at
    5 m spacing gives 3 x 3 samples); prism faces use cell-centred grids.
    Ground under prisms standing on it, and face samples buried inside an
    adjacent prism, are dropped. ``q`` is the label's prior probability.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    table = DEFAULT_PRIOR_TABLE if prior_table is None else prior_table
    parts = []

    g2 = sample_polygon(scene.ground, spacing, boundary=True)
    keep = np.ones(len(g2), dtype=bool)
    for p in scene.prisms:
        if p.base_height <= 0.0:
            keep &= ~points_in_convex_polygon(g2, p.footprint, tol=-1e-6)
    g2 = g2[keep]
    g3 = np.column_stack([g2[:, 0], np.zeros(len(g2)), g2[:, 1]])
    q0 = prior_probability(Label.TERRAIN, table)
    parts.append(
        SampleSet(g3, np.tile([0.0, 1.0, 0.0], (len(g3), 1)), np.full(len(g3), q0), [Label.TERRAIN] * len(g3))
    )

    for k, p in enumerate(scene.prisms):
        pts, nrm = sample_prism_surface(p.footprint, p.base_height, p.top_height, spacing)
        keep = ~_hidden_by_other(pts, scene.prisms, k)
        pts, nrm = pts[keep], nrm[keep]
        qv = prior_probability(p.label, table)
        parts.append(SampleSet(pts, nrm, np.full(len(pts), qv), [p.label] * len(pts)))
    return SampleSet.concat(parts)


# ---------------------------------------------------------------------------
# Ground-truth differences
# ---------------------------------------------------------------------------


def _overlaps(a: Prism, b: Prism) -> bool:
    inter = clip_convex(a.footprint, b.footprint)
    return len(inter) >= 3 and polygon_area(inter) > 1e-9


def diff_scenes(t1: Scene, t2: Scene) -> list[Prism]:
    """Change regions between two epochs of the same area.

    Prisms without a geometric twin in the other epoch are grouped by
    footprint overlap; each group becomes one region whose footprint is the
    convex hull of the members and whose height range spans them. Regions are
    ordered by the position of their first member in ``t1`` then ``t2``.
    """
    if t1.bounds != t2.bounds:
        raise SceneError("scenes have different bounds")
    used2 = [False] * len(t2.prisms)
    only1 = []
    for a in t1.prisms:
        for j, b in enumerate(t2.prisms):
            if not used2[j] and a.same_geometry(b):
                used2[j] = True
                break
        else:
            only1.append(a)
    only2 = [b for j, b in enumerate(t2.prisms) if not used2[j]]
    members = [(1, p) for p in only1] + [(2, p) for p in only2]

    parent = list(range(len(members)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            if _overlaps(members[i][1], members[j][1]):
                parent[find(i)] = find(j)

    groups: dict[int, list[int]] = {}
    for i in range(len(members)):
        groups.setdefault(find(i), []).append(i)

    regions = []
    for idx in sorted(groups.values(), key=min):
        ps = [members[i][1] for i in idx]
        newer = [members[i][1] for i in idx if members[i][0] == 2]
        label = (newer or ps)[0].label
        if len(ps) == 1:
            fp = ps[0].footprint
        else:
            fp = convex_hull_2d(np.vstack([p.footprint for p in ps]))
        name = "+".join(p.name for p in ps if p.name)
        regions.append(
            Prism(
                fp,
                min(p.base_height for p in ps),
                max(p.top_height for p in ps),
                label,
                name,
            )
        )
    return regions


def unchanged_prisms(t1: Scene, t2: Scene) -> list[Prism]:
    """Prisms present with identical geometry in both epochs."""
    used2 = [False] * len(t2.prisms)
    same = []
    for a in t1.prisms:
        for j, b in enumerate(t2.prisms):
            if not used2[j] and a.same_geometry(b):
                used2[j] = True
                same.append(a)
                break
    return same


__all__ = [
    "BUNDLED_SCENES",
    "DEFAULT_PRIOR_TABLE",
    "GeometryError",
    "HIGH_BUILDING_M",
    "Label",
    "Prism",
    "Sample",
    "SampleSet",
    "Scene",
    "SceneError",
    "WUSU_CHANGE_STATS",
    "diff_scenes",
    "load_bundled",
    "load_scene",
    "prior_probability",
    "sample_surface",
    "save_scene",
    "scene_from_dict",
    "unchanged_prisms",
]
