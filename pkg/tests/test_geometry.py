import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist
from shapely.geometry import Polygon

from sceneupdate.geometry import (
    Frustum,
    GeometryError,
    HullPrism,
    clip_convex,
    convex_hull_2d,
    dilate_convex,
    hull_prism_of,
    iou_prism,
    points_in_convex_polygon,
    points_in_prism,
    poisson_disk,
    rectangle,
    sample_prism_surface,
    visibility_matrix,
    visible,
)
from sceneupdate.scene import Sample
from sceneupdate.views import make_view

from helpers import box, small_scene


def nadir(x=0.0, z=0.0, h=120.0, vid=0):
    from sceneupdate import PlannerConfig

    return make_view(vid, (x, z), h, "nadir", PlannerConfig())


def random_convex(rng, n=8, scale=20.0, centre=(0.0, 0.0)):
    while True:
        pts = rng.normal(size=(n, 2)) * scale + np.asarray(centre)
        try:
            return convex_hull_2d(pts)
        except GeometryError:
            continue


# -- visibility -------------------------------------------------------------


class TestVisible:
    def test_unobstructed_nadir(self):
        s = Sample((0.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.5, None)
        assert visible(s, nadir(), small_scene()) == 1

    def test_prism_straddling_midpoint(self):
        s = Sample((50.0, 0.0, 50.0), (0.0, 1.0, 0.0), 0.5, None)
        scene = small_scene(box(45, 45, 55, 55, 80))
        assert visible(s, nadir(50, 50), scene) == 0

    def test_outside_frustum(self):
        # far off to the side of a nadir camera
        s = Sample((400.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.5, None)
        assert visible(s, nadir(), small_scene()) == 0

    def test_back_face(self):
        s = Sample((0.0, 0.0, 0.0), (0.0, -1.0, 0.0), 0.5, None)
        assert visible(s, nadir(), small_scene()) == 0

    def test_roof_sample_sees_past_own_roof(self):
        scene = small_scene(box(40, 40, 60, 60, 30))
        s = Sample((50.0, 30.0, 50.0), (0.0, 1.0, 0.0), 0.5, None)
        assert visible(s, nadir(50, 50), scene) == 1

    def test_wall_sample_facing_away_is_culled(self):
        scene = small_scene(box(40, 40, 60, 60, 30))
        s = Sample((60.0, 10.0, 50.0), (1.0, 0.0, 0.0), 0.5, None)
        from sceneupdate import PlannerConfig

        cfg = PlannerConfig()
        assert visible(s, make_view(0, (100, 50), 120, "-x", cfg), scene) == 1
        assert visible(s, make_view(0, (0, 50), 120, "+x", cfg), scene) == 0


def _segment_oracle(cam, pt, prisms, steps=4000, shrink=0.0):
    """Dense march along the open segment; hit if a probe is strictly inside a prism."""
    t = (np.arange(1, steps) / steps)[:, None]
    L = np.linalg.norm(pt - cam)
    t = t[(t[:, 0] * L) < L - 0.05]
    probes = cam[None, :] + t * (pt - cam)[None, :]
    for p in prisms:
        if points_in_prism(probes, p.footprint, p.base_height, p.top_height, tol=shrink).any():
            return True
    return False


def _frustum_oracle(view, pt):
    d = np.asarray(view.direction)
    v = pt - np.asarray(view.position)
    depth = v @ d
    if depth <= 0 or np.linalg.norm(v) > view.far:
        return None if abs(depth) < 1e-6 else False
    from sceneupdate.geometry import camera_frame

    right, up = camera_frame(d)
    ah = math.atan2(abs(v @ right), depth)
    av = math.atan2(abs(v @ up), depth)
    margin = min(view.horizontal_half_angle - ah, view.vertical_half_angle - av)
    if abs(margin) < 1e-6:
        return None
    return margin > 0


def test_visibility_matches_march_oracle():
    rng = np.random.default_rng(7)
    from sceneupdate import PlannerConfig
    from sceneupdate.views import RIG_SLOTS

    cfg = PlannerConfig()
    checked = 0
    for trial in range(60):
        prisms = []
        for k in range(4):
            c = rng.uniform(20, 180, size=2)
            prisms.append(box(c[0] - 8, c[1] - 8, c[0] + 8, c[1] + 8, rng.uniform(10, 90)))
        scene = small_scene(*[p for p in prisms], size=200.0)
        view = make_view(0, rng.uniform(0, 200, size=2), 120.0, RIG_SLOTS[trial % 5], cfg)
        pts = np.column_stack([rng.uniform(0, 200, 40), np.zeros(40), rng.uniform(0, 200, 40)])
        nrm = np.tile([0.0, 1.0, 0.0], (40, 1))
        got = visibility_matrix([view], pts, nrm, scene.occluders())[0]
        cam = np.asarray(view.position)
        for i, p in enumerate(pts):
            inside = _frustum_oracle(view, p)
            if inside is None:
                continue
            hit_loose = _segment_oracle(cam, p, prisms, shrink=-0.05)
            hit_tight = _segment_oracle(cam, p, prisms, shrink=0.05)
            if hit_loose != hit_tight:
                continue
            assert got[i] == (inside and not hit_tight), (trial, i)
            checked += 1
    assert checked > 2000


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_adding_occluder_never_reveals(seed):
    rng = np.random.default_rng(seed)
    base = [box(*(lambda c: (c[0], c[1], c[0] + 15, c[1] + 15))(rng.uniform(0, 180, 2)), rng.uniform(5, 80))
            for _ in range(3)]
    extra = box(*(lambda c: (c[0], c[1], c[0] + 20, c[1] + 20))(rng.uniform(0, 180, 2)), rng.uniform(5, 80))
    views = [nadir(*rng.uniform(0, 200, 2), vid=k) for k in range(3)]
    pts = np.column_stack([rng.uniform(0, 200, 50), np.zeros(50), rng.uniform(0, 200, 50)])
    nrm = np.tile([0.0, 1.0, 0.0], (50, 1))
    a = visibility_matrix(views, pts, nrm, base)
    b = visibility_matrix(views, pts, nrm, base + [extra])
    assert not (b & ~a).any()


def test_frustum_contains():
    f = Frustum(np.zeros(3), np.array([0.0, -1.0, 0.0]), math.radians(37), math.radians(27), 360.0)
    inside = f.contains(np.array([[0.0, -100.0, 0.0], [0.0, 100.0, 0.0], [500.0, -10.0, 0.0]]))
    assert inside.tolist() == [True, False, False]


# -- hulls and polygons -----------------------------------------------------


def test_hull_of_square_with_centre():
    pts = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    hull = convex_hull_2d(pts)
    assert len(hull) == 4
    assert {tuple(p) for p in hull} == {(0, 0), (1, 0), (1, 1), (0, 1)}


def test_hull_degenerate():
    with pytest.raises(GeometryError, match="degenerate hull"):
        convex_hull_2d([[0, 0], [1, 1], [2, 2]])
    with pytest.raises(GeometryError):
        convex_hull_2d([[0, 0], [1, 1]])


def test_hull_disk_cloud_contained_and_matches_scipy():
    rng = np.random.default_rng(3)
    r = np.sqrt(rng.uniform(0, 1, 1000))
    th = rng.uniform(0, 2 * np.pi, 1000)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th)])
    hull = convex_hull_2d(pts)
    assert points_in_convex_polygon(pts, hull, tol=1e-9).all()
    ref = pts[ConvexHull(pts).vertices]
    assert {tuple(p) for p in hull} == {tuple(p) for p in ref}


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=40))
def test_hull_idempotent_and_contains(points):
    pts = np.array(points)
    try:
        hull = convex_hull_2d(pts)
    except GeometryError:
        return
    assert np.array_equal(convex_hull_2d(hull), hull)
    assert points_in_convex_polygon(pts, hull, tol=1e-9).all()


def test_clip_matches_shapely():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = random_convex(rng)
        b = random_convex(rng, centre=rng.normal(size=2) * 15)
        inter = clip_convex(a, b)
        area = Polygon(inter).area if len(inter) >= 3 else 0.0
        assert area == pytest.approx(Polygon(a).intersection(Polygon(b)).area, abs=1e-7)


def test_dilate_contains_offset_disk():
    sq = rectangle(0, 0, 10, 10)
    d = dilate_convex(sq, 5.0)
    ang = np.linspace(0, 2 * np.pi, 200)
    probes = np.vstack([c + 5.0 * np.column_stack([np.cos(ang), np.sin(ang)]) for c in sq])
    assert points_in_convex_polygon(probes, d, tol=1e-9).all()


# -- prisms -----------------------------------------------------------------


def _cube(x=0.0):
    return HullPrism(rectangle(x, 0, x + 1, 1), 0.0, 1.0)


def test_iou_examples():
    assert iou_prism(_cube(), _cube()) == 1.0
    assert iou_prism(_cube(), _cube(5.0)) == 0.0
    assert iou_prism(_cube(), _cube(0.5)) == pytest.approx(1 / 3, abs=1e-12)


def test_hull_prism_of_box_and_flat_cloud():
    corners = np.array([[x, y, z] for x in (0, 4) for y in (1, 7) for z in (2, 5)], dtype=float)
    hp = hull_prism_of(corners)
    assert hp == HullPrism(rectangle(0, 2, 4, 5), 1.0, 7.0)
    flat = hull_prism_of(np.array([[0, 3, 0], [1, 3, 0], [0, 3, 1.0]]))
    assert flat.base_height == flat.top_height == 3.0


def test_hull_prism_of_stacked_boxes():
    a = np.array([[x, y, z] for x in (0, 2) for y in (0, 5) for z in (0, 2)], dtype=float)
    b = np.array([[x, y, z] for x in (1, 3) for y in (5, 9) for z in (1, 4)], dtype=float)
    hp = hull_prism_of(np.vstack([a, b]))
    ref = ConvexHull(np.vstack([a, b])[:, [0, 2]])
    assert hp.area == pytest.approx(ref.volume, abs=1e-12)
    assert (hp.base_height, hp.top_height) == (0.0, 9.0)


prism_st = st.builds(
    lambda x, z, w, d, b, h: HullPrism(rectangle(x, z, x + w, z + d), b, b + h),
    st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 20), st.floats(0.5, 20),
    st.floats(0, 10), st.floats(0.5, 20),
)


@settings(max_examples=200, deadline=None)
@given(prism_st, prism_st)
def test_iou_properties(a, b):
    ab, ba = iou_prism(a, b), iou_prism(b, a)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert 0.0 <= ab <= 1.0
    assert iou_prism(a, a) == pytest.approx(1.0, abs=1e-12)
    if a != b:
        same = np.allclose(a.footprint, b.footprint) and a.base_height == b.base_height and a.top_height == b.top_height
        if not same:
            assert ab < 1.0 - 1e-12 or np.isclose(ab, 1.0)


def test_iou_against_shapely_volume():
    rng = np.random.default_rng(5)
    for _ in range(100):
        fa, fb = random_convex(rng), random_convex(rng, centre=rng.normal(size=2) * 10)
        a = HullPrism(fa, *sorted(rng.uniform(0, 30, 2)))
        b = HullPrism(fb, *sorted(rng.uniform(0, 30, 2)))
        ia = Polygon(fa).intersection(Polygon(fb)).area
        oh = max(0.0, min(a.top_height, b.top_height) - max(a.base_height, b.base_height))
        inter = ia * oh
        ref = inter / (a.volume + b.volume - inter)
        assert iou_prism(a, b) == pytest.approx(ref, abs=1e-9)


def test_prism_surface_samples_on_surface():
    fp = rectangle(0, 0, 10, 20)
    pts, nrm = sample_prism_surface(fp, 2.0, 12.0, 3.0, boundary=True)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)
    on_top = np.isclose(pts[:, 1], 12.0)
    on_wall = np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], 10) | np.isclose(pts[:, 2], 0) | np.isclose(pts[:, 2], 20)
    assert (on_top | on_wall).all()
    assert ((pts[:, 1] >= 2.0 - 1e-9) & (pts[:, 1] <= 12.0 + 1e-9)).all()


# -- Poisson disk -----------------------------------------------------------


def test_poisson_small_region_single_point():
    pts = poisson_disk(rectangle(0, 0, 3, 3), 15.0, seed=1)
    assert len(pts) == 1


def test_poisson_square_radius_15():
    region = rectangle(0, 0, 100, 100)
    pts = poisson_disk(region, 15.0, seed=4)
    assert pdist(pts).min() >= 15.0
    assert points_in_convex_polygon(pts, region, tol=1e-9).all()
    assert np.array_equal(pts, poisson_disk(region, 15.0, seed=4))


def test_poisson_maximal_statistically():
    region = rectangle(0, 0, 100, 60)
    pts = poisson_disk(region, 8.0, seed=9)
    rng = np.random.default_rng(0)
    probes = rng.uniform([0, 0], [100, 60], size=(20000, 2))
    from scipy.spatial import cKDTree

    d, _ = cKDTree(pts).query(probes)
    assert (d >= 8.0).mean() < 0.005
    assert d.max() < 8.0 * 1.15


def test_poisson_min_distance_1000_seeds():
    region = dilate_convex(rectangle(0, 0, 40, 25), 3.0)
    for seed in range(1000):
        pts = poisson_disk(region, 6.0, seed=seed)
        assert pdist(pts).min() >= 6.0
