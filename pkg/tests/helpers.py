from sceneupdate import PlannerConfig
from sceneupdate.geometry import rectangle
from sceneupdate.scene import Label, Prism, Scene


def box(x0, z0, x1, z1, top, label=Label.BUILDING_LOW, base=0.0, name=""):
    return Prism(rectangle(x0, z0, x1, z1), base, top, label, name)


def small_scene(*prisms, size=100.0):
    return Scene((0.0, 0.0, size, size), list(prisms))


def random_views(rng, n, h=120.0, lo=0.0, hi=100.0, first_id=0):
    from sceneupdate.views import RIG_SLOTS, make_view

    cfg = PlannerConfig()
    out = []
    for k in range(n):
        xz = rng.uniform(lo, hi, size=2)
        out.append(make_view(first_id + k, xz, h, RIG_SLOTS[k % 5], cfg))
    return out
