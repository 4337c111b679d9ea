"""Top-down SVG of a mission: scene, true changes, route and found hulls."""

from __future__ import annotations

import xml.etree.ElementTree as ET
from pathlib import Path

from sceneupdate.scene import Scene, diff_scenes

SVG_NS = "http://www.w3.org/2000/svg"
_SIZE = 800.0
_MARGIN = 40.0


def _mapper(bounds):
    xmin, zmin, xmax, zmax = bounds
    scale = (_SIZE - 2 * _MARGIN) / max(xmax - xmin, zmax - zmin)

    def f(x, z):
        return _MARGIN + (x - xmin) * scale, _MARGIN + (zmax - z) * scale

    return f


def _poly_points(fp, f) -> str:
    return " ".join("{:.2f},{:.2f}".format(*f(x, z)) for x, z in fp)


def render_svg(result, scenes: tuple[Scene, Scene] | Scene, out) -> Path:
    """Write the SVG to ``out`` and return its path.

    ``scenes`` is the ``(t1, t2)`` pair; a single scene draws no changes.
    """
    t1, t2 = scenes if isinstance(scenes, tuple) else (scenes, scenes)
    f = _mapper(t1.bounds)
    h = _SIZE + 70
    svg = ET.Element("svg", xmlns=SVG_NS, width=f"{_SIZE:.0f}", height=f"{h:.0f}",
                     viewBox=f"0 0 {_SIZE:.0f} {h:.0f}")
    defs = ET.SubElement(svg, "defs")
    marker = ET.SubElement(defs, "marker", id="arrow", markerWidth="8", markerHeight="8",
                           refX="7", refY="4", orient="auto", markerUnits="userSpaceOnUse")
    ET.SubElement(marker, "path", d="M0,0 L8,4 L0,8 z", fill="#1f4e9a")
    ET.SubElement(svg, "rect", x="0", y="0", width=f"{_SIZE:.0f}", height=f"{h:.0f}", fill="white")
    ground = ET.SubElement(svg, "g", id="scene")
    ET.SubElement(ground, "polygon", points=_poly_points(t1.ground, f), fill="#f4f4f0", stroke="#999")
    for p in t1.prisms:
        ET.SubElement(ground, "polygon", points=_poly_points(p.footprint, f), fill="#bbbbbb",
                      stroke="#777", **{"stroke-width": "1"})
    gt = ET.SubElement(svg, "g", id="changes")
    for r in diff_scenes(t1, t2):
        ET.SubElement(gt, "polygon", points=_poly_points(r.footprint, f), fill="none", stroke="#c62828",
                      **{"stroke-width": "2", "stroke-dasharray": "6,3"})
    found = ET.SubElement(svg, "g", id="hulls")
    for t in result.targets if result is not None else []:
        ET.SubElement(found, "polygon", points=_poly_points(t.hull.footprint, f), fill="#ffb300",
                      stroke="#e65100", **{"fill-opacity": "0.55", "stroke-width": "1.5"})
    route = ET.SubElement(svg, "g", id="trajectory")
    pts = []
    for v in result.views if result is not None else []:
        xy = f(v.position[0], v.position[2])
        if not pts or pts[-1] != xy:
            pts.append(xy)
    for a, b in zip(pts, pts[1:]):
        ET.SubElement(route, "line", x1=f"{a[0]:.2f}", y1=f"{a[1]:.2f}", x2=f"{b[0]:.2f}", y2=f"{b[1]:.2f}",
                      stroke="#1f4e9a", **{"stroke-width": "1.5", "marker-end": "url(#arrow)"})
    if pts:
        ET.SubElement(route, "circle", cx=f"{pts[0][0]:.2f}", cy=f"{pts[0][1]:.2f}", r="5", fill="#2e7d32")
    legend = ET.SubElement(svg, "g", id="legend")
    items = [
        ("#bbbbbb", "none", "T1 prisms"),
        ("none", "#c62828", "true changes"),
        ("#ffb300", "#e65100", "detected hulls"),
        ("none", "#1f4e9a", "trajectory (start: green)"),
    ]
    x = _MARGIN
    y = _SIZE + 20
    for fill, stroke, text in items:
        ET.SubElement(legend, "rect", x=f"{x:.0f}", y=f"{y:.0f}", width="16", height="12", fill=fill,
                      stroke=stroke, **{"stroke-width": "2"})
        label = ET.SubElement(legend, "text", x=f"{x + 22:.0f}", y=f"{y + 11:.0f}",
                              **{"font-family": "sans-serif", "font-size": "13"})
        label.text = text
        x += 40 + 8 * len(text)
    if result is not None:
        cap = ET.SubElement(legend, "text", x=f"{_MARGIN:.0f}", y=f"{y + 34:.0f}",
                            **{"font-family": "sans-serif", "font-size": "13"})
        cap.text = f"{result.method}: {result.n_views} views, {result.path_length_m:.1f} m, {len(result.targets)} targets"
    out = Path(out)
    ET.ElementTree(svg).write(out, encoding="utf-8", xml_declaration=True)
    return out
