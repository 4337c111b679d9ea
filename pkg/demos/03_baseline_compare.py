# Our mission against the grid-sweep baseline at a few grid sizes.
from pathlib import Path

from sceneupdate import PlannerConfig, load_bundled
from sceneupdate.baseline import baseline_rd
from sceneupdate.metrics import evaluate_mission, format_table
from sceneupdate.realtime import run_mission
from sceneupdate.render import render_svg

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

t1, t2 = load_bundled("five_changes")
cfg = PlannerConfig()

runs = [run_mission(t1, t2, cfg)]
runs += [baseline_rd(t1, t2, frac, cfg) for frac in (1 / 2, 1 / 3, 1 / 4)]
reports = [evaluate_mission(r, t1, t2) for r in runs]
print(format_table(reports))

ours, rd3 = reports[0], reports[2]
print(f"views: {ours.n_views} vs {rd3.n_views} ({1 - ours.n_views / rd3.n_views:+.0%} cut)")
print(f"path:  {ours.path_len_m:.0f} m vs {rd3.path_len_m:.0f} m ({1 - ours.path_len_m / rd3.path_len_m:+.0%} cut)")

# RD reuses one position for its four tilted shots, so its hops are only
# the cell pitch; our tilted views sit up to h*tan(alpha) off the scene.
render_svg(runs[2], (t1, t2), out / "rd_third.svg")
