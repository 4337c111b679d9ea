# Prior path over the T1 scene of the bundled "five_changes" pair.
import numpy as np

from sceneupdate import PlannerConfig, load_bundled
from sceneupdate.changeability import ScoreParams, prior_importance
from sceneupdate.prior import plan_prior

t1, t2 = load_bundled("five_changes")
cfg = PlannerConfig()
print(len(t1.prisms), "prisms, bounds", t1.bounds)

plan = plan_prior(t1, cfg)
print(len(plan.samples), "surface samples,", len(plan.candidates), "candidate views")
print("kept", len(plan.views), "views,", int((~plan.coverable).sum()), "samples nobody can see")

# every coverable sample keeps at least one observer
counts = plan.visibility.sum(axis=0)
print("min observers of a coverable sample:", counts[plan.coverable].min())

# the views that survive are the ones carrying the most prior weight
g = prior_importance(plan.visibility, plan.samples.q, ScoreParams.from_config(cfg))
for v, gi in sorted(zip(plan.views, g), key=lambda t: -t[1])[:5]:
    print(f"  view {v.id:5d} {v.rig_slot:6s} at ({v.position[0]:6.1f}, {v.position[2]:6.1f})  g = {gi:.3f}")

# how much 2-opt/Or-opt saved over plain nearest neighbour
from sceneupdate.prior import path_length, tour_order

pos = np.array([v.position for v in plan.ordered_views])
nn, best = tour_order(pos, 0)
print(f"tour: nearest neighbour {path_length(pos[nn]):.0f} m, improved {path_length(pos[best]):.0f} m")
print("route:", plan.trajectory.view_ids)
