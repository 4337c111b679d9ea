# Fly the change-detection mission on "five_changes", noiseless then noisy,
# and draw the noiseless one.
from pathlib import Path

from sceneupdate import PlannerConfig, load_bundled
from sceneupdate.metrics import evaluate_mission, format_table
from sceneupdate.oracle import OracleNoise
from sceneupdate.prior import plan_prior
from sceneupdate.realtime import run_mission
from sceneupdate.render import render_svg

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)

t1, t2 = load_bundled("five_changes")
cfg = PlannerConfig()
plan = plan_prior(t1, cfg)

clean = run_mission(t1, t2, cfg, plan=plan)
for s in clean.steps[:12]:
    gain = "" if s.gain is None else f"gain {s.gain:9.2f}"
    print(f"step {s.step_index:2d}  view {s.view_id:5d}  {s.mode:6s} {gain}")
print("...")

noisy = run_mission(t1, t2, cfg, OracleNoise(dropout_prob=0.3, jitter_sigma=0.5, seed=7), plan=plan)
noisy.method = "ours (noisy)"

reports = [evaluate_mission(r, t1, t2) for r in (clean, noisy)]
print(format_table(reports))

render_svg(clean, (t1, t2), out / "mission.svg")
clean.save(out / "mission.json")
print("wrote", out / "mission.svg")
